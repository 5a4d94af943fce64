#pragma once

// VCPF container: LQ frames plus coding priors, fixed little-endian layout.
//
//   "VCPF" | u16 version=1 | u16 W | u16 H | u16 origW | u16 origH | u16 frames
//   | u8 block_size | u8 qp | u8 search_range
//   per frame: u8 frame_type (0 intra, 1 inter)
//              i16 (dx, dy) pairs, MV grid row-major
//              u8  predictive plane, row-major
//              i16 residual plane, row-major
//              u8  reconstructed plane, row-major

#include "cpga/codec.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpga::vcpf {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 19;

struct Container {
    codec::LumaSequence lq;  // padded dimensions
    codec::CodingPriors priors;
    codec::CodecConfig config;
    int orig_width = 0;
    int orig_height = 0;

    bool operator==(const Container&) const = default;
};

std::size_t frame_bytes(int width, int height, int block);
std::size_t expected_size(int width, int height, int frames, int block);

std::vector<std::uint8_t> serialize(const Container& c);
/// Throws cpga::ParseError naming the offending field and byte offset.
Container parse(std::span<const std::uint8_t> bytes);

void write_file(const Container& c, const std::filesystem::path& path);
Container read_file(const std::filesystem::path& path);

}  // namespace cpga::vcpf
