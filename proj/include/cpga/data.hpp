#pragma once

// Dataset ingestion and sampling: raw planar luma files, raw/VCPF pairing,
// 2T+1-frame windows with edge replication, dense MV maps, crops and flips,
// and padding for evaluation.

#include "cpga/codec.hpp"
#include "cpga/model.hpp"
#include "cpga/vcpf.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace cpga::data {

using ClipSample = ClipBatch<float>;  // a batch holding exactly one clip

/// ASCII sidecar "W H F\n" stored next to a raw file as <raw>.hdr.
struct RawHeader {
    int width = 0;
    int height = 0;
    int frames = 0;
};

std::filesystem::path sidecar_path(const std::filesystem::path& raw);
RawHeader read_sidecar(const std::filesystem::path& raw);
void write_sidecar(const std::filesystem::path& raw, const RawHeader& h);

/// Planar 8-bit luma, frames back to back. frames == 0 infers the count from
/// the file size (which must then be a whole number of frames).
codec::LumaSequence read_raw(const std::filesystem::path& path, int width, int height, int frames = 0);
/// Dimensions from the sidecar header.
codec::LumaSequence read_raw(const std::filesystem::path& path);
void write_raw(const codec::LumaSequence& seq, const std::filesystem::path& path, bool with_sidecar = true);

/// Ground truth aligned with its LQ sequence and priors, all at the original
/// (unpadded) dimensions. MV grids keep their full block grid.
struct PairedSequence {
    codec::LumaSequence raw;
    codec::LumaSequence lq;
    codec::CodingPriors priors;
    codec::CodecConfig config;
    std::string raw_path;
    std::string vcpf_path;

    int width() const { return raw.width; }
    int height() const { return raw.height; }
    int frames() const { return static_cast<int>(raw.frames.size()); }
};

/// Crops the container's planes to its original dimensions and checks them
/// against `raw`.
PairedSequence make_pair(codec::LumaSequence raw, const vcpf::Container& container);
PairedSequence load_pair(const std::filesystem::path& raw_path, const std::filesystem::path& vcpf_path);

struct ManifestEntry {
    std::filesystem::path raw;
    std::filesystem::path vcpf;
};

/// One `raw_path vcpf_path` record per line; `#` starts a comment. Relative
/// paths resolve against the manifest's directory.
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::filesystem::path& base = {});
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Source frame indices of the window centered at t, edge-replicated.
std::vector<int> window_indices(int t, int radius, int frames);

/// Dense (1, 2, H, W) map: nearest-block expansion, cropped to H x W, divided
/// by the search range. Channel 0 holds dx, channel 1 dy.
nn::Tensor<float> expand_mv(const codec::MotionVectorField& field, int height, int width, int search_range);

/// Builds the network inputs for the window centered at t. The first window
/// position always carries a zero MV map.
ClipSample window(const PairedSequence& seq, int t, int radius);

struct Augment {
    int crop_x = 0;
    int crop_y = 0;
    int crop = 0;  // 0 = full frame
    bool flip_h = false;
    bool flip_v = false;
};

/// Spatial crop of every plane; `crop` must be divisible by 4 and fit.
ClipSample crop(const ClipSample& s, int x, int y, int width, int height);
/// Mirrors every plane; the matching MV component changes sign.
ClipSample flip(const ClipSample& s, bool horizontal, bool vertical);
ClipSample apply(const ClipSample& s, const Augment& a);

/// Draws a crop window inside the sample and independent H/V flips.
Augment draw_augment(int height, int width, int crop, bool flips, std::mt19937_64& rng);
ClipSample crop_and_augment(const ClipSample& s, int crop, std::mt19937_64& rng, bool flips = true);

struct PaddedSample {
    ClipSample sample;
    int orig_width = 0;
    int orig_height = 0;
};

/// Replicates the last row/column until H and W are multiples of 4.
PaddedSample pad_for_eval(const ClipSample& s);
/// Top-left crop of an (N, C, H, W) tensor.
nn::Tensor<float> crop_tensor(const nn::Tensor<float>& t, int width, int height);

/// Concatenates single-clip samples along the batch axis.
ClipBatch<float> collate(const std::vector<ClipSample>& samples);

/// Plane conversions between 8-bit storage and network units.
nn::Tensor<float> to_tensor(const codec::Plane8& p);
/// clamp to [0, 1], scale by 255, round half up.
std::uint8_t export_value(float v);
codec::Plane8 export_plane(const nn::Tensor<float>& t, int n = 0, int c = 0);

/// Synthetic test content: a smooth random texture panned with a constant
/// velocity plus an independently moving textured square. Deterministic in
/// `seed`.
codec::LumaSequence make_toy_sequence(int width, int height, int frames, std::uint64_t seed);

}  // namespace cpga::data
