#include "doctest.h"

#include "cpga/data.hpp"
#include "cpga/error.hpp"
#include "cpga/vcpf.hpp"

#include <filesystem>
#include <fstream>

using namespace cpga;

namespace {

vcpf::Container encode_toy(int w, int h, int frames, int qp, int block = 16, std::uint64_t seed = 3) {
    const auto raw = data::make_toy_sequence(w, h, frames, seed);
    const auto padded = codec::pad_to_block_grid(raw, block);
    const codec::CodecConfig cfg{block, 8, qp};
    auto r = codec::encode_sequence(padded.sequence, cfg);
    return {std::move(r.lq), std::move(r.priors), cfg, padded.orig_width, padded.orig_height};
}

std::uint16_t read_u16(const std::vector<std::uint8_t>& b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

template <typename Fn>
ParseError parse_error_of(Fn fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e;
    }
    FAIL("expected a ParseError");
    return ParseError("", 0, "");
}

}  // namespace

TEST_CASE("VCPF byte layout") {
    const auto c = encode_toy(64, 64, 7, 37);
    const auto bytes = vcpf::serialize(c);
    // Header: magic (4) + six u16 fields (12) + three u8 fields (3).
    CHECK(vcpf::kHeaderBytes == 4 + 6 * 2 + 3);
    CHECK(bytes.size() == vcpf::kHeaderBytes + 7 * (1 + 16 * 2 * 2 + 4096 + 8192 + 4096));
    CHECK(bytes.size() == vcpf::expected_size(64, 64, 7, 16));
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "VCPF");
    CHECK(read_u16(bytes, 4) == 1);
    CHECK(read_u16(bytes, 6) == 64);
    CHECK(read_u16(bytes, 8) == 64);
    CHECK(read_u16(bytes, 10) == 64);
    CHECK(read_u16(bytes, 12) == 64);
    CHECK(read_u16(bytes, 14) == 7);
    CHECK(bytes[16] == 16);
    CHECK(bytes[17] == 37);
    CHECK(bytes[18] == 8);
    CHECK(bytes[19] == 0);  // frame 0 is intra

    // First inter frame: type byte, then the MV grid as little-endian i16 pairs.
    const std::size_t f1 = vcpf::kHeaderBytes + vcpf::frame_bytes(64, 64, 16);
    CHECK(bytes[f1] == 1);
    const auto& mv = c.priors.frames[1].mv;
    for (int i = 0; i < 16; ++i) {
        CHECK(static_cast<std::int16_t>(read_u16(bytes, f1 + 1 + 4 * i)) == mv.vectors[i].dx);
        CHECK(static_cast<std::int16_t>(read_u16(bytes, f1 + 3 + 4 * i)) == mv.vectors[i].dy);
    }
    const std::size_t pred_at = f1 + 1 + 64;
    CHECK(bytes[pred_at + 5] == c.priors.frames[1].predictive.data[5]);
    const std::size_t resid_at = pred_at + 4096;
    CHECK(static_cast<std::int16_t>(read_u16(bytes, resid_at + 2 * 77)) == c.priors.frames[1].residual.data[77]);
    const std::size_t recon_at = resid_at + 8192;
    CHECK(bytes[recon_at + 123] == c.lq.frames[1].data[123]);
}

TEST_CASE("VCPF round trip") {
    SUBCASE("2-frame 32x32") {
        const auto c = encode_toy(32, 32, 2, 22);
        const auto back = vcpf::parse(vcpf::serialize(c));
        CHECK(back == c);
    }
    SUBCASE("padded dims and block 8 survive a file round trip") {
        const auto c = encode_toy(60, 50, 3, 27, 8);
        CHECK(c.lq.width == 64);
        CHECK(c.lq.height == 56);
        const auto path = std::filesystem::temp_directory_path() / "cpga_vcpf_roundtrip.vcpf";
        vcpf::write_file(c, path);
        const auto back = vcpf::read_file(path);
        CHECK(back == c);
        CHECK(back.orig_width == 60);
        CHECK(back.orig_height == 50);
        std::filesystem::remove(path);
    }
    SUBCASE("encoding twice gives identical bytes") {
        CHECK(vcpf::serialize(encode_toy(48, 32, 3, 32)) == vcpf::serialize(encode_toy(48, 32, 3, 32)));
    }
}

TEST_CASE("VCPF parse errors name the field and offset") {
    const auto bytes = vcpf::serialize(encode_toy(32, 32, 2, 37));

    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = 'X';
        const auto e = parse_error_of([&] { vcpf::parse(b); });
        CHECK(e.field() == "magic");
        CHECK(e.offset() == 0);
    }
    SUBCASE("bad version") {
        auto b = bytes;
        b[4] = 2;
        const auto e = parse_error_of([&] { vcpf::parse(b); });
        CHECK(e.field() == "version");
        CHECK(e.offset() == 4);
    }
    SUBCASE("truncated mid-plane") {
        std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + bytes.size() - 100);
        const auto e = parse_error_of([&] { vcpf::parse(b); });
        const std::string msg = e.what();
        CHECK(msg.find("truncated") != std::string::npos);
        CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
        CHECK(msg.find(std::to_string(b.size())) != std::string::npos);
    }
    SUBCASE("truncated header") {
        std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + 10);
        CHECK_THROWS_AS(vcpf::parse(b), ParseError);
    }
    SUBCASE("trailing bytes") {
        auto b = bytes;
        b.push_back(0);
        CHECK_THROWS_AS(vcpf::parse(b), ParseError);
    }
    SUBCASE("invalid frame type") {
        auto b = bytes;
        b[vcpf::kHeaderBytes] = 7;
        const auto e = parse_error_of([&] { vcpf::parse(b); });
        CHECK(e.offset() == vcpf::kHeaderBytes);
    }
    SUBCASE("unsupported qp in header") {
        auto b = bytes;
        b[17] = 30;
        const auto e = parse_error_of([&] { vcpf::parse(b); });
        CHECK(e.offset() == 17);
    }
}
