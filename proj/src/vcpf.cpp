#include "cpga/vcpf.hpp"

#include "cpga/error.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <string>

namespace cpga::vcpf {

namespace {

class Writer {
public:
    explicit Writer(std::size_t reserve) { buf_.reserve(reserve); }

    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
    void bytes(std::span<const std::uint8_t> s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> s) : s_(s) {}

    std::size_t offset() const { return pos_; }

    void need(std::size_t n, const char* field) const {
        if (pos_ + n > s_.size())
            throw ParseError(field, pos_,
                             "truncated: expected " + std::to_string(pos_ + n) + " bytes, file has " +
                                 std::to_string(s_.size()));
    }
    std::uint8_t u8(const char* field) {
        need(1, field);
        return s_[pos_++];
    }
    std::uint16_t u16(const char* field) {
        need(2, field);
        const std::uint16_t v = static_cast<std::uint16_t>(s_[pos_] | (s_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::int16_t i16(const char* field) { return static_cast<std::int16_t>(u16(field)); }
    std::span<const std::uint8_t> bytes(std::size_t n, const char* field) {
        need(n, field);
        auto out = s_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

private:
    std::span<const std::uint8_t> s_;
    std::size_t pos_ = 0;
};

std::uint16_t checked_u16(int v, const char* what) {
    if (v < 0 || v > 0xffff) throw InvalidArgument(std::string(what) + " does not fit in u16");
    return static_cast<std::uint16_t>(v);
}

}  // namespace

std::size_t frame_bytes(int width, int height, int block) {
    const std::size_t cols = (width + block - 1) / block;
    const std::size_t rows = (height + block - 1) / block;
    const std::size_t px = static_cast<std::size_t>(width) * height;
    return 1 + cols * rows * 4 + px + 2 * px + px;
}

std::size_t expected_size(int width, int height, int frames, int block) {
    return kHeaderBytes + static_cast<std::size_t>(frames) * frame_bytes(width, height, block);
}

std::vector<std::uint8_t> serialize(const Container& c) {
    c.config.validate();
    c.lq.validate();
    const int W = c.lq.width;
    const int H = c.lq.height;
    const int B = c.config.block_size;
    const int F = static_cast<int>(c.lq.frames.size());
    if (c.priors.frames.size() != c.lq.frames.size())
        throw InvalidArgument("prior count does not match frame count");
    if (W % B != 0 || H % B != 0) throw InvalidArgument("container dimensions must be block aligned");
    if (c.orig_width <= 0 || c.orig_width > W || c.orig_height <= 0 || c.orig_height > H)
        throw InvalidArgument("original dimensions must lie within the padded dimensions");

    Writer w(expected_size(W, H, F, B));
    for (char ch : {'V', 'C', 'P', 'F'}) w.u8(static_cast<std::uint8_t>(ch));
    w.u16(kVersion);
    w.u16(checked_u16(W, "width"));
    w.u16(checked_u16(H, "height"));
    w.u16(checked_u16(c.orig_width, "orig width"));
    w.u16(checked_u16(c.orig_height, "orig height"));
    w.u16(checked_u16(F, "frame count"));
    w.u8(static_cast<std::uint8_t>(B));
    w.u8(static_cast<std::uint8_t>(c.config.qp));
    w.u8(static_cast<std::uint8_t>(c.config.search_range));

    for (int t = 0; t < F; ++t) {
        const auto& fp = c.priors.frames[t];
        const codec::MotionVectorField expect(B, W, H);
        if (fp.mv.cols != expect.cols || fp.mv.rows != expect.rows ||
            fp.mv.vectors.size() != expect.vectors.size())
            throw InvalidArgument("MV grid of frame " + std::to_string(t) + " has the wrong shape");
        if (fp.predictive.width != W || fp.predictive.height != H || fp.residual.width != W ||
            fp.residual.height != H)
            throw InvalidArgument("prior planes of frame " + std::to_string(t) + " have the wrong shape");
        w.u8(static_cast<std::uint8_t>(fp.type));
        for (const auto& mv : fp.mv.vectors) {
            w.i16(mv.dx);
            w.i16(mv.dy);
        }
        w.bytes(fp.predictive.data);
        for (auto r : fp.residual.data) w.i16(r);
        w.bytes(c.lq.frames[t].data);
    }
    return w.take();
}

Container parse(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    auto magic = r.bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), "VCPF"))
        throw ParseError("magic", 0, "bad magic, expected \"VCPF\"");
    const std::size_t version_off = r.offset();
    const auto version = r.u16("version");
    if (version != kVersion)
        throw ParseError("version", version_off,
                         "unsupported version " + std::to_string(version) + ", expected 1");

    Container c;
    const int W = r.u16("width");
    const int H = r.u16("height");
    c.orig_width = r.u16("orig_width");
    c.orig_height = r.u16("orig_height");
    const int F = r.u16("frames");
    const std::size_t block_off = r.offset();
    c.config.block_size = r.u8("block_size");
    const std::size_t qp_off = r.offset();
    c.config.qp = r.u8("qp");
    c.config.search_range = r.u8("search_range");

    if (c.config.block_size != 8 && c.config.block_size != 16)
        throw ParseError("block_size", block_off, "must be 8 or 16, got " + std::to_string(c.config.block_size));
    try {
        codec::quant_step(c.config.qp);
    } catch (const InvalidArgument& e) {
        throw ParseError("qp", qp_off, e.what());
    }
    const int B = c.config.block_size;
    if (W == 0 || H == 0 || W % B != 0 || H % B != 0)
        throw ParseError("width", 6, "dimensions must be nonzero multiples of the block size");
    if (c.orig_width == 0 || c.orig_width > W || c.orig_height == 0 || c.orig_height > H)
        throw ParseError("orig_width", 10, "original dimensions must lie within the padded dimensions");
    if (F == 0) throw ParseError("frames", 14, "frame count must be nonzero");

    const std::size_t want = expected_size(W, H, F, B);
    if (bytes.size() < want)
        throw ParseError("frame data", bytes.size(),
                         "truncated: expected " + std::to_string(want) + " bytes, file has " +
                             std::to_string(bytes.size()));
    if (bytes.size() > want)
        throw ParseError("trailing data", want,
                         "expected " + std::to_string(want) + " bytes, file has " + std::to_string(bytes.size()));

    c.lq.width = W;
    c.lq.height = H;
    const std::size_t px = static_cast<std::size_t>(W) * H;
    for (int t = 0; t < F; ++t) {
        codec::FramePriors fp;
        const std::size_t type_off = r.offset();
        const auto type = r.u8("frame_type");
        if (type > 1) throw ParseError("frame_type", type_off, "must be 0 or 1, got " + std::to_string(type));
        fp.type = static_cast<codec::FrameType>(type);
        fp.mv = codec::MotionVectorField(B, W, H);
        for (auto& mv : fp.mv.vectors) {
            mv.dx = r.i16("mv");
            mv.dy = r.i16("mv");
        }
        auto pred = r.bytes(px, "predictive");
        fp.predictive = codec::Plane8(W, H);
        std::copy(pred.begin(), pred.end(), fp.predictive.data.begin());
        fp.residual = codec::Plane16(W, H);
        for (auto& v : fp.residual.data) v = r.i16("residual");
        auto rec = r.bytes(px, "reconstructed");
        codec::Plane8 lq(W, H);
        std::copy(rec.begin(), rec.end(), lq.data.begin());
        c.lq.frames.push_back(std::move(lq));
        c.priors.frames.push_back(std::move(fp));
    }
    return c;
}

void write_file(const Container& c, const std::filesystem::path& path) {
    const auto bytes = serialize(c);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

Container read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse(bytes);
}

}  // namespace cpga::vcpf
