#include "cpga/data.hpp"

#include "cpga/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace cpga::data {

namespace fs = std::filesystem;
using codec::LumaSequence;
using codec::Plane8;
using nn::Shape;
using nn::Tensor;

fs::path sidecar_path(const fs::path& raw) {
    fs::path p = raw;
    p += ".hdr";
    return p;
}

RawHeader read_sidecar(const fs::path& raw) {
    const auto path = sidecar_path(raw);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sidecar header " + path.string());
    RawHeader h;
    if (!(in >> h.width >> h.height >> h.frames) || h.width <= 0 || h.height <= 0 || h.frames <= 0)
        throw InvalidArgument("sidecar " + path.string() + " must hold three positive integers 'W H F'");
    return h;
}

void write_sidecar(const fs::path& raw, const RawHeader& h) {
    std::ofstream out(sidecar_path(raw));
    out << h.width << ' ' << h.height << ' ' << h.frames << '\n';
    if (!out) throw std::runtime_error("cannot write sidecar for " + raw.string());
}

LumaSequence read_raw(const fs::path& path, int width, int height, int frames) {
    if (width <= 0 || height <= 0) throw InvalidArgument("raw dimensions must be positive");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open raw file " + path.string());
    const std::size_t size = fs::file_size(path);
    const std::size_t fb = static_cast<std::size_t>(width) * height;
    if (frames <= 0) {
        if (size == 0 || size % fb != 0)
            throw InvalidArgument(path.string() + ": size " + std::to_string(size) +
                                  " is not a whole number of " + std::to_string(width) + "x" +
                                  std::to_string(height) + " frames");
        frames = static_cast<int>(size / fb);
    } else if (size < fb * frames) {
        throw InvalidArgument(path.string() + ": expected " + std::to_string(fb * frames) + " bytes, file has " +
                              std::to_string(size));
    }
    LumaSequence seq{width, height, {}};
    seq.frames.reserve(frames);
    for (int f = 0; f < frames; ++f) {
        Plane8 p(width, height);
        in.read(reinterpret_cast<char*>(p.data.data()), static_cast<std::streamsize>(fb));
        seq.frames.push_back(std::move(p));
    }
    return seq;
}

LumaSequence read_raw(const fs::path& path) {
    const auto h = read_sidecar(path);
    return read_raw(path, h.width, h.height, h.frames);
}

void write_raw(const LumaSequence& seq, const fs::path& path, bool with_sidecar) {
    seq.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write raw file " + path.string());
    for (const auto& f : seq.frames)
        out.write(reinterpret_cast<const char*>(f.data.data()), static_cast<std::streamsize>(f.data.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
    if (with_sidecar) write_sidecar(path, {seq.width, seq.height, static_cast<int>(seq.frames.size())});
}

namespace {

template <typename P>
P crop_plane(const P& src, int width, int height) {
    P out(width, height);
    for (int y = 0; y < height; ++y)
        std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(y) * src.width, width,
                    out.data.begin() + static_cast<std::ptrdiff_t>(y) * width);
    return out;
}

}  // namespace

PairedSequence make_pair(LumaSequence raw, const vcpf::Container& c) {
    raw.validate();
    if (raw.width != c.orig_width || raw.height != c.orig_height)
        throw InvalidArgument("raw is " + std::to_string(raw.width) + "x" + std::to_string(raw.height) +
                              " but the container records original dims " + std::to_string(c.orig_width) + "x" +
                              std::to_string(c.orig_height));
    if (raw.frames.size() != c.lq.frames.size())
        throw InvalidArgument("raw has " + std::to_string(raw.frames.size()) + " frames, container has " +
                              std::to_string(c.lq.frames.size()));
    PairedSequence p;
    p.config = c.config;
    p.lq = codec::crop_sequence(c.lq, c.orig_width, c.orig_height);
    p.priors.frames.reserve(c.priors.frames.size());
    for (const auto& f : c.priors.frames) {
        codec::FramePriors q;
        q.type = f.type;
        q.mv = f.mv;
        q.predictive = crop_plane(f.predictive, c.orig_width, c.orig_height);
        q.residual = crop_plane(f.residual, c.orig_width, c.orig_height);
        p.priors.frames.push_back(std::move(q));
    }
    p.raw = std::move(raw);
    return p;
}

PairedSequence load_pair(const fs::path& raw_path, const fs::path& vcpf_path) {
    const auto container = vcpf::read_file(vcpf_path);
    auto raw = fs::exists(sidecar_path(raw_path))
                   ? read_raw(raw_path)
                   : read_raw(raw_path, container.orig_width, container.orig_height,
                              static_cast<int>(container.lq.frames.size()));
    auto p = make_pair(std::move(raw), container);
    p.raw_path = raw_path.string();
    p.vcpf_path = vcpf_path.string();
    return p;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text, const fs::path& base) {
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto resolve = [&](const std::string& s) {
        fs::path p(s);
        return p.is_relative() && !base.empty() ? base / p : p;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string raw, vc, extra;
        if (!(ls >> raw)) continue;
        if (!(ls >> vc) || (ls >> extra))
            throw InvalidArgument("manifest line " + std::to_string(lineno) + ": expected 'raw_path vcpf_path'");
        out.push_back({resolve(raw), resolve(vc)});
    }
    return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    std::ofstream out(path);
    out << "# raw_path vcpf_path\n";
    for (const auto& e : entries) out << e.raw.string() << ' ' << e.vcpf.string() << '\n';
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
}

std::vector<int> window_indices(int t, int radius, int frames) {
    if (frames <= 0 || t < 0 || t >= frames)
        throw InvalidArgument("window center " + std::to_string(t) + " outside [0, " + std::to_string(frames) + ")");
    std::vector<int> idx;
    idx.reserve(2 * radius + 1);
    for (int i = t - radius; i <= t + radius; ++i) idx.push_back(std::clamp(i, 0, frames - 1));
    return idx;
}

Tensor<float> expand_mv(const codec::MotionVectorField& field, int height, int width, int search_range) {
    if (search_range <= 0) throw InvalidArgument("search range must be positive");
    if (field.cols * field.block_size < width || field.rows * field.block_size < height)
        throw InvalidArgument("MV grid does not cover the requested dimensions");
    Tensor<float> out(Shape{1, 2, height, width});
    const float inv = 1.0f / static_cast<float>(search_range);
    float* dx = out.plane(0, 0);
    float* dy = out.plane(0, 1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const auto& mv = field.at(x / field.block_size, y / field.block_size);
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            dx[i] = static_cast<float>(mv.dx) * inv;
            dy[i] = static_cast<float>(mv.dy) * inv;
        }
    return out;
}

Tensor<float> to_tensor(const Plane8& p) {
    Tensor<float> t(Shape{1, 1, p.height, p.width});
    for (std::size_t i = 0; i < p.data.size(); ++i) t.data[i] = static_cast<float>(p.data[i]) / 255.0f;
    return t;
}

std::uint8_t export_value(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Plane8 export_plane(const Tensor<float>& t, int n, int c) {
    Plane8 p(t.shape.w, t.shape.h);
    const float* src = t.plane(n, c);
    for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = export_value(src[i]);
    return p;
}

ClipSample window(const PairedSequence& seq, int t, int radius) {
    const int F = 2 * radius + 1;
    const int H = seq.height(), W = seq.width();
    const auto idx = window_indices(t, radius, seq.frames());
    const auto plane = static_cast<std::size_t>(H) * W;
    ClipSample s;
    s.frames = F;
    s.lq = Tensor<float>(Shape{F, 1, H, W});
    s.pred = Tensor<float>(Shape{F, 1, H, W});
    s.mv = Tensor<float>(Shape{F, 2, H, W});
    for (int i = 0; i < F; ++i) {
        const int src = idx[i];
        const auto& lq = seq.lq.frames[src];
        const auto& pr = seq.priors.frames[src];
        for (std::size_t k = 0; k < plane; ++k) {
            s.lq.plane(i, 0)[k] = static_cast<float>(lq.data[k]) / 255.0f;
            s.pred.plane(i, 0)[k] = static_cast<float>(pr.predictive.data[k]) / 255.0f;
        }
        if (i == 0) continue;  // the first aligned feature needs no motion
        const auto m = expand_mv(pr.mv, H, W, seq.config.search_range);
        std::copy(m.data.begin(), m.data.end(), s.mv.plane(i, 0));
    }
    s.residual = Tensor<float>(Shape{1, 1, H, W});
    s.gt = Tensor<float>(Shape{1, 1, H, W});
    const auto& res = seq.priors.frames[t].residual;
    const auto& gt = seq.raw.frames[t];
    for (std::size_t k = 0; k < plane; ++k) {
        s.residual.data[k] = static_cast<float>(res.data[k]) / 255.0f;
        s.gt.data[k] = static_cast<float>(gt.data[k]) / 255.0f;
    }
    return s;
}

namespace {

Tensor<float> crop_t(const Tensor<float>& t, int x0, int y0, int w, int h) {
    Tensor<float> out(Shape{t.shape.n, t.shape.c, h, w});
    for (int n = 0; n < t.shape.n; ++n)
        for (int c = 0; c < t.shape.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < h; ++y)
                std::copy_n(src + static_cast<std::size_t>(y + y0) * t.shape.w + x0, w,
                            dst + static_cast<std::size_t>(y) * w);
        }
    return out;
}

// Mirrors each plane. For MV maps, the component along a mirrored axis changes
// sign (channel 0 is dx, channel 1 dy).
Tensor<float> flip_t(const Tensor<float>& t, bool h, bool v, bool is_mv) {
    Tensor<float> out(t.shape);
    const int H = t.shape.h, W = t.shape.w;
    for (int n = 0; n < t.shape.n; ++n)
        for (int c = 0; c < t.shape.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            const bool negate = is_mv && ((c == 0 && h) || (c == 1 && v));
            const float sign = negate ? -1.0f : 1.0f;
            for (int y = 0; y < H; ++y) {
                const int sy = v ? H - 1 - y : y;
                for (int x = 0; x < W; ++x) {
                    const int sx = h ? W - 1 - x : x;
                    dst[static_cast<std::size_t>(y) * W + x] = sign * src[static_cast<std::size_t>(sy) * W + sx];
                }
            }
        }
    return out;
}

Tensor<float> pad_t(const Tensor<float>& t, int w, int h) {
    Tensor<float> out(Shape{t.shape.n, t.shape.c, h, w});
    for (int n = 0; n < t.shape.n; ++n)
        for (int c = 0; c < t.shape.c; ++c) {
            const float* src = t.plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < h; ++y) {
                const int sy = std::min(y, t.shape.h - 1);
                for (int x = 0; x < w; ++x)
                    dst[static_cast<std::size_t>(y) * w + x] =
                        src[static_cast<std::size_t>(sy) * t.shape.w + std::min(x, t.shape.w - 1)];
            }
        }
    return out;
}

template <typename Fn>
ClipSample map_planes(const ClipSample& s, Fn fn) {
    ClipSample o;
    o.frames = s.frames;
    o.lq = fn(s.lq, false);
    o.pred = fn(s.pred, false);
    o.mv = fn(s.mv, true);
    o.residual = fn(s.residual, false);
    if (!s.gt.empty()) o.gt = fn(s.gt, false);
    return o;
}

}  // namespace

ClipSample crop(const ClipSample& s, int x, int y, int width, int height) {
    const auto& sh = s.lq.shape;
    if (x < 0 || y < 0 || width <= 0 || height <= 0 || x + width > sh.w || y + height > sh.h)
        throw InvalidArgument("crop " + std::to_string(width) + "x" + std::to_string(height) + " at (" +
                              std::to_string(x) + "," + std::to_string(y) + ") exceeds the " +
                              std::to_string(sh.w) + "x" + std::to_string(sh.h) + " frame");
    return map_planes(s, [&](const Tensor<float>& t, bool) { return crop_t(t, x, y, width, height); });
}

ClipSample flip(const ClipSample& s, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return s;
    return map_planes(s, [&](const Tensor<float>& t, bool is_mv) { return flip_t(t, horizontal, vertical, is_mv); });
}

ClipSample apply(const ClipSample& s, const Augment& a) {
    const ClipSample c = a.crop > 0 ? crop(s, a.crop_x, a.crop_y, a.crop, a.crop) : s;
    return flip(c, a.flip_h, a.flip_v);
}

Augment draw_augment(int height, int width, int crop_size, bool flips, std::mt19937_64& rng) {
    if (crop_size <= 0 || crop_size % 4 != 0) throw InvalidArgument("crop size must be a positive multiple of 4");
    if (crop_size > height || crop_size > width)
        throw InvalidArgument("crop " + std::to_string(crop_size) + " is larger than the " + std::to_string(width) +
                              "x" + std::to_string(height) + " frame");
    Augment a;
    a.crop = crop_size;
    a.crop_x = std::uniform_int_distribution<int>(0, width - crop_size)(rng);
    a.crop_y = std::uniform_int_distribution<int>(0, height - crop_size)(rng);
    if (flips) {
        std::bernoulli_distribution coin(0.5);
        a.flip_h = coin(rng);
        a.flip_v = coin(rng);
    }
    return a;
}

ClipSample crop_and_augment(const ClipSample& s, int crop_size, std::mt19937_64& rng, bool flips) {
    return apply(s, draw_augment(s.lq.shape.h, s.lq.shape.w, crop_size, flips, rng));
}

PaddedSample pad_for_eval(const ClipSample& s) {
    const int h = s.lq.shape.h, w = s.lq.shape.w;
    const int ph = (h + 3) / 4 * 4, pw = (w + 3) / 4 * 4;
    PaddedSample out{s, w, h};
    if (ph == h && pw == w) return out;
    out.sample = map_planes(s, [&](const Tensor<float>& t, bool) { return pad_t(t, pw, ph); });
    return out;
}

Tensor<float> crop_tensor(const Tensor<float>& t, int width, int height) {
    if (width > t.shape.w || height > t.shape.h) throw InvalidArgument("crop_tensor: target larger than source");
    if (width == t.shape.w && height == t.shape.h) return t;
    return crop_t(t, 0, 0, width, height);
}

ClipBatch<float> collate(const std::vector<ClipSample>& samples) {
    if (samples.empty()) throw InvalidArgument("cannot collate an empty batch");
    const auto& first = samples.front();
    auto join = [&](auto member) {
        const Tensor<float>& f = first.*member;
        Shape s = f.shape;
        s.n = 0;
        for (const auto& x : samples) {
            const Tensor<float>& t = x.*member;
            if (t.shape.c != f.shape.c || t.shape.h != f.shape.h || t.shape.w != f.shape.w)
                throw InvalidArgument("collate: samples differ in shape");
            s.n += t.shape.n;
        }
        Tensor<float> out(s);
        auto it = out.data.begin();
        for (const auto& x : samples) it = std::copy((x.*member).data.begin(), (x.*member).data.end(), it);
        return out;
    };
    ClipBatch<float> b;
    b.frames = first.frames;
    for (const auto& x : samples)
        if (x.frames != first.frames) throw InvalidArgument("collate: samples differ in window length");
    b.lq = join(&ClipSample::lq);
    b.pred = join(&ClipSample::pred);
    b.mv = join(&ClipSample::mv);
    b.residual = join(&ClipSample::residual);
    if (!first.gt.empty()) b.gt = join(&ClipSample::gt);
    return b;
}

LumaSequence make_toy_sequence(int width, int height, int frames, std::uint64_t seed) {
    if (width <= 0 || height <= 0 || frames <= 0) throw InvalidArgument("toy sequence dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    struct Wave { double fx, fy, phase, amp; };
    struct Rect { double x0, y0, x1, y1, level; };
    auto make_texture = [&](int waves, int rects, double extent) {
        std::vector<Wave> ws;
        for (int i = 0; i < waves; ++i) {
            const double f = 0.02 + 0.16 * unit(rng);
            const double a = two_pi * unit(rng);
            ws.push_back({f * std::cos(a), f * std::sin(a), two_pi * unit(rng), 12.0 + 22.0 * unit(rng)});
        }
        std::vector<Rect> rs;
        for (int i = 0; i < rects; ++i) {
            const double x = extent * unit(rng), y = extent * unit(rng);
            const double w = 4.0 + 18.0 * unit(rng), h = 4.0 + 18.0 * unit(rng);
            rs.push_back({x, y, x + w, y + h, (unit(rng) - 0.5) * 120.0});
        }
        return std::make_pair(ws, rs);
    };
    auto eval = [](const std::vector<Wave>& ws, const std::vector<Rect>& rs, double x, double y) {
        double v = 0.0;
        for (const auto& w : ws) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
        for (const auto& r : rs)
            if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) v += r.level;
        return v;
    };

    const double extent = std::max(width, height) + 32.0 * frames;
    const auto [bg_waves, bg_rects] = make_texture(6, 10 + width * height / 400, extent);
    const auto [fg_waves, fg_rects] = make_texture(4, 4, 48.0);
    const double base = 96.0 + 64.0 * unit(rng);
    auto velocity = [&](int max) { return std::uniform_int_distribution<int>(-max, max)(rng); };
    const int bvx = velocity(3), bvy = velocity(3);
    const int fvx = velocity(4), fvy = velocity(4);
    const double side = std::min(width, height) * (0.3 + 0.2 * unit(rng));
    const double fx0 = (width - side) * unit(rng), fy0 = (height - side) * unit(rng);
    const double fg_offset = (unit(rng) - 0.5) * 80.0;

    LumaSequence seq{width, height, {}};
    for (int t = 0; t < frames; ++t) {
        Plane8 p(width, height);
        const double ox = 16.0 * frames + bvx * t, oy = 16.0 * frames + bvy * t;
        const double sx = fx0 + fvx * t, sy = fy0 + fvy * t;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double v = base + eval(bg_waves, bg_rects, x + ox, y + oy);
                const double lx = x - sx, ly = y - sy;
                if (lx >= 0 && lx < side && ly >= 0 && ly < side)
                    v = base + fg_offset + eval(fg_waves, fg_rects, lx, ly);
                p(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        seq.frames.push_back(std::move(p));
    }
    return seq;
}

}  // namespace cpga::data
