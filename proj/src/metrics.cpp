#include "cpga/metrics.hpp"

#include "cpga/error.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace cpga::metrics {

using codec::Plane8;

namespace {

void require_same_dims(const Plane8& a, const Plane8& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw InvalidArgument(std::string(what) + ": planes differ in size (" + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                              std::to_string(b.height) + ")");
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_1d() {
    std::vector<double> g(kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

// Valid-mode separable filtering of a W x H image; output (W-10) x (H-10).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& g) {
    const int ow = w - kWin + 1, oh = h - kWin + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWin; ++k) s += g[k] * img[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWin; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double psnr(const Plane8& a, const Plane8& b) {
    require_same_dims(a, b, "psnr");
    if (a.data.empty()) throw InvalidArgument("psnr: empty planes");
    std::uint64_t sse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const int d = static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]);
        sse += static_cast<std::uint64_t>(d * d);
    }
    if (sse == 0) return kInfinitePsnr;
    const double mse = static_cast<double>(sse) / static_cast<double>(a.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::vector<double> ssim_window() {
    const auto g = gaussian_1d();
    std::vector<double> w(kWin * kWin);
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) w[y * kWin + x] = g[y] * g[x];
    return w;
}

double ssim(const Plane8& a, const Plane8& b) {
    require_same_dims(a, b, "ssim");
    if (a.width < kWin || a.height < kWin)
        throw InvalidArgument("ssim: frame " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                              " is smaller than the 11x11 window");
    const int w = a.width, h = a.height;
    const std::size_t n = a.data.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = a.data[i];
        y[i] = b.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto g = gaussian_1d();
    const auto mx = filter_valid(x, w, h, g), my = filter_valid(y, w, h, g);
    const auto sxx = filter_valid(xx, w, h, g), syy = filter_valid(yy, w, h, g), sxy = filter_valid(xy, w, h, g);
    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

std::vector<double> SequenceReport::delta_psnr_series() const {
    std::vector<double> d;
    d.reserve(frames.size());
    for (const auto& f : frames) d.push_back(f.psnr_enh == f.psnr_lq ? 0.0 : f.psnr_enh - f.psnr_lq);
    return d;
}

void SequenceReport::summarise() {
    std::vector<double> pl, pe, sl, se, ds;
    for (const auto& f : frames) {
        pl.push_back(f.psnr_lq);
        pe.push_back(f.psnr_enh);
        sl.push_back(f.ssim_lq);
        se.push_back(f.ssim_enh);
        ds.push_back(f.ssim_enh == f.ssim_lq ? 0.0 : f.ssim_enh - f.ssim_lq);
    }
    mean_psnr_lq = mean_of(pl);
    mean_psnr_enh = mean_of(pe);
    mean_ssim_lq = mean_of(sl);
    mean_ssim_enh = mean_of(se);
    delta_psnr = mean_of(delta_psnr_series());
    delta_ssim = mean_of(ds);
}

EvalResult evaluate_sequence(const CpgaModel<float>& model, const data::PairedSequence& seq, const EvalOptions& opts) {
    const auto& cfg = model.config();
    if (cfg.search_range != seq.config.search_range)
        throw InvalidArgument("model expects MV maps normalised by search range " + std::to_string(cfg.search_range) +
                              ", sequence was coded with " + std::to_string(seq.config.search_range));
    const int total = seq.frames();
    if (opts.first_frame < 0 || opts.first_frame >= total)
        throw InvalidArgument("first frame " + std::to_string(opts.first_frame) + " outside the sequence");
    const int last = opts.frame_count > 0 ? std::min(total, opts.first_frame + opts.frame_count) : total;

    EvalResult out;
    out.report.parameter_count = model.parameter_count();
    out.enhanced = codec::LumaSequence{seq.width(), seq.height(), {}};
    double seconds = 0.0;
    nn::NoGradGuard no_grad;
    for (int t = opts.first_frame; t < last; ++t) {
        auto padded = data::pad_for_eval(data::window(seq, t, cfg.radius));
        padded.sample.gt = {};  // the network never sees ground truth
        const auto start = std::chrono::steady_clock::now();
        const auto y = model.forward(padded.sample);
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto enh = data::export_plane(data::crop_tensor(y.value(), padded.orig_width, padded.orig_height));
        const auto& gt = seq.raw.frames[t];
        const auto& lq = seq.lq.frames[t];
        out.report.frames.push_back({psnr(lq, gt), psnr(enh, gt), ssim(lq, gt), ssim(enh, gt)});
        if (opts.keep_enhanced) out.enhanced.frames.push_back(enh);
    }
    out.report.fps = seconds > 0.0 ? (last - opts.first_frame) / seconds : 0.0;
    out.report.summarise();
    return out;
}

SequenceReport combine(const std::vector<SequenceReport>& reports) {
    SequenceReport all;
    double secs = 0.0;
    for (const auto& r : reports) {
        all.frames.insert(all.frames.end(), r.frames.begin(), r.frames.end());
        if (r.fps > 0.0) secs += r.frames.size() / r.fps;
        all.parameter_count = r.parameter_count;
    }
    all.fps = secs > 0.0 ? all.frames.size() / secs : 0.0;
    all.summarise();
    return all;
}

namespace {

std::string fmt_db(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

void write_fluctuation_csv(const SequenceReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "frame,psnr_lq,psnr_enh\n";
    for (std::size_t i = 0; i < r.frames.size(); ++i)
        out << i << ',' << fmt_db(r.frames[i].psnr_lq) << ',' << fmt_db(r.frames[i].psnr_enh) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_fluctuation_plot(const SequenceReport& r, const std::filesystem::path& path, int width, int height) {
    if (width < 64 || height < 64) throw InvalidArgument("plot must be at least 64x64");
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 255);
    auto put = [&](int x, int y, std::array<std::uint8_t, 3> c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        std::copy(c.begin(), c.end(), rgb.begin() + (static_cast<std::size_t>(y) * width + x) * 3);
    };
    auto line = [&](int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            put(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    };
    const int left = 40, right = width - 10, top = 10, bottom = height - 30;
    line(left, bottom, right, bottom, {0, 0, 0});
    line(left, top, left, bottom, {0, 0, 0});

    double lo = kInfinitePsnr, hi = -kInfinitePsnr;
    for (const auto& f : r.frames)
        for (double v : {f.psnr_lq, f.psnr_enh})
            if (std::isfinite(v)) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (!std::isfinite(lo)) { lo = 0.0; hi = 1.0; }
    if (hi - lo < 1e-6) { lo -= 0.5; hi += 0.5; }
    const std::size_t n = r.frames.size();
    auto px = [&](std::size_t i) {
        return n <= 1 ? left : left + static_cast<int>(std::lround(double(i) * (right - left) / double(n - 1)));
    };
    auto py = [&](double v) {
        if (!std::isfinite(v)) v = hi;
        return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * (bottom - top)));
    };
    for (std::size_t i = 0; i + 1 < n; ++i) {
        line(px(i), py(r.frames[i].psnr_lq), px(i + 1), py(r.frames[i + 1].psnr_lq), {70, 90, 200});
        line(px(i), py(r.frames[i].psnr_enh), px(i + 1), py(r.frames[i + 1].psnr_enh), {210, 40, 40});
    }
    if (n == 1) {
        put(px(0), py(r.frames[0].psnr_lq), {70, 90, 200});
        put(px(0), py(r.frames[0].psnr_enh), {210, 40, 40});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P6\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

BenchResult bench(const CpgaModel<float>& model, int width, int height, int frames) {
    if (width <= 0 || height <= 0 || frames <= 0) throw InvalidArgument("bench: dimensions and frame count must be positive");
    const int F = model.config().frames();
    const int pw = (width + 3) / 4 * 4, ph = (height + 3) / 4 * 4;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    ClipBatch<float> b;
    b.frames = F;
    b.lq = nn::Tensor<float>({F, 1, ph, pw});
    for (auto& v : b.lq.data) v = unit(rng);
    b.pred = b.lq;
    b.mv = nn::Tensor<float>({F, 2, ph, pw});
    for (auto& v : b.mv.data) v = (unit(rng) - 0.5f) * 0.5f;
    b.residual = nn::Tensor<float>({1, 1, ph, pw});
    for (auto& v : b.residual.data) v = (unit(rng) - 0.5f) * 0.1f;

    nn::NoGradGuard no_grad;
    for (int i = 0; i < kBenchWarmup; ++i) (void)model.forward(b);
    std::vector<double> fps;
    double total = 0.0;
    for (int i = 0; i < frames; ++i) {
        const auto start = std::chrono::steady_clock::now();
        (void)model.forward(b);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        total += s;
        fps.push_back(1.0 / s);
    }
    BenchResult r{width, height, frames, 0.0, 0.0, total / frames, model.parameter_count()};
    r.fps_mean = mean_of(fps);
    double var = 0.0;
    for (double f : fps) var += (f - r.fps_mean) * (f - r.fps_mean);
    r.fps_stdev = frames > 1 ? std::sqrt(var / (frames - 1)) : 0.0;
    return r;
}

}  // namespace cpga::metrics
