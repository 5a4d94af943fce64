#pragma once

// Y-channel quality metrics on exported 8-bit planes, per-sequence
// evaluation reports, fluctuation curves and throughput measurement.

#include "cpga/codec.hpp"
#include "cpga/data.hpp"
#include "cpga/model.hpp"

#include <filesystem>
#include <limits>
#include <vector>

namespace cpga::metrics {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(255^2 / MSE); identical planes give kInfinitePsnr.
double psnr(const codec::Plane8& a, const codec::Plane8& b);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1 = (0.01*255)^2,
/// C2 = (0.03*255)^2, averaged over window positions that fit entirely inside
/// the frame.
double ssim(const codec::Plane8& a, const codec::Plane8& b);

/// Normalised 11x11 Gaussian weights, row-major.
std::vector<double> ssim_window();

struct FrameMetrics {
    double psnr_lq = 0.0;
    double psnr_enh = 0.0;
    double ssim_lq = 0.0;
    double ssim_enh = 0.0;
};

struct SequenceReport {
    std::vector<FrameMetrics> frames;
    double mean_psnr_lq = 0.0;
    double mean_psnr_enh = 0.0;
    double mean_ssim_lq = 0.0;
    double mean_ssim_enh = 0.0;
    double delta_psnr = 0.0;
    double delta_ssim = 0.0;
    double fps = 0.0;
    std::size_t parameter_count = 0;

    /// Per-frame enhanced minus compressed PSNR; equal values (including two
    /// infinities) give exactly 0.
    std::vector<double> delta_psnr_series() const;
    /// Fills the means and deltas from `frames`.
    void summarise();
};

struct EvalOptions {
    int first_frame = 0;
    int frame_count = 0;  // 0 = to the end
    bool keep_enhanced = false;
};

struct EvalResult {
    SequenceReport report;
    codec::LumaSequence enhanced;  // filled when keep_enhanced is set
};

/// Enhances every frame of the sequence (windows padded to multiples of 4 and
/// cropped back) and scores compressed and enhanced frames against the raw.
EvalResult evaluate_sequence(const CpgaModel<float>& model, const data::PairedSequence& seq,
                             const EvalOptions& opts = {});

/// Averages per-sequence reports frame-weighted.
SequenceReport combine(const std::vector<SequenceReport>& reports);

/// CSV `frame,psnr_lq,psnr_enh`, one row per frame.
void write_fluctuation_csv(const SequenceReport& r, const std::filesystem::path& path);
/// Line plot of both PSNR series as a binary PPM image.
void write_fluctuation_plot(const SequenceReport& r, const std::filesystem::path& path, int width = 640,
                            int height = 320);

struct BenchResult {
    int width = 0;
    int height = 0;
    int frames = 0;
    double fps_mean = 0.0;
    double fps_stdev = 0.0;
    double seconds_per_frame = 0.0;
    std::size_t parameter_count = 0;
};

inline constexpr int kBenchWarmup = 3;

/// Times single-frame enhancement on synthetic inputs after kBenchWarmup
/// untimed frames.
BenchResult bench(const CpgaModel<float>& model, int width, int height, int frames);

}  // namespace cpga::metrics
