#pragma once

// Coding-prior ablation grid: trains one model per (variant, seed) pair on
// a fixed dataset with an identical budget and scores each on an evaluation
// set.

#include "cpga/data.hpp"
#include "cpga/model_config.hpp"
#include "cpga/train.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cpga::ablation {

/// Parses a comma-separated subset of {mv, pred, resid}.
PriorFlags parse_flag_list(const std::string& list);

/// Model indices (1..7) whose enabled priors all lie inside `allowed`, in
/// ascending order. All three flags give the full seven-variant grid.
std::vector<int> variants_for(const PriorFlags& allowed);

struct GridConfig {
    ModelConfig model;  // prior flags are overridden per variant
    train::TrainConfig train;
    std::vector<int> variants{1, 2, 3, 4, 5, 6, 7};
    std::vector<std::uint64_t> seeds{1, 2, 3};

    void validate() const;
};

struct Cell {
    int variant = 0;
    PriorFlags flags;
    std::uint64_t seed = 0;
    std::size_t parameter_count = 0;
    double final_loss = 0.0;  // mean over the last 10% of iterations
    double delta_psnr = 0.0;
    double delta_ssim = 0.0;
    double seconds = 0.0;
};

struct GridResult {
    std::vector<Cell> cells;

    /// Mean ΔPSNR over seeds for one variant; throws if it was not run.
    double mean_delta_psnr(int variant) const;
    double mean_delta_ssim(int variant) const;
};

/// Runs the grid variant-major. The seed drives both initialisation and
/// sampling; `progress` is called after each finished cell.
GridResult run_grid(const std::vector<data::PairedSequence>& train_set,
                    const std::vector<data::PairedSequence>& eval_set, const GridConfig& cfg,
                    const std::function<void(const Cell&)>& progress = {});

/// One row per cell plus one `mean` row per variant.
void write_grid_csv(const GridResult& r, const std::filesystem::path& path);

}  // namespace cpga::ablation
