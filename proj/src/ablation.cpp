#include "cpga/ablation.hpp"

#include "cpga/error.hpp"
#include "cpga/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cpga::ablation {

PriorFlags parse_flag_list(const std::string& list) {
    PriorFlags f{false, false, false};
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "mv") f.use_mv = true;
        else if (item == "pred") f.use_pred = true;
        else if (item == "resid") f.use_resid = true;
        else if (!item.empty())
            throw InvalidArgument("unknown prior '" + item + "' (expected a subset of mv,pred,resid)");
    }
    return f;
}

std::vector<int> variants_for(const PriorFlags& allowed) {
    std::vector<int> out;
    for (int m = 1; m <= 7; ++m) {
        const auto f = PriorFlags::ablation_variant(m);
        if ((!f.use_mv || allowed.use_mv) && (!f.use_pred || allowed.use_pred) &&
            (!f.use_resid || allowed.use_resid))
            out.push_back(m);
    }
    return out;
}

void GridConfig::validate() const {
    model.validate();
    train.validate();
    if (variants.empty()) throw InvalidArgument("ablation grid needs at least one variant");
    if (seeds.empty()) throw InvalidArgument("ablation grid needs at least one seed");
    for (int v : variants) PriorFlags::ablation_variant(v);
}

namespace {

double mean_over(const std::vector<Cell>& cells, int variant, double Cell::*field) {
    double s = 0.0;
    int n = 0;
    for (const auto& c : cells)
        if (c.variant == variant) {
            s += c.*field;
            ++n;
        }
    if (n == 0) throw InvalidArgument("variant " + std::to_string(variant) + " is not in the grid");
    return s / n;
}

}  // namespace

double GridResult::mean_delta_psnr(int variant) const { return mean_over(cells, variant, &Cell::delta_psnr); }
double GridResult::mean_delta_ssim(int variant) const { return mean_over(cells, variant, &Cell::delta_ssim); }

GridResult run_grid(const std::vector<data::PairedSequence>& train_set,
                    const std::vector<data::PairedSequence>& eval_set, const GridConfig& cfg,
                    const std::function<void(const Cell&)>& progress) {
    cfg.validate();
    if (train_set.empty() || eval_set.empty()) throw InvalidArgument("ablation needs training and evaluation clips");
    GridResult result;
    for (int variant : cfg.variants) {
        for (std::uint64_t seed : cfg.seeds) {
            const auto t0 = std::chrono::steady_clock::now();
            ModelConfig mc = cfg.model;
            mc.priors = PriorFlags::ablation_variant(variant);
            mc.seed = seed;
            train::TrainConfig tc = cfg.train;
            tc.seed = seed;

            CpgaModel<float> model(mc);
            train::Trainer trainer(model, train_set, tc);
            trainer.run(tc.max_iters);

            const auto& hist = trainer.history();
            const std::size_t tail = std::max<std::size_t>(1, hist.size() / 10);
            double loss = 0.0;
            for (std::size_t i = hist.size() - tail; i < hist.size(); ++i) loss += hist[i].loss;

            std::vector<metrics::SequenceReport> reports;
            for (const auto& seq : eval_set) reports.push_back(metrics::evaluate_sequence(model, seq).report);
            const auto combined = metrics::combine(reports);

            Cell c;
            c.variant = variant;
            c.flags = mc.priors;
            c.seed = seed;
            c.parameter_count = model.parameter_count();
            c.final_loss = loss / double(tail);
            c.delta_psnr = combined.delta_psnr;
            c.delta_ssim = combined.delta_ssim;
            c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            result.cells.push_back(c);
            if (progress) progress(c);
        }
    }
    return result;
}

void write_grid_csv(const GridResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(6);
    out << "variant,priors,seed,params,final_loss,delta_psnr,delta_ssim,seconds\n";
    std::vector<int> seen;
    for (const auto& c : r.cells) {
        out << "Model-" << c.variant << ',' << c.flags.label() << ',' << c.seed << ',' << c.parameter_count << ','
            << c.final_loss << ',' << c.delta_psnr << ',' << c.delta_ssim << ',' << c.seconds << '\n';
        if (std::find(seen.begin(), seen.end(), c.variant) == seen.end()) seen.push_back(c.variant);
    }
    for (int v : seen)
        out << "Model-" << v << ',' << PriorFlags::ablation_variant(v).label() << ",mean,,," << r.mean_delta_psnr(v)
            << ',' << r.mean_delta_ssim(v) << ",\n";
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace cpga::ablation
