#pragma once

// Training: Adam over a model's parameter store, Charbonnier loss, seeded
// and resumable sampling, checkpoint archives and loss-curve CSV.

#include "cpga/data.hpp"
#include "cpga/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpga::train {

enum class Profile { Paper, Desk };

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 32;
    int crop = 128;
    double charbonnier_eps = 1e-3;
    int max_iters = 1000;
    std::uint64_t seed = 1;
    bool flips = true;
    bool cosine = false;  // cosine decay to 0 over max_iters; constant otherwise
    int workers = 1;      // batches prepared ahead on this many threads

    /// Batch/crop of a profile: paper 32 x 128^2, desk 8 x 64^2.
    static TrainConfig for_profile(Profile p);
    void validate() const;
    std::string to_text() const;
    static TrainConfig from_map(const std::map<std::string, std::string>& kv);

    bool operator==(const TrainConfig&) const = default;
};

Profile parse_profile(const std::string& s);
std::string profile_name(Profile p);

/// Adam with bias correction; moments keyed by parameter order in the store.
class Adam {
public:
    Adam() = default;
    explicit Adam(const nn::ParameterStore<float>& store);

    void step(nn::ParameterStore<float>& store, double lr, double beta1, double beta2, double eps);

    std::int64_t steps() const { return t_; }
    std::vector<nn::Tensor<float>>& first_moments() { return m_; }
    std::vector<nn::Tensor<float>>& second_moments() { return v_; }
    const std::vector<nn::Tensor<float>>& first_moments() const { return m_; }
    const std::vector<nn::Tensor<float>>& second_moments() const { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    std::int64_t t_ = 0;
    std::vector<nn::Tensor<float>> m_, v_;
};

/// One training example drawn for an iteration: which sequence, which window
/// center, and the spatial augmentation.
struct Draw {
    int sequence = 0;
    int center = 0;
    data::Augment augment;
};

/// The batch of iteration `iter` is a pure function of (seed, iter) and the
/// dataset shape, so resumed runs see the same data as uninterrupted ones.
std::vector<Draw> draw_batch(const std::vector<data::PairedSequence>& dataset, const TrainConfig& cfg,
                             std::int64_t iter);

/// Raised when the loss stops being finite; names the batch it happened on.
class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(std::int64_t iter, const std::vector<Draw>& batch);
    std::int64_t iteration() const { return iter_; }
    const std::vector<Draw>& batch() const { return batch_; }

private:
    std::int64_t iter_;
    std::vector<Draw> batch_;
};

struct LossPoint {
    std::int64_t iter = 0;
    double loss = 0.0;
};

class Trainer {
public:
    Trainer(CpgaModel<float>& model, const std::vector<data::PairedSequence>& dataset, TrainConfig cfg);

    /// Runs until `iterations` total steps have been taken (capped by
    /// max_iters); calls `on_step` after every step.
    void run(std::int64_t iterations, const std::function<void(const LossPoint&)>& on_step = {});
    /// One optimiser step; returns the batch loss before the update.
    double step();

    double learning_rate(std::int64_t iter) const;
    std::int64_t iteration() const { return iter_; }
    const TrainConfig& config() const { return cfg_; }
    const std::vector<LossPoint>& history() const { return history_; }
    Adam& optimizer() { return adam_; }
    const Adam& optimizer() const { return adam_; }
    CpgaModel<float>& model() { return model_; }
    void set_iteration(std::int64_t it) { iter_ = it; }

    /// Assembles the network input of a draw.
    data::ClipSample sample(const Draw& d) const;

private:
    CpgaModel<float>& model_;
    const std::vector<data::PairedSequence>& dataset_;
    TrainConfig cfg_;
    Adam adam_;
    std::int64_t iter_ = 0;
    std::vector<LossPoint> history_;
};

/// Appends rows to an `iter,loss` CSV, writing the header for a new file.
void append_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& points);
std::vector<LossPoint> read_loss_csv(const std::filesystem::path& path);

// Checkpoint archive: "CPGACKPT", u32 version, u32 record count, then named
// records (u32 name length, name, u8 kind, u64 payload length, payload).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::int64_t iteration = 0;
    std::uint64_t seed = 0;
    int workers = 1;
    std::vector<std::pair<std::string, nn::Tensor<float>>> parameters;
    std::int64_t adam_steps = 0;
    std::vector<nn::Tensor<float>> adam_m, adam_v;  // empty for inference-only archives
};

Checkpoint capture(const CpgaModel<float>& model, const Trainer* trainer);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws ParseError naming any missing or malformed field.
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Copies stored parameters into a model built from the same config.
void restore_parameters(CpgaModel<float>& model, const Checkpoint& ckpt);
/// Restores optimiser moments and iteration count.
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);

}  // namespace cpga::train
