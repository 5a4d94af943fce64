#pragma once

#include "cpga/ita.hpp"
#include "cpga/mna.hpp"
#include "cpga/model_config.hpp"
#include "cpga/qe.hpp"

#include <memory>

namespace cpga {

/// Network inputs for N clips of `frames` frames each, values in network
/// units: planes in [0, 1], MV maps divided by the search range, residual
/// divided by 255.
template <typename T>
struct ClipBatch {
    int frames = 0;
    nn::Tensor<T> lq;        // (N * frames, 1, H, W)
    nn::Tensor<T> pred;      // (N * frames, 1, H, W)
    nn::Tensor<T> mv;        // (N * frames, 2, H, W); channel 0 dx, 1 dy
    nn::Tensor<T> residual;  // (N, 1, H, W), center frame
    nn::Tensor<T> gt;        // (N, 1, H, W), center frame; never read by forward()

    int batch() const { return frames > 0 ? lq.shape.n / frames : 0; }
    void validate() const;
};

template <typename T>
class CpgaModel {
public:
    explicit CpgaModel(const ModelConfig& cfg);
    CpgaModel(const CpgaModel&) = delete;
    CpgaModel& operator=(const CpgaModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    nn::ParameterStore<T>& parameters() { return store_; }
    const nn::ParameterStore<T>& parameters() const { return store_; }
    std::size_t parameter_count() const { return store_.count(); }

    /// Enhanced center frames (N, 1, H, W), unclamped.
    nn::Var<T> forward(const ClipBatch<T>& batch) const;

    /// Forward on explicit graph inputs, so callers can differentiate with
    /// respect to the planes themselves. Applies the prior flags.
    nn::Var<T> forward(const nn::Var<T>& lq, const nn::Var<T>& pred, const nn::Var<T>& mv,
                       const nn::Var<T>& residual) const;

    const ita::TemporalAggregation<T>& ita() const { return *ita_; }
    const mna::MultiScaleAggregation<T>& mna() const { return *mna_; }
    const qe::QualityEnhancement<T>& qe() const { return *qe_; }

private:
    ModelConfig cfg_;
    nn::ParameterStore<T> store_;
    std::unique_ptr<ita::TemporalAggregation<T>> ita_;
    std::unique_ptr<mna::MultiScaleAggregation<T>> mna_;
    std::unique_ptr<qe::QualityEnhancement<T>> qe_;
};

}  // namespace cpga
