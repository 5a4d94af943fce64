#pragma once

// Quality enhancement head: two conv + LeakyReLU layers, G shift channel
// attention blocks, and a zero-initialised reconstruction conv whose output is
// added to the center LQ frame.

#include "cpga/layers.hpp"
#include "cpga/model_config.hpp"

#include <vector>

namespace cpga::qe {

using nn::Var;

enum class ShiftDirection { Horizontal, Vertical };

/// The gamma * C channels centered at C / 2; the first half moves by
/// +amount, the second half by -amount.
struct ShiftSpec {
    int first = 0;
    int count = 0;
    int amount = 2;
    ShiftDirection direction = ShiftDirection::Horizontal;

    static ShiftSpec centered(int channels, double gamma, int amount, ShiftDirection dir);
};

template <typename T>
Var<T> partial_shift(const Var<T>& x, const ShiftSpec& spec) {
    return nn::ops::partial_shift(x, spec.first, spec.count, spec.amount,
                                  spec.direction == ShiftDirection::Vertical);
}

/// conv3x3 -> LeakyReLU -> conv3x3 -> squeeze-excitation scale -> + input.
template <typename T>
class ChannelAttentionBlock {
public:
    ChannelAttentionBlock() = default;
    ChannelAttentionBlock(nn::ParameterStore<T>& store, const std::string& name, int channels, int reduction,
                          T slope);

    Var<T> operator()(const Var<T>& x) const;
    /// Per-channel sigmoid gate (N, C, 1, 1) computed for input x.
    Var<T> gate(const Var<T>& x) const;

private:
    Var<T> body(const Var<T>& x) const;
    Var<T> attention(const Var<T>& y) const;

    nn::Conv2d<T> conv1_, conv2_, squeeze_, excite_;
    T slope_ = T(0.1);
};

template <typename T>
class QualityEnhancement {
public:
    QualityEnhancement(nn::ParameterStore<T>& store, const ModelConfig& cfg);

    /// f_sa (N, C, H, W), lq_center (N, 1, H, W) -> enhanced (N, 1, H, W), unclamped.
    Var<T> forward(const Var<T>& f_sa, const Var<T>& lq_center) const;

    const nn::Conv2d<T>& reconstruction() const { return final_; }

private:
    ModelConfig cfg_;
    nn::Conv2d<T> head1_, head2_;
    std::vector<ChannelAttentionBlock<T>> blocks_;  // two per SCAB
    nn::Conv2d<T> final_;
    ShiftSpec shift_h_, shift_v_;
};

}  // namespace cpga::qe
