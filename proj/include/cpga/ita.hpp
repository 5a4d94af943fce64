#pragma once

// Inter-frame temporal aggregation: LQ and predictive-frame features, motion
// compensated feature alignment, correlation gating, FusionNet and deformable
// aggregation. All frame-indexed tensors are frame-stacked (N * frames, ...).

#include "cpga/layers.hpp"
#include "cpga/model_config.hpp"

namespace cpga::ita {

using nn::Var;

/// 3x3 conv, then a three-level encoder/decoder (C, 2C, 4C) with additive
/// skips, producing C channels at the input resolution.
template <typename T>
class FusionNet {
public:
    FusionNet() = default;
    FusionNet(nn::ParameterStore<T>& store, const std::string& name, int in_channels, int channels, T slope);

    /// H and W must be divisible by 4.
    Var<T> operator()(const Var<T>& stack) const;

private:
    nn::Conv2d<T> in_, enc0_, down1_, enc1_, down2_, mid_, out_;
    nn::Upsample2x<T> up2_, up1_;
    T slope_ = T(0.1);
};

template <typename T>
class TemporalAggregation {
public:
    TemporalAggregation(nn::ParameterStore<T>& store, const ModelConfig& cfg);

    /// Shared 3x3 convs; planes are (N * frames, 1, H, W).
    Var<T> extract_lq(const Var<T>& planes) const { return lq_conv_(planes); }
    Var<T> extract_pred(const Var<T>& planes) const { return pred_conv_(planes); }

    /// Frame i > 0 is the previous frame's feature warped along frame i's
    /// motion; frame 0 is its own feature warped along its (in practice zero)
    /// motion. `mv_maps` are normalised (pixels / search_range).
    Var<T> align(const Var<T>& lq_feats, const Var<T>& mv_maps) const;

    /// F^c_i = I_i * softmax(I_t * P_i + I_t * F_i).
    Var<T> correlate_and_gate(const Var<T>& lq_feats, const Var<T>& pred_feats, const Var<T>& aligned) const;

    /// The normalised gate softmax(I_t * P_i + I_t * F_i), exposed for inspection.
    Var<T> gate(const Var<T>& lq_feats, const Var<T>& pred_feats, const Var<T>& aligned) const;

    Var<T> fuse(const Var<T>& compensated) const;

    Var<T> offsets(const Var<T>& fused) const { return offset_conv_(fused); }
    Var<T> deform_aggregate(const Var<T>& fused) const;

    Var<T> forward(const Var<T>& lq, const Var<T>& pred, const Var<T>& mv_maps) const;

    const nn::Conv2d<T>& offset_conv() const { return offset_conv_; }
    const Var<T>& dcn_weight() const { return dcn_weight_; }
    const Var<T>& dcn_bias() const { return dcn_bias_; }

private:
    ModelConfig cfg_;
    nn::Conv2d<T> lq_conv_, pred_conv_;
    FusionNet<T> fusion_;
    nn::Conv2d<T> offset_conv_;
    Var<T> dcn_weight_, dcn_bias_;
};

}  // namespace cpga::ita
