#include "cpga/ita.hpp"

#include "cpga/error.hpp"

namespace cpga::ita {

namespace ops = nn::ops;

template <typename T>
FusionNet<T>::FusionNet(nn::ParameterStore<T>& store, const std::string& name, int in_channels, int c, T slope)
    : in_(store, name + ".in", in_channels, c, 3),
      enc0_(store, name + ".enc0", c, c, 3),
      down1_(store, name + ".down1", c, 2 * c, 3, 2),
      enc1_(store, name + ".enc1", 2 * c, 2 * c, 3),
      down2_(store, name + ".down2", 2 * c, 4 * c, 3, 2),
      mid_(store, name + ".mid", 4 * c, 4 * c, 3),
      out_(store, name + ".out", c, c, 3),
      up2_(store, name + ".up2", 4 * c, 2 * c),
      up1_(store, name + ".up1", 2 * c, c),
      slope_(slope) {}

template <typename T>
Var<T> FusionNet<T>::operator()(const Var<T>& stack) const {
    const auto& s = stack.shape();
    if (s.h % 4 != 0 || s.w % 4 != 0)
        throw InvalidArgument("FusionNet input " + s.str() + " must have H and W divisible by 4");
    auto act = [&](const Var<T>& x) { return ops::leaky_relu(x, slope_); };
    const auto e0 = act(enc0_(act(in_(stack))));
    const auto e1 = act(enc1_(act(down1_(e0))));
    const auto e2 = act(mid_(act(down2_(e1))));
    const auto d1 = ops::add(act(up2_(e2)), e1);
    const auto d0 = ops::add(act(up1_(d1)), e0);
    return out_(d0);
}

template <typename T>
TemporalAggregation<T>::TemporalAggregation(nn::ParameterStore<T>& store, const ModelConfig& cfg)
    : cfg_(cfg),
      lq_conv_(store, "ita.lq_extract", 1, cfg.channels, 3),
      pred_conv_(store, "ita.pred_extract", 1, cfg.channels, 3),
      fusion_(store, "ita.fusion", cfg.frames() * cfg.channels, cfg.channels, static_cast<T>(cfg.leaky_slope)),
      offset_conv_(store, "ita.dcn_offset", cfg.channels, 18, 3, 1, nn::Init::Zero) {
    const int c = cfg.channels;
    dcn_weight_ = store.create("ita.dcn.weight", nn::Shape{c, c, 3, 3}, nn::Init::FanInUniform, c * 9);
    dcn_bias_ = store.create("ita.dcn.bias", nn::Shape{c, 1, 1, 1}, nn::Init::FanInUniform, c * 9);
}

template <typename T>
Var<T> TemporalAggregation<T>::align(const Var<T>& lq_feats, const Var<T>& mv_maps) const {
    const auto flow = ops::scale(mv_maps, static_cast<T>(cfg_.search_range));
    return ops::warp(ops::shift_frames_prev(lq_feats, cfg_.frames()), flow);
}

template <typename T>
Var<T> TemporalAggregation<T>::gate(const Var<T>& lq_feats, const Var<T>& pred_feats, const Var<T>& aligned) const {
    const int F = cfg_.frames();
    const auto center = ops::broadcast_frame(lq_feats, F, cfg_.radius);
    const auto p_hat = ops::mul(center, pred_feats);
    const auto f_hat = ops::mul(center, aligned);
    const auto logits = ops::add(p_hat, f_hat);
    return cfg_.gate_axis == GateAxis::Channel ? ops::softmax_channels(logits) : ops::softmax_frames(logits, F);
}

template <typename T>
Var<T> TemporalAggregation<T>::correlate_and_gate(const Var<T>& lq_feats, const Var<T>& pred_feats,
                                                  const Var<T>& aligned) const {
    return ops::mul(lq_feats, gate(lq_feats, pred_feats, aligned));
}

template <typename T>
Var<T> TemporalAggregation<T>::fuse(const Var<T>& compensated) const {
    const auto& s = compensated.shape();
    const int F = cfg_.frames();
    if (s.n % F != 0) throw InvalidArgument("fuse: batch is not a multiple of the clip length");
    const auto stack = ops::reshape(compensated, nn::Shape{s.n / F, F * s.c, s.h, s.w});
    return fusion_(stack);
}

template <typename T>
Var<T> TemporalAggregation<T>::deform_aggregate(const Var<T>& fused) const {
    const auto y = ops::deform_conv2d(fused, offset_conv_(fused), dcn_weight_, dcn_bias_);
    return ops::leaky_relu(y, static_cast<T>(cfg_.leaky_slope));
}

template <typename T>
Var<T> TemporalAggregation<T>::forward(const Var<T>& lq, const Var<T>& pred, const Var<T>& mv_maps) const {
    if (lq.shape() != pred.shape()) throw InvalidArgument("ITA: LQ and predictive planes differ in shape");
    const auto lq_feats = extract_lq(lq);
    const auto pred_feats = extract_pred(pred);
    const auto aligned = align(lq_feats, mv_maps);
    const auto compensated = correlate_and_gate(lq_feats, pred_feats, aligned);
    return deform_aggregate(fuse(compensated));
}

template class FusionNet<float>;
template class FusionNet<double>;
template class TemporalAggregation<float>;
template class TemporalAggregation<double>;

}  // namespace cpga::ita
