#include "cpga/mna.hpp"

#include "cpga/error.hpp"

namespace cpga::mna {

namespace ops = nn::ops;

template <typename T>
Nlau<T>::Nlau(nn::ParameterStore<T>& store, const std::string& name, int c, int reduction, bool has_coarser)
    : guide_(store, name + ".guide", 2 * c, c, 1),
      query_(store, name + ".query", c, c / reduction, 1),
      key_(store, name + ".key", c, c / reduction, 1),
      value_(store, name + ".value", c, c / reduction, 1),
      project_(store, name + ".project", c / reduction, c, 1),
      has_coarser_(has_coarser) {
    if (has_coarser) fuse_ = nn::Conv2d<T>(store, name + ".fuse", 2 * c, c, 3);
}

template <typename T>
std::pair<Var<T>, Var<T>> Nlau<T>::query_key(const Var<T>& f, const Var<T>& r) const {
    if (f.shape() != r.shape()) throw InvalidArgument("NLAU: feature and residual feature differ in shape");
    const auto g = guide_(ops::concat_channels<T>({f, r}));
    return {query_(g), key_(g)};
}

template <typename T>
Var<T> Nlau<T>::spatial(const Var<T>& f, const Var<T>& r, int window) const {
    const auto [q, k] = query_key(f, r);
    return project_(ops::nonlocal_attention(q, k, value_(f), window));
}

template <typename T>
Var<T> Nlau<T>::operator()(const Var<T>& f, const Var<T>& r, const std::optional<Var<T>>& up, int window) const {
    if (up.has_value() != has_coarser_) throw InvalidArgument("NLAU: coarser-scale input presence mismatch");
    const auto s = spatial(f, r, window);
    const auto fused = up ? fuse_(ops::concat_channels<T>({f, *up})) : f;
    return ops::add(fused, s);
}

template <typename T>
MultiScaleAggregation<T>::MultiScaleAggregation(nn::ParameterStore<T>& store, const ModelConfig& cfg)
    : cfg_(cfg), resid_conv_(store, "mna.resid_extract", 1, cfg.channels, 3) {
    const int c = cfg.channels;
    for (int i = 0; i < 2; ++i) {
        f_down_[i] = nn::Conv2d<T>(store, "mna.f_down" + std::to_string(i + 1), c, c, 3, 2);
        r_down_[i] = nn::Conv2d<T>(store, "mna.r_down" + std::to_string(i + 1), c, c, 3, 2);
    }
    for (int s = 0; s < 3; ++s)
        units_[s] = Nlau<T>(store, "mna.nlau" + std::to_string(s), c, cfg.nlau_reduction, s < 2);
    up_[0] = nn::Upsample2x<T>(store, "mna.up1", c, c);
    up_[1] = nn::Upsample2x<T>(store, "mna.up2", c, c);
}

template <typename T>
ScalePyramid<T> MultiScaleAggregation<T>::build_pyramid(const Var<T>& f_ta, const Var<T>& residual) const {
    const auto& s = f_ta.shape();
    if (s.h % 4 != 0 || s.w % 4 != 0)
        throw InvalidArgument("MNA input " + s.str() + " must have H and W divisible by 4");
    if (residual.shape() != nn::Shape{s.n, 1, s.h, s.w})
        throw InvalidArgument("MNA residual must be (N, 1, H, W) matching the feature");
    const T slope = static_cast<T>(cfg_.leaky_slope);
    ScalePyramid<T> p;
    p.features[0] = f_ta;
    p.residuals[0] = resid_conv_(residual);
    for (int i = 0; i < 2; ++i) {
        p.features[i + 1] = ops::leaky_relu(f_down_[i](p.features[i]), slope);
        p.residuals[i + 1] = ops::leaky_relu(r_down_[i](p.residuals[i]), slope);
    }
    return p;
}

template <typename T>
int MultiScaleAggregation<T>::scale0_window(int height, int width) const {
    if (cfg_.nl_window_force) return cfg_.nl_window;
    return (height > cfg_.nl_window_threshold || width > cfg_.nl_window_threshold) ? cfg_.nl_window : 0;
}

template <typename T>
Var<T> MultiScaleAggregation<T>::aggregate(const ScalePyramid<T>& p) const {
    const auto a2 = units_[2](p.features[2], p.residuals[2], std::nullopt, 0);
    const auto a1 = units_[1](p.features[1], p.residuals[1], up_[1](a2), 0);
    const auto& s0 = p.features[0].shape();
    return units_[0](p.features[0], p.residuals[0], up_[0](a1), scale0_window(s0.h, s0.w));
}

template class Nlau<float>;
template class Nlau<double>;
template class MultiScaleAggregation<float>;
template class MultiScaleAggregation<double>;

}  // namespace cpga::mna
