#pragma once

// Multi-scale non-local aggregation guided by the center residual frame.

#include "cpga/layers.hpp"
#include "cpga/model_config.hpp"

#include <array>
#include <optional>

namespace cpga::mna {

using nn::Var;

template <typename T>
struct ScalePyramid {
    std::array<Var<T>, 3> features;   // F^0 (= F^ta), F^1, F^2
    std::array<Var<T>, 3> residuals;  // R^0, R^1, R^2
};

/// Non-local aggregation unit. Guidance G = 1x1(concat(F, R)); queries and keys
/// are projections of G, values a projection of F; the attention output is
/// projected back to C channels and added to the fused feature (F itself at
/// the coarsest scale, otherwise 3x3(concat(F, upsampled coarser output))).
template <typename T>
class Nlau {
public:
    Nlau() = default;
    Nlau(nn::ParameterStore<T>& store, const std::string& name, int channels, int reduction, bool has_coarser);

    Var<T> operator()(const Var<T>& f, const Var<T>& r, const std::optional<Var<T>>& up, int window) const;

    /// Query/key projections of the guidance, for attention inspection.
    std::pair<Var<T>, Var<T>> query_key(const Var<T>& f, const Var<T>& r) const;
    Var<T> value(const Var<T>& f) const { return value_(f); }
    Var<T> spatial(const Var<T>& f, const Var<T>& r, int window) const;

private:
    nn::Conv2d<T> guide_, query_, key_, value_, project_, fuse_;
    bool has_coarser_ = false;
};

template <typename T>
class MultiScaleAggregation {
public:
    MultiScaleAggregation(nn::ParameterStore<T>& store, const ModelConfig& cfg);

    /// `residual` is (N, 1, H, W); H and W must be divisible by 4.
    ScalePyramid<T> build_pyramid(const Var<T>& f_ta, const Var<T>& residual) const;
    Var<T> aggregate(const ScalePyramid<T>& pyramid) const;
    Var<T> forward(const Var<T>& f_ta, const Var<T>& residual) const {
        return aggregate(build_pyramid(f_ta, residual));
    }

    /// Scale-0 tile size for an input of this size (0 = global attention).
    int scale0_window(int height, int width) const;

    const Nlau<T>& unit(int scale) const { return units_[scale]; }

private:
    ModelConfig cfg_;
    nn::Conv2d<T> resid_conv_;
    std::array<nn::Conv2d<T>, 2> f_down_, r_down_;
    std::array<Nlau<T>, 3> units_;
    std::array<nn::Upsample2x<T>, 2> up_;  // up_[0]: scale 1 -> 0, up_[1]: scale 2 -> 1
};

}  // namespace cpga::mna
