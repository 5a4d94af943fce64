#pragma once

#include "cpga/ops.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cpga::nn {

template <typename T>
struct NamedParameter {
    std::string name;
    Var<T> var;
};

enum class Init { FanInUniform, Zero };

/// Owns every trainable tensor of a model, in registration order. Names are
/// hierarchical ("ita.fusion.down1.weight") and stable across builds; they key
/// checkpoint entries.
template <typename T>
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

    Var<T> create(const std::string& name, Shape shape, Init init, int fan_in);

    const std::vector<NamedParameter<T>>& parameters() const { return params_; }
    std::size_t count() const;
    const Var<T>* find(const std::string& name) const;
    void zero_grad();

private:
    std::mt19937_64 rng_;
    std::vector<NamedParameter<T>> params_;
};

template <typename T>
struct Conv2d {
    Var<T> weight;
    Var<T> bias;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch, int kernel, int stride = 1,
           Init init = Init::FanInUniform);

    Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
    int out_channels() const { return weight.shape().n; }
};

/// Stride-2, 3x3 transposed convolution that exactly doubles H and W.
template <typename T>
struct Upsample2x {
    Var<T> weight;
    Var<T> bias;

    Upsample2x() = default;
    Upsample2x(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch);

    Var<T> operator()(const Var<T>& x) const { return ops::conv_transpose2d(x, weight, bias, 2, 1, 1); }
};

}  // namespace cpga::nn
