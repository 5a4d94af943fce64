#include "cpga/layers.hpp"

#include "cpga/error.hpp"

#include <cmath>

namespace cpga::nn {

template <typename T>
Var<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init, int fan_in) {
    if (find(name)) throw InvalidArgument("duplicate parameter name " + name);
    Tensor<T> t(shape);
    if (init == Init::FanInUniform) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.data) v = static_cast<T>(dist(rng_));
    }
    Var<T> v(std::move(t), true);
    params_.push_back({name, v});
    return v;
}

template <typename T>
std::size_t ParameterStore<T>::count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
}

template <typename T>
const Var<T>* ParameterStore<T>::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p.var;
    return nullptr;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) {
        auto node = p.var.node();
        node->grad = Tensor<T>();
    }
}

template <typename T>
Conv2d<T>::Conv2d(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch, int kernel, int stride_,
                  Init init)
    : stride(stride_), pad(kernel / 2) {
    const int fan_in = in_ch * kernel * kernel;
    weight = store.create(name + ".weight", Shape{out_ch, in_ch, kernel, kernel}, init, fan_in);
    bias = store.create(name + ".bias", Shape{out_ch, 1, 1, 1}, init, fan_in);
}

template <typename T>
Upsample2x<T>::Upsample2x(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch) {
    const int fan_in = in_ch * 9;
    weight = store.create(name + ".weight", Shape{in_ch, out_ch, 3, 3}, Init::FanInUniform, fan_in);
    bias = store.create(name + ".bias", Shape{out_ch, 1, 1, 1}, Init::FanInUniform, fan_in);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Upsample2x<float>;
template struct Upsample2x<double>;

}  // namespace cpga::nn
