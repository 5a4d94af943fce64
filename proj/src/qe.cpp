#include "cpga/qe.hpp"

#include "cpga/error.hpp"

#include <cmath>

namespace cpga::qe {

namespace ops = nn::ops;

ShiftSpec ShiftSpec::centered(int channels, double gamma, int amount, ShiftDirection dir) {
    const double shifted = gamma * channels;
    const int count = static_cast<int>(std::lround(shifted));
    if (count <= 0 || std::abs(shifted - count) > 1e-9 || count % 2 != 0)
        throw InvalidArgument("gamma * C must be a positive even integer");
    return ShiftSpec{channels / 2 - count / 2, count, amount, dir};
}

template <typename T>
ChannelAttentionBlock<T>::ChannelAttentionBlock(nn::ParameterStore<T>& store, const std::string& name, int c,
                                                int reduction, T slope)
    : conv1_(store, name + ".conv1", c, c, 3),
      conv2_(store, name + ".conv2", c, c, 3),
      squeeze_(store, name + ".squeeze", c, c / reduction, 1),
      excite_(store, name + ".excite", c / reduction, c, 1),
      slope_(slope) {}

template <typename T>
Var<T> ChannelAttentionBlock<T>::body(const Var<T>& x) const {
    return conv2_(ops::leaky_relu(conv1_(x), slope_));
}

template <typename T>
Var<T> ChannelAttentionBlock<T>::attention(const Var<T>& y) const {
    const auto pooled = ops::global_avg_pool(y);
    return ops::sigmoid(excite_(ops::leaky_relu(squeeze_(pooled), slope_)));
}

template <typename T>
Var<T> ChannelAttentionBlock<T>::gate(const Var<T>& x) const {
    return attention(body(x));
}

template <typename T>
Var<T> ChannelAttentionBlock<T>::operator()(const Var<T>& x) const {
    const auto y = body(x);
    return ops::add(x, ops::channel_scale(y, attention(y)));
}

template <typename T>
QualityEnhancement<T>::QualityEnhancement(nn::ParameterStore<T>& store, const ModelConfig& cfg)
    : cfg_(cfg),
      head1_(store, "qe.head1", cfg.channels, cfg.channels, 3),
      head2_(store, "qe.head2", cfg.channels, cfg.channels, 3),
      shift_h_(ShiftSpec::centered(cfg.channels, cfg.gamma, cfg.shift_h, ShiftDirection::Horizontal)),
      shift_v_(ShiftSpec::centered(cfg.channels, cfg.gamma, cfg.shift_w, ShiftDirection::Vertical)) {
    const T slope = static_cast<T>(cfg.leaky_slope);
    for (int g = 0; g < cfg.scab_count; ++g) {
        const std::string base = "qe.scab" + std::to_string(g);
        blocks_.emplace_back(store, base + ".cab_h", cfg.channels, cfg.ca_reduction, slope);
        blocks_.emplace_back(store, base + ".cab_v", cfg.channels, cfg.ca_reduction, slope);
    }
    final_ = nn::Conv2d<T>(store, "qe.reconstruct", cfg.channels, 1, 3, 1, nn::Init::Zero);
}

template <typename T>
Var<T> QualityEnhancement<T>::forward(const Var<T>& f_sa, const Var<T>& lq_center) const {
    const auto& s = f_sa.shape();
    if (lq_center.shape() != nn::Shape{s.n, 1, s.h, s.w})
        throw InvalidArgument("QE: center frame must be (N, 1, H, W) matching the feature");
    const T slope = static_cast<T>(cfg_.leaky_slope);
    auto h = ops::leaky_relu(head1_(f_sa), slope);
    h = ops::leaky_relu(head2_(h), slope);
    for (std::size_t g = 0; g + 1 < blocks_.size(); g += 2) {
        h = blocks_[g](cfg_.use_shifts ? partial_shift(h, shift_h_) : h);
        h = blocks_[g + 1](cfg_.use_shifts ? partial_shift(h, shift_v_) : h);
    }
    return ops::add(lq_center, final_(h));
}

template class ChannelAttentionBlock<float>;
template class ChannelAttentionBlock<double>;
template class QualityEnhancement<float>;
template class QualityEnhancement<double>;

}  // namespace cpga::qe
