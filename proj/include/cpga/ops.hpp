#pragma once

// Differentiable operators on NCHW tensors. Instantiated for float (training,
// inference) and double (gradient probes).
//
// Frame-stacked tensors hold a batch of clips as (N * frames, C, H, W) with
// the frame index varying fastest, so reshaping to (N, frames * C, H, W) is a
// channel concatenation of the frames.

#include "cpga/autograd.hpp"

#include <vector>

namespace cpga::nn::ops {

// Elementwise.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> sigmoid(const Var<T>& x);

// Shape.
template <typename T> Var<T> reshape(const Var<T>& x, Shape s);
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);
template <typename T> Var<T> replicate_pad(const Var<T>& x, int pad);

// Frame-stacked helpers.
template <typename T> Var<T> select_frame(const Var<T>& x, int frames, int index);
template <typename T> Var<T> broadcast_frame(const Var<T>& x, int frames, int index);
/// out[i] = x[i - 1] for i > 0, out[0] = x[0].
template <typename T> Var<T> shift_frames_prev(const Var<T>& x, int frames);

// Normalisation.
template <typename T> Var<T> softmax_channels(const Var<T>& x);
template <typename T> Var<T> softmax_frames(const Var<T>& x, int frames);

// Convolution. Weights: conv (Cout, Cin, k, k); transposed conv (Cin, Cout, k, k).
// Bias has Cout elements and may be undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad,
                        int output_pad);

/// Deformable 3x3 convolution (stride 1, one group, no modulation). `offset`
/// has 18 channels: (dy, dx) for tap k = ky * 3 + kx at channels 2k, 2k + 1.
/// Samples use bilinear interpolation with border replication.
template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const Var<T>& offset, const Var<T>& weight, const Var<T>& bias);

/// Backward warp: out(x, y) = in(x + dx(x, y), y + dy(x, y)); flow channel 0 is
/// dx, channel 1 is dy, in pixels. Bilinear, border replication.
template <typename T> Var<T> warp(const Var<T>& x, const Var<T>& flow);

/// Embedded-Gaussian attention over spatial positions. For each position i:
/// out_i = sum_j softmax_j(q_i . k_j / sqrt(d)) v_j. With window > 0 the
/// attention is restricted to non-overlapping window x window tiles.
template <typename T>
Var<T> nonlocal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int window = 0);

/// Attention matrix for one sample of a global (unwindowed) attention;
/// row-major (HW x HW). Not differentiable; used for inspection.
template <typename T>
std::vector<T> attention_matrix(const Tensor<T>& q, const Tensor<T>& k, int sample);

template <typename T> Var<T> global_avg_pool(const Var<T>& x);
/// x (N, C, H, W) scaled per channel by s (N, C, 1, 1).
template <typename T> Var<T> channel_scale(const Var<T>& x, const Var<T>& s);

/// Shifts channels [first, first + count): the first half by +amount, the
/// second half by -amount, along x (vertical == false) or y. Vacated pixels
/// are zero; other channels pass through unchanged.
template <typename T>
Var<T> partial_shift(const Var<T>& x, int first, int count, int amount, bool vertical);

/// mean(sqrt((pred - target)^2 + eps^2)); target is a constant.
template <typename T> Var<T> charbonnier(const Var<T>& pred, const Tensor<T>& target, T eps);

/// sum(x * w) for a constant w; a scalar probe for gradient checks.
template <typename T> Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w);

}  // namespace cpga::nn::ops
