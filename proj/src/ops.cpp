#include "cpga/ops.hpp"

#include "cpga/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace cpga::nn::ops {

namespace {

template <typename T>
using RMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<RMat<T>>;
template <typename T>
using CMapR = Eigen::Map<const RMat<T>>;

void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument(msg);
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    require(a == b, std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
void accumulate(Node<T>& input, const T* src) {
    auto& g = input.grad_buffer();
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += src[i];
}

// --- im2col ---------------------------------------------------------------

template <typename T>
void im2col(const T* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* col) {
    const std::size_t L = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * L;
                for (int oy = 0; oy < Ho; ++oy) {
                    T* r = row + static_cast<std::size_t>(oy) * Wo;
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        std::fill_n(r, Wo, T(0));
                        continue;
                    }
                    const T* src = img + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        r[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* img) {
    const std::size_t L = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * L;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    const T* r = row + static_cast<std::size_t>(oy) * Wo;
                    T* dst = img + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) dst[ix] += r[ox];
                    }
                }
            }
        }
    }
}

// --- bilinear sampling with border replication ------------------------------

template <typename T>
struct Tap {
    int i00, i01, i10, i11;
    T ay, ax;

    T sample(const T* p) const {
        return (T(1) - ay) * ((T(1) - ax) * p[i00] + ax * p[i01]) + ay * ((T(1) - ax) * p[i10] + ax * p[i11]);
    }
    T d_dx(const T* p) const { return (T(1) - ay) * (p[i01] - p[i00]) + ay * (p[i11] - p[i10]); }
    T d_dy(const T* p) const { return (T(1) - ax) * (p[i10] - p[i00]) + ax * (p[i11] - p[i01]); }
    void scatter(T* p, T g) const {
        p[i00] += g * (T(1) - ay) * (T(1) - ax);
        p[i01] += g * (T(1) - ay) * ax;
        p[i10] += g * ay * (T(1) - ax);
        p[i11] += g * ay * ax;
    }
};

template <typename T>
Tap<T> make_tap(T fy, T fx, int H, int W) {
    // Beyond one pixel outside the frame every sample is the replicated border.
    fy = std::clamp(fy, T(-1), T(H));
    fx = std::clamp(fx, T(-1), T(W));
    const T y0f = std::floor(fy);
    const T x0f = std::floor(fx);
    const int y0 = static_cast<int>(y0f);
    const int x0 = static_cast<int>(x0f);
    const int cy0 = std::clamp(y0, 0, H - 1);
    const int cy1 = std::clamp(y0 + 1, 0, H - 1);
    const int cx0 = std::clamp(x0, 0, W - 1);
    const int cx1 = std::clamp(x0 + 1, 0, W - 1);
    return Tap<T>{cy0 * W + cx0, cy0 * W + cx1, cy1 * W + cx0, cy1 * W + cx1, fy - y0f, fx - x0f};
}

// --- attention kernels ------------------------------------------------------

// Positions of each attention window, row-major inside the window.
std::vector<std::vector<int>> attention_windows(int H, int W, int window) {
    std::vector<std::vector<int>> out;
    if (window <= 0 || (H <= window && W <= window)) {
        out.emplace_back(static_cast<std::size_t>(H) * W);
        std::iota(out.back().begin(), out.back().end(), 0);
        return out;
    }
    for (int y0 = 0; y0 < H; y0 += window) {
        for (int x0 = 0; x0 < W; x0 += window) {
            std::vector<int> idx;
            for (int y = y0; y < std::min(H, y0 + window); ++y)
                for (int x = x0; x < std::min(W, x0 + window); ++x) idx.push_back(y * W + x);
            out.push_back(std::move(idx));
        }
    }
    return out;
}

template <typename T>
RMat<T> gather(const T* base, int channels, std::size_t plane, const std::vector<int>& idx) {
    RMat<T> m(channels, static_cast<Eigen::Index>(idx.size()));
    for (int c = 0; c < channels; ++c) {
        const T* src = base + c * plane;
        for (std::size_t j = 0; j < idx.size(); ++j) m(c, static_cast<Eigen::Index>(j)) = src[idx[j]];
    }
    return m;
}

template <typename T>
void scatter_add(const RMat<T>& m, T* base, std::size_t plane, const std::vector<int>& idx) {
    for (Eigen::Index c = 0; c < m.rows(); ++c) {
        T* dst = base + c * plane;
        for (std::size_t j = 0; j < idx.size(); ++j) dst[idx[j]] += m(c, static_cast<Eigen::Index>(j));
    }
}

template <typename T>
void softmax_rows(RMat<T>& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        auto row = s.row(i);
        const T mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

}  // namespace

// --- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& in : self.inputs)
            if (in->requires_grad) accumulate(*in, self.grad.data.data());
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        const auto& g = self.grad.data;
        if (A.requires_grad) {
            auto& ga = A.grad_buffer().data;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B.value.data[i];
        }
        if (B.requires_grad) {
            auto& gb = B.grad_buffer().data;
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A.value.data[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * a.value().data[i];
    return make_op<T>(std::move(out), {a}, [s](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer().data;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad.data[i];
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out(x.shape());
    const auto& in = x.value().data;
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in[i] > T(0) ? in[i] : slope * in[i];
    return make_op<T>(std::move(out), {x}, [slope](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& g = X.grad_buffer().data;
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad.data[i] * (X.value.data[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out(x.shape());
    const auto& in = x.value().data;
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = T(1) / (T(1) + std::exp(-in[i]));
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer().data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T y = self.value.data[i];
            g[i] += self.grad.data[i] * y * (T(1) - y);
        }
    });
}

// --- shape ------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
    require(s.numel() == x.value().numel(), "reshape: element count mismatch " + x.shape().str() + " -> " + s.str());
    Tensor<T> out;
    out.shape = s;
    out.data = x.value().data;
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        accumulate(*self.inputs[0], self.grad.data.data());
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    require(!xs.empty(), "concat_channels: no inputs");
    Shape s = xs[0].shape();
    int channels = 0;
    for (const auto& x : xs) {
        require(x.shape().n == s.n && x.shape().h == s.h && x.shape().w == s.w, "concat_channels: shape mismatch");
        channels += x.shape().c;
    }
    s.c = channels;
    Tensor<T> out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        int c0 = 0;
        for (const auto& x : xs) {
            const int cx = x.shape().c;
            std::copy_n(x.value().plane(n, 0), cx * plane, out.plane(n, c0));
            c0 += cx;
        }
    }
    return make_op<T>(std::move(out), xs, [](Node<T>& self) {
        const Shape s = self.value.shape;
        const std::size_t plane = s.plane();
        int c0 = 0;
        for (auto& in : self.inputs) {
            const int cx = in->value.shape.c;
            if (in->requires_grad) {
                auto& g = in->grad_buffer();
                for (int n = 0; n < s.n; ++n) {
                    const T* src = self.grad.plane(n, c0);
                    T* dst = g.plane(n, 0);
                    for (std::size_t i = 0; i < cx * plane; ++i) dst[i] += src[i];
                }
            }
            c0 += cx;
        }
    });
}

template <typename T>
Var<T> replicate_pad(const Var<T>& x, int pad) {
    const Shape is = x.shape();
    const Shape os{is.n, is.c, is.h + 2 * pad, is.w + 2 * pad};
    Tensor<T> out(os);
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c) {
            const T* src = x.value().plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < os.h; ++y) {
                const int sy = std::clamp(y - pad, 0, is.h - 1);
                for (int xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[sy * is.w + std::clamp(xx - pad, 0, is.w - 1)];
            }
        }
    return make_op<T>(std::move(out), {x}, [pad](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const Shape is = g.shape;
        const Shape os = self.value.shape;
        for (int n = 0; n < is.n; ++n)
            for (int c = 0; c < is.c; ++c) {
                const T* src = self.grad.plane(n, c);
                T* dst = g.plane(n, c);
                for (int y = 0; y < os.h; ++y) {
                    const int sy = std::clamp(y - pad, 0, is.h - 1);
                    for (int xx = 0; xx < os.w; ++xx)
                        dst[sy * is.w + std::clamp(xx - pad, 0, is.w - 1)] += src[y * os.w + xx];
                }
            }
    });
}

// --- frame-stacked ----------------------------------------------------------

template <typename T>
Var<T> select_frame(const Var<T>& x, int frames, int index) {
    const Shape s = x.shape();
    require(frames > 0 && s.n % frames == 0 && index >= 0 && index < frames, "select_frame: bad frame layout");
    const int N = s.n / frames;
    const std::size_t block = static_cast<std::size_t>(s.c) * s.plane();
    Tensor<T> out(Shape{N, s.c, s.h, s.w});
    for (int n = 0; n < N; ++n) std::copy_n(x.value().plane(n * frames + index, 0), block, out.plane(n, 0));
    return make_op<T>(std::move(out), {x}, [frames, index, block, N](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (int n = 0; n < N; ++n) {
            T* dst = g.plane(n * frames + index, 0);
            const T* src = self.grad.plane(n, 0);
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
Var<T> broadcast_frame(const Var<T>& x, int frames, int index) {
    const Shape s = x.shape();
    require(frames > 0 && s.n % frames == 0 && index >= 0 && index < frames, "broadcast_frame: bad frame layout");
    const int N = s.n / frames;
    const std::size_t block = static_cast<std::size_t>(s.c) * s.plane();
    Tensor<T> out(s);
    for (int n = 0; n < N; ++n)
        for (int f = 0; f < frames; ++f)
            std::copy_n(x.value().plane(n * frames + index, 0), block, out.plane(n * frames + f, 0));
    return make_op<T>(std::move(out), {x}, [frames, index, block, N](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (int n = 0; n < N; ++n) {
            T* dst = g.plane(n * frames + index, 0);
            for (int f = 0; f < frames; ++f) {
                const T* src = self.grad.plane(n * frames + f, 0);
                for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
        }
    });
}

template <typename T>
Var<T> shift_frames_prev(const Var<T>& x, int frames) {
    const Shape s = x.shape();
    require(frames > 0 && s.n % frames == 0, "shift_frames_prev: bad frame layout");
    const int N = s.n / frames;
    const std::size_t block = static_cast<std::size_t>(s.c) * s.plane();
    Tensor<T> out(s);
    for (int n = 0; n < N; ++n)
        for (int f = 0; f < frames; ++f)
            std::copy_n(x.value().plane(n * frames + std::max(f - 1, 0), 0), block, out.plane(n * frames + f, 0));
    return make_op<T>(std::move(out), {x}, [frames, block, N](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (int n = 0; n < N; ++n)
            for (int f = 0; f < frames; ++f) {
                T* dst = g.plane(n * frames + std::max(f - 1, 0), 0);
                const T* src = self.grad.plane(n * frames + f, 0);
                for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
    });
}

// --- softmax ----------------------------------------------------------------

namespace {

// Softmax over `count` entries spaced `stride` apart, for every (outer, inner)
// pair. Layout: index = outer * count * stride + k * stride + inner.
template <typename T>
void strided_softmax(const T* in, T* out, std::size_t outer, std::size_t count, std::size_t stride) {
    for (std::size_t o = 0; o < outer; ++o) {
        const T* src = in + o * count * stride;
        T* dst = out + o * count * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            T mx = src[i];
            for (std::size_t k = 1; k < count; ++k) mx = std::max(mx, src[k * stride + i]);
            T sum = 0;
            for (std::size_t k = 0; k < count; ++k) {
                const T e = std::exp(src[k * stride + i] - mx);
                dst[k * stride + i] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::size_t k = 0; k < count; ++k) dst[k * stride + i] *= inv;
        }
    }
}

template <typename T>
void strided_softmax_backward(const T* y, const T* gy, T* gx, std::size_t outer, std::size_t count,
                              std::size_t stride) {
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = o * count * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            T dot = 0;
            for (std::size_t k = 0; k < count; ++k) dot += y[base + k * stride + i] * gy[base + k * stride + i];
            for (std::size_t k = 0; k < count; ++k) {
                const std::size_t j = base + k * stride + i;
                gx[j] += y[j] * (gy[j] - dot);
            }
        }
    }
}

}  // namespace

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
    const Shape s = x.shape();
    Tensor<T> out(s);
    strided_softmax(x.value().data.data(), out.data.data(), s.n, s.c, s.plane());
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        const Shape s = self.value.shape;
        auto& g = self.inputs[0]->grad_buffer();
        strided_softmax_backward(self.value.data.data(), self.grad.data.data(), g.data.data(), s.n, s.c, s.plane());
    });
}

template <typename T>
Var<T> softmax_frames(const Var<T>& x, int frames) {
    const Shape s = x.shape();
    require(frames > 0 && s.n % frames == 0, "softmax_frames: bad frame layout");
    const std::size_t stride = static_cast<std::size_t>(s.c) * s.plane();
    Tensor<T> out(s);
    strided_softmax(x.value().data.data(), out.data.data(), s.n / frames, frames, stride);
    return make_op<T>(std::move(out), {x}, [frames, stride](Node<T>& self) {
        const Shape s = self.value.shape;
        auto& g = self.inputs[0]->grad_buffer();
        strided_softmax_backward(self.value.data.data(), self.grad.data.data(), g.data.data(), s.n / frames,
                                 frames, stride);
    });
}

// --- convolution ------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
    const Shape is = x.shape();
    const Shape ws = weight.shape();
    require(ws.h == ws.w && ws.c == is.c,
            "conv2d: weight " + ws.str() + " incompatible with input " + is.str());
    require(!bias.defined() || static_cast<int>(bias.value().numel()) == ws.n, "conv2d: bias size mismatch");
    const int k = ws.h;
    const int Ho = (is.h + 2 * pad - k) / stride + 1;
    const int Wo = (is.w + 2 * pad - k) / stride + 1;
    require(Ho > 0 && Wo > 0, "conv2d: input smaller than kernel");
    const int Cout = ws.n;
    const int K = is.c * k * k;
    const int L = Ho * Wo;
    const bool pointwise = k == 1 && stride == 1 && pad == 0;

    Tensor<T> out(Shape{is.n, Cout, Ho, Wo});
    CMapR<T> Wm(weight.value().data.data(), Cout, K);
    AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(K) * L);
    for (int n = 0; n < is.n; ++n) {
        const T* src = x.value().plane(n, 0);
        if (!pointwise) im2col(src, is.c, is.h, is.w, k, stride, pad, Ho, Wo, col.data());
        CMapR<T> Cm(pointwise ? src : col.data(), K, L);
        MapR<T> Om(out.plane(n, 0), Cout, L);
        Om.noalias() = Wm * Cm;
        if (bias.defined())
            for (int co = 0; co < Cout; ++co) Om.row(co).array() += bias.value().data[co];
    }

    std::vector<Var<T>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_op<T>(std::move(out), inputs, [=](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& Wt = *self.inputs[1];
        Node<T>* Bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        CMapR<T> Wm(Wt.value.data.data(), Cout, K);
        AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(K) * L);
        AlignedVector<T> dcol(X.requires_grad && !pointwise ? static_cast<std::size_t>(K) * L : 0);
        for (int n = 0; n < is.n; ++n) {
            CMapR<T> G(self.grad.plane(n, 0), Cout, L);
            const T* src = X.value.plane(n, 0);
            if (Wt.requires_grad) {
                if (!pointwise) im2col(src, is.c, is.h, is.w, k, stride, pad, Ho, Wo, col.data());
                CMapR<T> Cm(pointwise ? src : col.data(), K, L);
                MapR<T> dW(Wt.grad_buffer().data.data(), Cout, K);
                dW.noalias() += G * Cm.transpose();
            }
            if (Bn && Bn->requires_grad) {
                auto& db = Bn->grad_buffer().data;
                for (int co = 0; co < Cout; ++co) db[co] += G.row(co).sum();
            }
            if (X.requires_grad) {
                T* dx = X.grad_buffer().plane(n, 0);
                if (pointwise) {
                    MapR<T> dX(dx, K, L);
                    dX.noalias() += Wm.transpose() * G;
                } else {
                    MapR<T> dC(dcol.data(), K, L);
                    dC.noalias() = Wm.transpose() * G;
                    col2im(dcol.data(), is.c, is.h, is.w, k, stride, pad, Ho, Wo, dx);
                }
            }
        }
    });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad,
                        int output_pad) {
    const Shape is = x.shape();
    const Shape ws = weight.shape();
    require(ws.h == ws.w && ws.n == is.c,
            "conv_transpose2d: weight " + ws.str() + " incompatible with input " + is.str());
    require(output_pad >= 0 && output_pad < stride, "conv_transpose2d: output_pad must be < stride");
    const int k = ws.h;
    const int Cout = ws.c;
    require(!bias.defined() || static_cast<int>(bias.value().numel()) == Cout, "conv_transpose2d: bias size mismatch");
    const int Ho = (is.h - 1) * stride - 2 * pad + k + output_pad;
    const int Wo = (is.w - 1) * stride - 2 * pad + k + output_pad;
    const int Cin = is.c;
    const int K = Cout * k * k;
    const int L = is.h * is.w;

    Tensor<T> out(Shape{is.n, Cout, Ho, Wo});
    CMapR<T> Wm(weight.value().data.data(), Cin, K);
    RMat<T> col(K, L);
    for (int n = 0; n < is.n; ++n) {
        CMapR<T> Xm(x.value().plane(n, 0), Cin, L);
        col.noalias() = Wm.transpose() * Xm;
        T* dst = out.plane(n, 0);
        col2im(col.data(), Cout, Ho, Wo, k, stride, pad, is.h, is.w, dst);
        if (bias.defined())
            for (int co = 0; co < Cout; ++co) {
                T* p = out.plane(n, co);
                for (std::size_t i = 0; i < out.shape.plane(); ++i) p[i] += bias.value().data[co];
            }
    }

    std::vector<Var<T>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_op<T>(std::move(out), inputs, [=](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& Wt = *self.inputs[1];
        Node<T>* Bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        CMapR<T> Wm(Wt.value.data.data(), Cin, K);
        RMat<T> dcol(K, L);
        for (int n = 0; n < is.n; ++n) {
            im2col(self.grad.plane(n, 0), Cout, Ho, Wo, k, stride, pad, is.h, is.w, dcol.data());
            if (X.requires_grad) {
                MapR<T> dX(X.grad_buffer().plane(n, 0), Cin, L);
                dX.noalias() += Wm * dcol;
            }
            if (Wt.requires_grad) {
                CMapR<T> Xm(X.value.plane(n, 0), Cin, L);
                MapR<T> dW(Wt.grad_buffer().data.data(), Cin, K);
                dW.noalias() += Xm * dcol.transpose();
            }
            if (Bn && Bn->requires_grad) {
                auto& db = Bn->grad_buffer().data;
                const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
                for (int co = 0; co < Cout; ++co) {
                    const T* g = self.grad.plane(n, co);
                    T s = 0;
                    for (std::size_t i = 0; i < plane; ++i) s += g[i];
                    db[co] += s;
                }
            }
        }
    });
}

// --- deformable convolution -------------------------------------------------

namespace {

template <typename T>
void deform_taps(const T* off, int H, int W, std::vector<Tap<T>>& taps) {
    const std::size_t L = static_cast<std::size_t>(H) * W;
    taps.resize(9 * L);
    for (int k = 0; k < 9; ++k) {
        const int ky = k / 3 - 1;
        const int kx = k % 3 - 1;
        const T* oy = off + (2 * k) * L;
        const T* ox = off + (2 * k + 1) * L;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * W + x;
                taps[k * L + p] = make_tap<T>(T(y + ky) + oy[p], T(x + kx) + ox[p], H, W);
            }
    }
}

template <typename T>
void deform_im2col(const T* img, int C, int H, int W, const std::vector<Tap<T>>& taps, T* col) {
    const std::size_t L = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        const T* p = img + c * L;
        for (int k = 0; k < 9; ++k) {
            T* row = col + (static_cast<std::size_t>(c) * 9 + k) * L;
            const Tap<T>* tk = taps.data() + k * L;
            for (std::size_t i = 0; i < L; ++i) row[i] = tk[i].sample(p);
        }
    }
}

}  // namespace

template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const Var<T>& offset, const Var<T>& weight, const Var<T>& bias) {
    const Shape is = x.shape();
    const Shape ws = weight.shape();
    require(ws.h == 3 && ws.w == 3 && ws.c == is.c, "deform_conv2d: weight must be (Cout, Cin, 3, 3)");
    require(offset.shape() == Shape{is.n, 18, is.h, is.w}, "deform_conv2d: offset must be (N, 18, H, W)");
    require(!bias.defined() || static_cast<int>(bias.value().numel()) == ws.n, "deform_conv2d: bias size mismatch");
    const int Cout = ws.n;
    const int C = is.c;
    const int K = C * 9;
    const int L = is.h * is.w;

    Tensor<T> out(Shape{is.n, Cout, is.h, is.w});
    CMapR<T> Wm(weight.value().data.data(), Cout, K);
    AlignedVector<T> col(static_cast<std::size_t>(K) * L);
    std::vector<Tap<T>> taps;
    for (int n = 0; n < is.n; ++n) {
        deform_taps(offset.value().plane(n, 0), is.h, is.w, taps);
        deform_im2col(x.value().plane(n, 0), C, is.h, is.w, taps, col.data());
        CMapR<T> Cm(col.data(), K, L);
        MapR<T> Om(out.plane(n, 0), Cout, L);
        Om.noalias() = Wm * Cm;
        if (bias.defined())
            for (int co = 0; co < Cout; ++co) Om.row(co).array() += bias.value().data[co];
    }

    std::vector<Var<T>> inputs{x, offset, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_op<T>(std::move(out), inputs, [=](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& O = *self.inputs[1];
        auto& Wt = *self.inputs[2];
        Node<T>* Bn = self.inputs.size() > 3 ? self.inputs[3].get() : nullptr;
        CMapR<T> Wm(Wt.value.data.data(), Cout, K);
        AlignedVector<T> col(static_cast<std::size_t>(K) * L);
        RMat<T> dcol(K, L);
        std::vector<Tap<T>> taps;
        for (int n = 0; n < is.n; ++n) {
            CMapR<T> G(self.grad.plane(n, 0), Cout, L);
            deform_taps(O.value.plane(n, 0), is.h, is.w, taps);
            if (Wt.requires_grad) {
                deform_im2col(X.value.plane(n, 0), C, is.h, is.w, taps, col.data());
                CMapR<T> Cm(col.data(), K, L);
                MapR<T> dW(Wt.grad_buffer().data.data(), Cout, K);
                dW.noalias() += G * Cm.transpose();
            }
            if (Bn && Bn->requires_grad) {
                auto& db = Bn->grad_buffer().data;
                for (int co = 0; co < Cout; ++co) db[co] += G.row(co).sum();
            }
            if (!X.requires_grad && !O.requires_grad) continue;
            dcol.noalias() = Wm.transpose() * G;
            T* dx = X.requires_grad ? X.grad_buffer().plane(n, 0) : nullptr;
            T* doff = O.requires_grad ? O.grad_buffer().plane(n, 0) : nullptr;
            const T* img = X.value.plane(n, 0);
            for (int c = 0; c < C; ++c) {
                const T* p = img + static_cast<std::size_t>(c) * L;
                for (int k = 0; k < 9; ++k) {
                    const T* g = dcol.data() + (static_cast<std::size_t>(c) * 9 + k) * L;
                    const Tap<T>* tk = taps.data() + static_cast<std::size_t>(k) * L;
                    if (dx) {
                        T* dp = dx + static_cast<std::size_t>(c) * L;
                        for (int i = 0; i < L; ++i) tk[i].scatter(dp, g[i]);
                    }
                    if (doff) {
                        T* dy_out = doff + static_cast<std::size_t>(2 * k) * L;
                        T* dx_out = doff + static_cast<std::size_t>(2 * k + 1) * L;
                        for (int i = 0; i < L; ++i) {
                            dy_out[i] += g[i] * tk[i].d_dy(p);
                            dx_out[i] += g[i] * tk[i].d_dx(p);
                        }
                    }
                }
            }
        }
    });
}

// --- warp -------------------------------------------------------------------

template <typename T>
Var<T> warp(const Var<T>& x, const Var<T>& flow) {
    const Shape s = x.shape();
    require(flow.shape() == Shape{s.n, 2, s.h, s.w}, "warp: flow must be (N, 2, H, W) matching the feature");
    const std::size_t L = s.plane();
    Tensor<T> out(s);
    std::vector<Tap<T>> taps(L);
    auto build = [&](const Tensor<T>& fl, int n) {
        const T* fx = fl.plane(n, 0);
        const T* fy = fl.plane(n, 1);
        for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
                const std::size_t p = static_cast<std::size_t>(y) * s.w + xx;
                taps[p] = make_tap<T>(T(y) + fy[p], T(xx) + fx[p], s.h, s.w);
            }
    };
    for (int n = 0; n < s.n; ++n) {
        build(flow.value(), n);
        for (int c = 0; c < s.c; ++c) {
            const T* src = x.value().plane(n, c);
            T* dst = out.plane(n, c);
            for (std::size_t p = 0; p < L; ++p) dst[p] = taps[p].sample(src);
        }
    }
    return make_op<T>(std::move(out), {x, flow}, [s, L](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& Fl = *self.inputs[1];
        std::vector<Tap<T>> taps(L);
        for (int n = 0; n < s.n; ++n) {
            const T* fx = Fl.value.plane(n, 0);
            const T* fy = Fl.value.plane(n, 1);
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) {
                    const std::size_t p = static_cast<std::size_t>(y) * s.w + xx;
                    taps[p] = make_tap<T>(T(y) + fy[p], T(xx) + fx[p], s.h, s.w);
                }
            T* dfx = Fl.requires_grad ? Fl.grad_buffer().plane(n, 0) : nullptr;
            T* dfy = Fl.requires_grad ? Fl.grad_buffer().plane(n, 1) : nullptr;
            for (int c = 0; c < s.c; ++c) {
                const T* g = self.grad.plane(n, c);
                const T* src = X.value.plane(n, c);
                if (X.requires_grad) {
                    T* dst = X.grad_buffer().plane(n, c);
                    for (std::size_t p = 0; p < L; ++p) taps[p].scatter(dst, g[p]);
                }
                if (dfx)
                    for (std::size_t p = 0; p < L; ++p) {
                        dfx[p] += g[p] * taps[p].d_dx(src);
                        dfy[p] += g[p] * taps[p].d_dy(src);
                    }
            }
        }
    });
}

// --- non-local attention ----------------------------------------------------

template <typename T>
Var<T> nonlocal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int window) {
    const Shape qs = q.shape();
    const Shape vs = v.shape();
    require(k.shape() == qs, "nonlocal_attention: query/key shape mismatch");
    require(vs.n == qs.n && vs.h == qs.h && vs.w == qs.w, "nonlocal_attention: value spatial shape mismatch");
    const int d = qs.c;
    const int cv = vs.c;
    const std::size_t plane = qs.plane();
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(d));
    const auto windows = std::make_shared<const std::vector<std::vector<int>>>(attention_windows(qs.h, qs.w, window));

    bool needs_grad = GradMode::enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
    auto saved = std::make_shared<std::vector<RMat<T>>>();

    Tensor<T> out(Shape{qs.n, cv, qs.h, qs.w});
    for (int n = 0; n < qs.n; ++n) {
        for (const auto& idx : *windows) {
            const RMat<T> Q = gather(q.value().plane(n, 0), d, plane, idx);
            const RMat<T> Kt = gather(k.value().plane(n, 0), d, plane, idx);
            const RMat<T> V = gather(v.value().plane(n, 0), cv, plane, idx);
            const Eigen::Index Lw = static_cast<Eigen::Index>(idx.size());
            RMat<T> O(cv, Lw);
            if (needs_grad) {
                RMat<T> A(Lw, Lw);
                A.noalias() = Q.transpose() * Kt;
                A *= scale_factor;
                softmax_rows(A);
                O.noalias() = V * A.transpose();
                saved->push_back(std::move(A));
            } else {
                // Row blocks bound memory at large resolutions.
                const Eigen::Index chunk = 512;
                for (Eigen::Index r0 = 0; r0 < Lw; r0 += chunk) {
                    const Eigen::Index rows = std::min(chunk, Lw - r0);
                    RMat<T> A(rows, Lw);
                    A.noalias() = Q.middleCols(r0, rows).transpose() * Kt;
                    A *= scale_factor;
                    softmax_rows(A);
                    O.middleCols(r0, rows).noalias() = V * A.transpose();
                }
            }
            for (int c = 0; c < cv; ++c) {
                T* dst = out.plane(n, c);
                for (std::size_t j = 0; j < idx.size(); ++j) dst[idx[j]] = O(c, static_cast<Eigen::Index>(j));
            }
        }
    }

    return make_op<T>(std::move(out), {q, k, v}, [=](Node<T>& self) {
        auto& Qn = *self.inputs[0];
        auto& Kn = *self.inputs[1];
        auto& Vn = *self.inputs[2];
        std::size_t w = 0;
        for (int n = 0; n < qs.n; ++n) {
            for (const auto& idx : *windows) {
                const RMat<T>& A = (*saved)[w++];
                const RMat<T> G = gather(self.grad.plane(n, 0), cv, plane, idx);
                const Eigen::Index Lw = A.rows();
                if (Vn.requires_grad) {
                    RMat<T> dV(cv, Lw);
                    dV.noalias() = G * A;
                    scatter_add(dV, Vn.grad_buffer().plane(n, 0), plane, idx);
                }
                if (!Qn.requires_grad && !Kn.requires_grad) continue;
                const RMat<T> V = gather(Vn.value.plane(n, 0), cv, plane, idx);
                RMat<T> dS(Lw, Lw);
                dS.noalias() = G.transpose() * V;  // gradient w.r.t. the attention weights
                for (Eigen::Index i = 0; i < Lw; ++i) {
                    const T r = dS.row(i).dot(A.row(i));
                    dS.row(i).array() = A.row(i).array() * (dS.row(i).array() - r);
                }
                if (Qn.requires_grad) {
                    const RMat<T> Kt = gather(Kn.value.plane(n, 0), d, plane, idx);
                    RMat<T> dQ(d, dS.rows());
                    dQ.noalias() = Kt * dS.transpose();
                    dQ *= scale_factor;
                    scatter_add(dQ, Qn.grad_buffer().plane(n, 0), plane, idx);
                }
                if (Kn.requires_grad) {
                    const RMat<T> Q = gather(Qn.value.plane(n, 0), d, plane, idx);
                    RMat<T> dK(d, dS.cols());
                    dK.noalias() = Q * dS;
                    dK *= scale_factor;
                    scatter_add(dK, Kn.grad_buffer().plane(n, 0), plane, idx);
                }
            }
        }
    });
}

template <typename T>
std::vector<T> attention_matrix(const Tensor<T>& q, const Tensor<T>& k, int sample) {
    require(q.shape == k.shape, "attention_matrix: query/key shape mismatch");
    const int d = q.shape.c;
    const Eigen::Index L = static_cast<Eigen::Index>(q.shape.plane());
    CMapR<T> Q(q.plane(sample, 0), d, L);
    CMapR<T> K(k.plane(sample, 0), d, L);
    RMat<T> A(L, L);
    A.noalias() = Q.transpose() * K;
    A /= std::sqrt(static_cast<T>(d));
    softmax_rows(A);
    return std::vector<T>(A.data(), A.data() + A.size());
}

// --- channel attention helpers ----------------------------------------------

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* p = x.value().plane(n, c);
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc / static_cast<T>(plane);
        }
    return make_op<T>(std::move(out), {x}, [s, plane](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const T v = self.grad.at(n, c, 0, 0) / static_cast<T>(plane);
                T* p = g.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) p[i] += v;
            }
    });
}

template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& s) {
    const Shape xs = x.shape();
    require(s.shape() == Shape{xs.n, xs.c, 1, 1}, "channel_scale: scale must be (N, C, 1, 1)");
    const std::size_t plane = xs.plane();
    Tensor<T> out(xs);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
            const T f = s.value().at(n, c, 0, 0);
            const T* src = x.value().plane(n, c);
            T* dst = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * f;
        }
    return make_op<T>(std::move(out), {x, s}, [xs, plane](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& S = *self.inputs[1];
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c) {
                const T* g = self.grad.plane(n, c);
                if (X.requires_grad) {
                    const T f = S.value.at(n, c, 0, 0);
                    T* dx = X.grad_buffer().plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) dx[i] += g[i] * f;
                }
                if (S.requires_grad) {
                    const T* src = X.value.plane(n, c);
                    T acc = 0;
                    for (std::size_t i = 0; i < plane; ++i) acc += g[i] * src[i];
                    S.grad_buffer().at(n, c, 0, 0) += acc;
                }
            }
    });
}

// --- partial channel shift --------------------------------------------------

namespace {

// dst(x) = src(x - amount) along the chosen axis, zero where the source is outside.
template <typename T>
void shift_plane(const T* src, T* dst, int H, int W, int amount, bool vertical, bool accumulate_into) {
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int sy = vertical ? y - amount : y;
            const int sx = vertical ? x : x - amount;
            const bool inside = sy >= 0 && sy < H && sx >= 0 && sx < W;
            const T v = inside ? src[sy * W + sx] : T(0);
            if (accumulate_into)
                dst[y * W + x] += v;
            else
                dst[y * W + x] = v;
        }
}

}  // namespace

template <typename T>
Var<T> partial_shift(const Var<T>& x, int first, int count, int amount, bool vertical) {
    const Shape s = x.shape();
    require(count % 2 == 0 && first >= 0 && first + count <= s.c, "partial_shift: invalid channel window");
    Tensor<T> out = x.value();
    const int half = count / 2;
    for (int n = 0; n < s.n; ++n)
        for (int c = first; c < first + count; ++c) {
            const int a = c < first + half ? amount : -amount;
            shift_plane(x.value().plane(n, c), out.plane(n, c), s.h, s.w, a, vertical, false);
        }
    return make_op<T>(std::move(out), {x}, [=](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const std::size_t plane = s.plane();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const T* src = self.grad.plane(n, c);
                T* dst = g.plane(n, c);
                if (c < first || c >= first + count) {
                    for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
                } else {
                    const int a = c < first + half ? amount : -amount;
                    shift_plane(src, dst, s.h, s.w, -a, vertical, true);
                }
            }
    });
}

// --- losses -----------------------------------------------------------------

template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Tensor<T>& target, T eps) {
    require_same(pred.shape(), target.shape, "charbonnier");
    const auto& p = pred.value().data;
    const T e2 = eps * eps;
    T acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T d = p[i] - target.data[i];
        acc += std::sqrt(d * d + e2);
    }
    Tensor<T> out(Shape{1, 1, 1, 1});
    const T inv_n = T(1) / static_cast<T>(p.size());
    out.data[0] = acc * inv_n;
    return make_op<T>(std::move(out), {pred}, [target, e2, inv_n](Node<T>& self) {
        auto& P = *self.inputs[0];
        auto& g = P.grad_buffer().data;
        const T up = self.grad.data[0] * inv_n;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T d = P.value.data[i] - target.data[i];
            g[i] += up * d / std::sqrt(d * d + e2);
        }
    });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
    require_same(x.shape(), w.shape, "weighted_sum");
    T acc = 0;
    for (std::size_t i = 0; i < w.data.size(); ++i) acc += x.value().data[i] * w.data[i];
    Tensor<T> out(Shape{1, 1, 1, 1});
    out.data[0] = acc;
    return make_op<T>(std::move(out), {x}, [w](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer().data;
        const T up = self.grad.data[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * w.data[i];
    });
}

#define CPGA_INSTANTIATE_OPS(T)                                                                          \
    template Var<T> add(const Var<T>&, const Var<T>&);                                                   \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                                   \
    template Var<T> scale(const Var<T>&, T);                                                             \
    template Var<T> leaky_relu(const Var<T>&, T);                                                        \
    template Var<T> sigmoid(const Var<T>&);                                                              \
    template Var<T> reshape(const Var<T>&, Shape);                                                       \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                                         \
    template Var<T> replicate_pad(const Var<T>&, int);                                                   \
    template Var<T> select_frame(const Var<T>&, int, int);                                               \
    template Var<T> broadcast_frame(const Var<T>&, int, int);                                            \
    template Var<T> shift_frames_prev(const Var<T>&, int);                                               \
    template Var<T> softmax_channels(const Var<T>&);                                                     \
    template Var<T> softmax_frames(const Var<T>&, int);                                                  \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                       \
    template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int);        \
    template Var<T> deform_conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);           \
    template Var<T> warp(const Var<T>&, const Var<T>&);                                                  \
    template Var<T> nonlocal_attention(const Var<T>&, const Var<T>&, const Var<T>&, int);                \
    template std::vector<T> attention_matrix(const Tensor<T>&, const Tensor<T>&, int);                   \
    template Var<T> global_avg_pool(const Var<T>&);                                                      \
    template Var<T> channel_scale(const Var<T>&, const Var<T>&);                                         \
    template Var<T> partial_shift(const Var<T>&, int, int, int, bool);                                   \
    template Var<T> charbonnier(const Var<T>&, const Tensor<T>&, T);                                     \
    template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

CPGA_INSTANTIATE_OPS(float)
CPGA_INSTANTIATE_OPS(double)

}  // namespace cpga::nn::ops
