#include "doctest.h"

#include "cpga/error.hpp"
#include "cpga/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace cpga;
using namespace cpga::testing;
namespace ops = nn::ops;

namespace {

Tensor<double> ramp_x(int n, int c, int h, int w) {
    Tensor<double> t(Shape{n, c, h, w});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < c; ++k)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) t.at(i, k, y, x) = x;
    return t;
}

Tensor<double> constant_flow(int n, int h, int w, double dx, double dy) {
    Tensor<double> f(Shape{n, 2, h, w});
    for (int i = 0; i < n; ++i)
        for (std::size_t p = 0; p < f.shape.plane(); ++p) {
            f.plane(i, 0)[p] = dx;
            f.plane(i, 1)[p] = dy;
        }
    return f;
}

Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                           int pad) {
    const int k = w.shape.h;
    const int oh = (x.shape.h + 2 * pad - k) / stride + 1, ow = (x.shape.w + 2 * pad - k) / stride + 1;
    Tensor<double> out(Shape{x.shape.n, w.shape.n, oh, ow});
    for (int n = 0; n < x.shape.n; ++n)
        for (int o = 0; o < w.shape.n; ++o)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    double s = b.empty() ? 0.0 : b.data[o];
                    for (int i = 0; i < x.shape.c; ++i)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int sy = y * stride + ky - pad, sx = xx * stride + kx - pad;
                                if (sy < 0 || sx < 0 || sy >= x.shape.h || sx >= x.shape.w) continue;
                                s += w.at(o, i, ky, kx) * x.at(n, i, sy, sx);
                            }
                    out.at(n, o, y, xx) = s;
                }
    return out;
}

// Scatter form of the transposed convolution.
Tensor<double> conv_transpose_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                     int stride, int pad, int out_pad) {
    const int k = w.shape.h;
    const int oh = (x.shape.h - 1) * stride - 2 * pad + k + out_pad;
    const int ow = (x.shape.w - 1) * stride - 2 * pad + k + out_pad;
    Tensor<double> out(Shape{x.shape.n, w.shape.c, oh, ow});
    for (int n = 0; n < x.shape.n; ++n) {
        for (int o = 0; o < w.shape.c; ++o)
            for (std::size_t p = 0; p < out.shape.plane(); ++p) out.plane(n, o)[p] = b.data[o];
        for (int i = 0; i < x.shape.c; ++i)
            for (int y = 0; y < x.shape.h; ++y)
                for (int xx = 0; xx < x.shape.w; ++xx)
                    for (int o = 0; o < w.shape.c; ++o)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int ty = y * stride + ky - pad, tx = xx * stride + kx - pad;
                                if (ty < 0 || tx < 0 || ty >= oh || tx >= ow) continue;
                                out.at(n, o, ty, tx) += x.at(n, i, y, xx) * w.at(i, o, ky, kx);
                            }
    }
    return out;
}

}  // namespace

TEST_CASE("warp exactness") {
    std::mt19937_64 rng(1);
    SUBCASE("zero flow is the identity, bit for bit") {
        const auto x = random_tensor({2, 3, 9, 7}, rng);
        const auto y = ops::warp(Var<double>(x), Var<double>(Tensor<double>({2, 2, 9, 7})));
        CHECK(y.value() == x);
        const auto xf = nn::tensor_cast<float>(x);
        CHECK(ops::warp(Var<float>(xf), Var<float>(Tensor<float>({2, 2, 9, 7}))).value() == xf);
    }
    SUBCASE("integer flow (1, 0) on a ramp gives min(x + 1, W - 1)") {
        const int W = 11;
        const auto y = ops::warp(Var<double>(ramp_x(1, 1, 5, W)), Var<double>(constant_flow(1, 5, W, 1.0, 0.0)));
        for (int yy = 0; yy < 5; ++yy)
            for (int x = 0; x < W; ++x) CHECK(y.value().at(0, 0, yy, x) == std::min(x + 1, W - 1));
    }
    SUBCASE("integer flow matches an index oracle in both directions") {
        const auto x = random_tensor({1, 2, 8, 10}, rng);
        for (auto [dx, dy] : {std::pair{-2, 1}, std::pair{3, -3}, std::pair{0, 2}}) {
            const auto y = ops::warp(Var<double>(x), Var<double>(constant_flow(1, 8, 10, dx, dy)));
            for (int c = 0; c < 2; ++c)
                for (int yy = 0; yy < 8; ++yy)
                    for (int xx = 0; xx < 10; ++xx)
                        REQUIRE(y.value().at(0, c, yy, xx) ==
                                x.at(0, c, std::clamp(yy + dy, 0, 7), std::clamp(xx + dx, 0, 9)));
        }
    }
    SUBCASE("flow (0.5, 0) on a ramp gives x + 0.5 in the interior") {
        const int W = 9;
        const auto y = ops::warp(Var<double>(ramp_x(1, 1, 4, W)), Var<double>(constant_flow(1, 4, W, 0.5, 0.0)));
        for (int x = 0; x + 1 < W; ++x) CHECK(y.value().at(0, 0, 2, x) == doctest::Approx(x + 0.5).epsilon(1e-12));
    }
    SUBCASE("fractional per-pixel flow matches the hand bilinear formula") {
        const auto x = random_tensor({2, 2, 7, 9}, rng);
        const auto flow = random_tensor({2, 2, 7, 9}, rng, -3.0, 3.0);
        const auto y = ops::warp(Var<double>(x), Var<double>(flow)).value();
        double err = 0.0;
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 2; ++c)
                for (int yy = 0; yy < 7; ++yy)
                    for (int xx = 0; xx < 9; ++xx) {
                        const double ref = bilinear(x, n, c, yy + flow.at(n, 1, yy, xx), xx + flow.at(n, 0, yy, xx));
                        err = std::max(err, std::abs(ref - y.at(n, c, yy, xx)));
                    }
        CHECK(err < 1e-6);
    }
    SUBCASE("warp is linear in the feature") {
        const auto f = random_tensor({1, 3, 6, 6}, rng), g = random_tensor({1, 3, 6, 6}, rng);
        const auto flow = Var<double>(random_tensor({1, 2, 6, 6}, rng, -2.0, 2.0));
        const double a = 0.7, b = -1.3;
        Tensor<double> mix(f.shape);
        for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * f.data[i] + b * g.data[i];
        const auto lhs = ops::warp(Var<double>(mix), flow).value();
        const auto wf = ops::warp(Var<double>(f), flow).value(), wg = ops::warp(Var<double>(g), flow).value();
        Tensor<double> rhs(f.shape);
        for (std::size_t i = 0; i < rhs.data.size(); ++i) rhs.data[i] = a * wf.data[i] + b * wg.data[i];
        CHECK(max_abs_diff(lhs, rhs) < 1e-6);
    }
    SUBCASE("mirroring the input and negating dx mirrors the output") {
        const auto x = random_tensor({1, 2, 6, 8}, rng);
        const auto flow = random_tensor({1, 2, 6, 8}, rng, -2.0, 2.0);
        Tensor<double> xm(x.shape), fm(flow.shape);
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 8; ++xx) {
                    xm.at(0, c, y, xx) = x.at(0, c, y, 7 - xx);
                    fm.at(0, c, y, xx) = (c == 0 ? -1.0 : 1.0) * flow.at(0, c, y, 7 - xx);
                }
        const auto a = ops::warp(Var<double>(x), Var<double>(flow)).value();
        const auto b = ops::warp(Var<double>(xm), Var<double>(fm)).value();
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 8; ++xx) REQUIRE(b.at(0, c, y, xx) == doctest::Approx(a.at(0, c, y, 7 - xx)));
    }
}

TEST_CASE("partial shift") {
    std::mt19937_64 rng(2);
    const auto x = random_tensor({2, 8, 6, 10}, rng);
    const int first = 3, count = 2, amount = 2;
    SUBCASE("channels outside the window pass through bit-identically") {
        for (bool vertical : {false, true}) {
            const auto y = ops::partial_shift(Var<double>(x), first, count, amount, vertical).value();
            for (int n = 0; n < 2; ++n)
                for (int c = 0; c < 8; ++c) {
                    if (c >= first && c < first + count) continue;
                    for (std::size_t p = 0; p < x.shape.plane(); ++p) REQUIRE(y.plane(n, c)[p] == x.plane(n, c)[p]);
                }
        }
    }
    SUBCASE("first half moves by +amount, second half by -amount, zero fill") {
        const auto r = ramp_x(1, 4, 3, 8);
        const auto y = ops::partial_shift(Var<double>(r), 0, 4, 2, false).value();
        for (int yy = 0; yy < 3; ++yy)
            for (int xx = 0; xx < 8; ++xx) {
                for (int c = 0; c < 2; ++c) CHECK(y.at(0, c, yy, xx) == (xx >= 2 ? xx - 2 : 0));
                for (int c = 2; c < 4; ++c) CHECK(y.at(0, c, yy, xx) == (xx + 2 <= 7 ? xx + 2 : 0));
            }
    }
    SUBCASE("shifting back restores the interior exactly") {
        for (bool vertical : {false, true}) {
            const auto fwd = ops::partial_shift(Var<double>(x), first, count, amount, vertical);
            // Swapping the halves' roles undoes the shift: +a then -a.
            const auto back = ops::partial_shift(fwd, first, count, -amount, vertical).value();
            const int len = vertical ? x.shape.h : x.shape.w;
            for (int n = 0; n < 2; ++n)
                for (int c = first; c < first + count; ++c)
                    for (int y = 0; y < x.shape.h; ++y)
                        for (int xx = 0; xx < x.shape.w; ++xx) {
                            const int pos = vertical ? y : xx;
                            // Each half loses the `amount` pixels that left at its leading edge.
                            const bool lost = c < first + count / 2 ? pos > len - 1 - amount : pos < amount;
                            if (!lost)
                                REQUIRE(back.at(n, c, y, xx) == x.at(n, c, y, xx));
                            else
                                REQUIRE(back.at(n, c, y, xx) == 0.0);
                        }
        }
    }
    SUBCASE("invalid windows are rejected") {
        CHECK_THROWS_AS(ops::partial_shift(Var<double>(x), 7, 2, 2, false), InvalidArgument);
        CHECK_THROWS_AS(ops::partial_shift(Var<double>(x), 0, 3, 2, false), InvalidArgument);
    }
}

TEST_CASE("softmax normalisation") {
    std::mt19937_64 rng(3);
    const auto x = random_tensor({6, 5, 4, 3}, rng, -20.0, 20.0);
    SUBCASE("over channels") {
        const auto y = ops::softmax_channels(Var<double>(x)).value();
        for (int n = 0; n < 6; ++n)
            for (std::size_t p = 0; p < x.shape.plane(); ++p) {
                double s = 0.0;
                for (int c = 0; c < 5; ++c) s += y.plane(n, c)[p];
                REQUIRE(std::abs(s - 1.0) < 1e-12);
            }
    }
    SUBCASE("over frames") {
        const auto y = ops::softmax_frames(Var<double>(x), 3).value();
        for (int clip = 0; clip < 2; ++clip)
            for (int c = 0; c < 5; ++c)
                for (std::size_t p = 0; p < x.shape.plane(); ++p) {
                    double s = 0.0;
                    for (int f = 0; f < 3; ++f) s += y.plane(clip * 3 + f, c)[p];
                    REQUIRE(std::abs(s - 1.0) < 1e-12);
                }
    }
    SUBCASE("equal logits give a uniform gate") {
        const auto y = ops::softmax_channels(Var<double>(Tensor<double>({1, 2, 1, 1}))).value();
        CHECK(y.data[0] == 0.5);
        CHECK(y.data[1] == 0.5);
    }
}

TEST_CASE("convolutions match direct loops") {
    std::mt19937_64 rng(4);
    const auto x = random_tensor({2, 3, 9, 8}, rng);
    SUBCASE("conv2d, 3x3 stride 1 and 2, and 1x1") {
        for (auto [k, stride] : {std::pair{3, 1}, std::pair{3, 2}, std::pair{1, 1}}) {
            const auto w = random_tensor({4, 3, k, k}, rng), b = random_tensor({4, 1, 1, 1}, rng);
            const auto y = ops::conv2d(Var<double>(x), Var<double>(w), Var<double>(b), stride, k / 2).value();
            CHECK(max_abs_diff(y, conv_oracle(x, w, b, stride, k / 2)) < 1e-12);
        }
    }
    SUBCASE("transposed conv exactly doubles H and W") {
        const auto w = random_tensor({3, 5, 3, 3}, rng), b = random_tensor({5, 1, 1, 1}, rng);
        const auto y = ops::conv_transpose2d(Var<double>(x), Var<double>(w), Var<double>(b), 2, 1, 1).value();
        CHECK(y.shape == Shape{2, 5, 18, 16});
        CHECK(max_abs_diff(y, conv_transpose_oracle(x, w, b, 2, 1, 1)) < 1e-12);
    }
    SUBCASE("deformable conv with zero offsets equals a conv over a replicate-padded input") {
        const auto w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4, 1, 1, 1}, rng);
        const auto y = ops::deform_conv2d(Var<double>(x), Var<double>(Tensor<double>({2, 18, 9, 8})), Var<double>(w),
                                          Var<double>(b)).value();
        const auto padded = ops::replicate_pad(Var<double>(x), 1).value();
        CHECK(max_abs_diff(y, conv_oracle(padded, w, b, 1, 0)) < 1e-12);
        // Interior pixels also agree with a zero-padded conv.
        const auto z = conv_oracle(x, w, b, 1, 1);
        for (int n = 0; n < 2; ++n)
            for (int o = 0; o < 4; ++o)
                for (int yy = 1; yy < 8; ++yy)
                    for (int xx = 1; xx < 7; ++xx) CHECK(y.at(n, o, yy, xx) == doctest::Approx(z.at(n, o, yy, xx)));
    }
    SUBCASE("deformable conv samples tap + offset bilinearly") {
        const auto w = random_tensor({2, 3, 3, 3}, rng), b = random_tensor({2, 1, 1, 1}, rng);
        const auto off = random_tensor({2, 18, 9, 8}, rng, -1.5, 1.5);
        const auto y = ops::deform_conv2d(Var<double>(x), Var<double>(off), Var<double>(w), Var<double>(b)).value();
        double err = 0.0;
        for (int n = 0; n < 2; ++n)
            for (int o = 0; o < 2; ++o)
                for (int yy = 0; yy < 9; ++yy)
                    for (int xx = 0; xx < 8; ++xx) {
                        double s = b.data[o];
                        for (int i = 0; i < 3; ++i)
                            for (int tap = 0; tap < 9; ++tap) {
                                const int ky = tap / 3, kx = tap % 3;
                                const double sy = yy + ky - 1 + off.at(n, 2 * tap, yy, xx);
                                const double sx = xx + kx - 1 + off.at(n, 2 * tap + 1, yy, xx);
                                s += w.at(o, i, ky, kx) * bilinear(x, n, i, sy, sx);
                            }
                        err = std::max(err, std::abs(s - y.at(n, o, yy, xx)));
                    }
        CHECK(err < 1e-10);
    }
    SUBCASE("constant input and offsets give a constant output") {
        Tensor<double> c({1, 3, 8, 8}, 0.4);
        Tensor<double> off({1, 18, 8, 8});
        for (int k = 0; k < 18; ++k)
            for (std::size_t p = 0; p < off.shape.plane(); ++p) off.plane(0, k)[p] = 0.3 * (k % 5) - 0.6;
        const auto w = random_tensor({2, 3, 3, 3}, rng), b = random_tensor({2, 1, 1, 1}, rng);
        const auto y = ops::deform_conv2d(Var<double>(c), Var<double>(off), Var<double>(w), Var<double>(b)).value();
        for (int o = 0; o < 2; ++o)
            for (std::size_t p = 0; p < y.shape.plane(); ++p)
                CHECK(y.plane(0, o)[p] == doctest::Approx(y.plane(0, o)[0]).epsilon(1e-12));
    }
}

TEST_CASE("non-local attention") {
    std::mt19937_64 rng(5);
    SUBCASE("matches the quadratic loop oracle") {
        for (auto [h, w] : {std::pair{4, 4}, std::pair{8, 8}, std::pair{5, 7}}) {
            const auto q = random_tensor({2, 4, h, w}, rng), k = random_tensor({2, 4, h, w}, rng);
            const auto v = random_tensor({2, 3, h, w}, rng);
            const auto y = ops::nonlocal_attention(Var<double>(q), Var<double>(k), Var<double>(v)).value();
            CHECK(max_abs_diff(y, attention_oracle(q, k, v)) < 1e-6);
        }
    }
    SUBCASE("rows of the attention matrix sum to one") {
        const auto q = random_tensor({1, 4, 6, 6}, rng, -3, 3), k = random_tensor({1, 4, 6, 6}, rng, -3, 3);
        const auto a = ops::attention_matrix(q, k, 0);
        const int L = 36;
        for (int i = 0; i < L; ++i) {
            double s = 0.0;
            for (int j = 0; j < L; ++j) s += a[i * L + j];
            REQUIRE(std::abs(s - 1.0) < 1e-12);
        }
    }
    SUBCASE("windowed attention equals the oracle applied per tile") {
        const auto q = random_tensor({1, 2, 8, 8}, rng), k = random_tensor({1, 2, 8, 8}, rng);
        const auto v = random_tensor({1, 3, 8, 8}, rng);
        const auto y = ops::nonlocal_attention(Var<double>(q), Var<double>(k), Var<double>(v), 4).value();
        auto tile = [](const Tensor<double>& t, int y0, int x0) {
            Tensor<double> o({1, t.shape.c, 4, 4});
            for (int c = 0; c < t.shape.c; ++c)
                for (int y = 0; y < 4; ++y)
                    for (int x = 0; x < 4; ++x) o.at(0, c, y, x) = t.at(0, c, y0 + y, x0 + x);
            return o;
        };
        for (int y0 : {0, 4})
            for (int x0 : {0, 4}) {
                const auto ref = attention_oracle(tile(q, y0, x0), tile(k, y0, x0), tile(v, y0, x0));
                CHECK(max_abs_diff(tile(y, y0, x0), ref) < 1e-9);
            }
        // A window at least as large as the frame is global attention.
        const auto g = ops::nonlocal_attention(Var<double>(q), Var<double>(k), Var<double>(v), 8).value();
        CHECK(g == ops::nonlocal_attention(Var<double>(q), Var<double>(k), Var<double>(v), 0).value());
    }
    SUBCASE("float inference path agrees with the double result") {
        const auto q = random_tensor({1, 4, 24, 24}, rng), k = random_tensor({1, 4, 24, 24}, rng);
        const auto v = random_tensor({1, 2, 24, 24}, rng);
        const auto ref = ops::nonlocal_attention(Var<double>(q), Var<double>(k), Var<double>(v)).value();
        nn::NoGradGuard ng;
        const auto f = ops::nonlocal_attention(Var<float>(nn::tensor_cast<float>(q)), Var<float>(nn::tensor_cast<float>(k)),
                                               Var<float>(nn::tensor_cast<float>(v)))
                           .value();
        CHECK(max_abs_diff(nn::tensor_cast<double>(f), ref) < 1e-5);
    }
}

TEST_CASE("charbonnier loss") {
    SUBCASE("zero difference gives eps") {
        Tensor<double> a({1, 1, 4, 4}, 0.3);
        CHECK(ops::charbonnier(Var<double>(a), a, 1e-3).value().data[0] == doctest::Approx(1e-3).epsilon(1e-12));
    }
    SUBCASE("uniform difference 3e-3 gives sqrt(10) * 1e-3") {
        Tensor<double> a({1, 1, 4, 4}, 0.3), b({1, 1, 4, 4}, 0.303);
        CHECK(ops::charbonnier(Var<double>(b), a, 1e-3).value().data[0] ==
              doctest::Approx(std::sqrt(10.0) * 1e-3).epsilon(1e-9));
    }
}

TEST_CASE("operator gradients match finite differences") {
    std::mt19937_64 rng(6);
    auto check = [&](Var<double>& x, const std::function<Var<double>()>& fn, double tol = 1e-6) {
        const double e = gradient_error(x, probe(fn));
        CHECK(e < tol);
    };
    SUBCASE("conv2d and transposed conv") {
        Var<double> x(random_tensor({2, 3, 6, 6}, rng), true), w(random_tensor({4, 3, 3, 3}, rng), true);
        Var<double> b(random_tensor({4, 1, 1, 1}, rng), true);
        for (int stride : {1, 2}) {
            auto fn = [&] { return ops::conv2d(x, w, b, stride, 1); };
            check(x, fn);
            check(w, fn);
            check(b, fn);
        }
        Var<double> wt(random_tensor({3, 2, 3, 3}, rng), true), bt(random_tensor({2, 1, 1, 1}, rng), true);
        auto up = [&] { return ops::conv_transpose2d(x, wt, bt, 2, 1, 1); };
        check(x, up);
        check(wt, up);
        check(bt, up);
    }
    SUBCASE("warp w.r.t. feature and flow") {
        Var<double> x(random_tensor({2, 2, 6, 7}, rng), true);
        Var<double> f(random_tensor({2, 2, 6, 7}, rng, -2.3, 2.3), true);
        auto fn = [&] { return ops::warp(x, f); };
        check(x, fn);
        check(f, fn, 1e-5);
    }
    SUBCASE("deformable conv w.r.t. input, offsets and weights") {
        Var<double> x(random_tensor({1, 3, 6, 6}, rng), true);
        Var<double> off(random_tensor({1, 18, 6, 6}, rng, -1.7, 1.7), true);
        Var<double> w(random_tensor({2, 3, 3, 3}, rng), true), b(random_tensor({2, 1, 1, 1}, rng), true);
        auto fn = [&] { return ops::deform_conv2d(x, off, w, b); };
        check(x, fn);
        check(off, fn, 1e-5);
        check(w, fn);
        check(b, fn);
    }
    SUBCASE("attention w.r.t. queries, keys and values, global and windowed") {
        Var<double> q(random_tensor({2, 3, 4, 6}, rng), true), k(random_tensor({2, 3, 4, 6}, rng), true);
        Var<double> v(random_tensor({2, 2, 4, 6}, rng), true);
        for (int window : {0, 3}) {
            auto fn = [&] { return ops::nonlocal_attention(q, k, v, window); };
            check(q, fn);
            check(k, fn);
            check(v, fn);
        }
    }
    SUBCASE("softmaxes, activations and shape ops") {
        Var<double> x(random_tensor({6, 4, 3, 3}, rng), true);
        check(x, [&] { return ops::softmax_channels(x); });
        check(x, [&] { return ops::softmax_frames(x, 3); });
        check(x, [&] { return ops::sigmoid(x); });
        check(x, [&] { return ops::leaky_relu(x, 0.1); });
        check(x, [&] { return ops::replicate_pad(x, 2); });
        check(x, [&] { return ops::select_frame(x, 3, 1); });
        check(x, [&] { return ops::broadcast_frame(x, 3, 2); });
        check(x, [&] { return ops::shift_frames_prev(x, 3); });
        check(x, [&] { return ops::partial_shift(x, 1, 2, 1, true); });
        check(x, [&] { return ops::mul(x, x); });
        Var<double> s(random_tensor({6, 4, 1, 1}, rng), true);
        check(x, [&] { return ops::channel_scale(x, s); });
        check(s, [&] { return ops::channel_scale(x, s); });
        check(x, [&] { return ops::global_avg_pool(x); });
    }
    SUBCASE("charbonnier") {
        Var<double> p(random_tensor({2, 1, 8, 8}, rng, 0, 1), true);
        const auto target = random_tensor({2, 1, 8, 8}, rng, 0, 1);
        CHECK(gradient_error(p, [&] { return ops::charbonnier(p, target, 1e-3); }) < 1e-4);
    }
}
