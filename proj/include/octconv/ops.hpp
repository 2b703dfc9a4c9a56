#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "octconv/tensor.hpp"

namespace oct {

// One unit = one multiply-accumulate inside a convolution inner loop.
// Pool/upsample/path additions are never counted. Bumped once per conv2d
// call with the exact loop-trip count, so parallel runs stay exact.
inline std::atomic<std::uint64_t>& mac_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}
inline void reset_mac_count() { mac_counter().store(0); }
inline std::uint64_t mac_count() { return mac_counter().load(); }

// Worker count for the (n, c_out) loop axes of conv2d. Each output element
// is summed by exactly one thread in fixed tap order, so results are
// bit-identical for any thread count.
inline std::atomic<int>& thread_setting() {
    static std::atomic<int> n{1};
    return n;
}
inline void set_num_threads(int n) { thread_setting().store(n < 1 ? 1 : n); }
inline int num_threads() { return thread_setting().load(); }

namespace detail {

inline void parallel_for(int count, int threads, auto&& body) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    if (threads > count) threads = count;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            for (int i = t; i < count; i += threads) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace detail

inline int conv_out_dim(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

/// Direct dense cross-correlation (no kernel flip) with zero padding.
/// Accumulation order per output element is fixed: kernel row, kernel col,
/// then input channel, which makes repeated runs bit-identical.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvKernel<T>& w, int stride = 1,
                  int padding = 0) {
    if (x.c() != w.c_in())
        throw ShapeError("conv2d: input has " + std::to_string(x.c()) +
                         " channels but kernel expects " + std::to_string(w.c_in()));
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    const int oh = conv_out_dim(x.h(), w.k_h(), stride, padding);
    const int ow = conv_out_dim(x.w(), w.k_w(), stride, padding);
    if (oh < 1 || ow < 1)
        throw ShapeError("conv2d: output dims " + std::to_string(oh) + "x" +
                         std::to_string(ow) + " not positive for input " + x.shape() +
                         " kernel " + w.shape());

    Tensor4<T> y(x.n(), w.c_out(), oh, ow);
    const int cpg_in = w.c_in_per_group();
    const int cpg_out = w.c_out() / w.groups();

    mac_counter().fetch_add(static_cast<std::uint64_t>(x.n()) * w.c_out() * oh * ow *
                            w.k_h() * w.k_w() * cpg_in);

    detail::parallel_for(x.n() * w.c_out(), num_threads(), [&](int item) {
        const int n = item / w.c_out();
        const int co = item % w.c_out();
        const int ci_base = (co / cpg_out) * cpg_in;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T acc = T(0);
                for (int ky = 0; ky < w.k_h(); ++ky) {
                    const int iy = oy * stride + ky - padding;
                    for (int kx = 0; kx < w.k_w(); ++kx) {
                        const int ix = ox * stride + kx - padding;
                        for (int ci = 0; ci < cpg_in; ++ci)
                            acc += w.at(co, ci, ky, kx) * x.at_padded(n, ci_base + ci, iy, ix);
                    }
                }
                y.at(n, co, oy, ox) = acc;
            }
        }
    });
    return y;
}

/// Adjoint of conv2d w.r.t. the input: each grad element is gathered over the
/// output positions whose receptive field covers it.
template <typename T>
Tensor4<T> conv2d_backward_input(const Tensor4<T>& grad_y, const ConvKernel<T>& w,
                                 int in_h, int in_w, int stride = 1, int padding = 0) {
    if (grad_y.c() != w.c_out())
        throw ShapeError("conv2d_backward_input: grad has " + std::to_string(grad_y.c()) +
                         " channels but kernel produces " + std::to_string(w.c_out()));
    Tensor4<T> gx(grad_y.n(), w.c_in(), in_h, in_w);
    const int cpg_in = w.c_in_per_group();
    const int cpg_out = w.c_out() / w.groups();

    detail::parallel_for(gx.n() * gx.c(), num_threads(), [&](int item) {
        const int n = item / gx.c();
        const int ci_abs = item % gx.c();
        const int g = ci_abs / cpg_in;
        const int ci = ci_abs % cpg_in;
        for (int y = 0; y < in_h; ++y) {
            for (int x = 0; x < in_w; ++x) {
                T acc = T(0);
                for (int ky = 0; ky < w.k_h(); ++ky) {
                    const int num_y = y + padding - ky;
                    if (num_y < 0 || num_y % stride != 0) continue;
                    const int oy = num_y / stride;
                    if (oy >= grad_y.h()) continue;
                    for (int kx = 0; kx < w.k_w(); ++kx) {
                        const int num_x = x + padding - kx;
                        if (num_x < 0 || num_x % stride != 0) continue;
                        const int ox = num_x / stride;
                        if (ox >= grad_y.w()) continue;
                        for (int co = g * cpg_out; co < (g + 1) * cpg_out; ++co)
                            acc += w.at(co, ci, ky, kx) * grad_y.at(n, co, oy, ox);
                    }
                }
                gx.at(n, ci_abs, y, x) = acc;
            }
        }
    });
    return gx;
}

/// Adjoint of conv2d w.r.t. the weights: correlation of the forward input
/// with the output gradient.
template <typename T>
ConvKernel<T> conv2d_backward_weight(const Tensor4<T>& x, const Tensor4<T>& grad_y,
                                     const ConvKernel<T>& w_shape, int stride = 1,
                                     int padding = 0) {
    ConvKernel<T> gw(w_shape.c_out(), w_shape.c_in(), w_shape.k_h(), w_shape.k_w(),
                     w_shape.groups());
    const int cpg_in = gw.c_in_per_group();
    const int cpg_out = gw.c_out() / gw.groups();

    detail::parallel_for(gw.c_out(), num_threads(), [&](int co) {
        const int ci_base = (co / cpg_out) * cpg_in;
        for (int ci = 0; ci < cpg_in; ++ci) {
            for (int ky = 0; ky < gw.k_h(); ++ky) {
                for (int kx = 0; kx < gw.k_w(); ++kx) {
                    T acc = T(0);
                    for (int n = 0; n < x.n(); ++n)
                        for (int oy = 0; oy < grad_y.h(); ++oy)
                            for (int ox = 0; ox < grad_y.w(); ++ox)
                                acc += grad_y.at(n, co, oy, ox) *
                                       x.at_padded(n, ci_base + ci, oy * stride + ky - padding,
                                                   ox * stride + kx - padding);
                    gw.at(co, ci, ky, kx) = acc;
                }
            }
        }
    });
    return gw;
}

/// 2x2 average pooling with stride 2. Requires even spatial dims.
template <typename T>
Tensor4<T> avg_pool2(const Tensor4<T>& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw ShapeError("avg_pool2: spatial dims must be even, got " + x.shape());
    Tensor4<T> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox)
                    y.at(n, c, oy, ox) =
                        (x.at(n, c, 2 * oy, 2 * ox) + x.at(n, c, 2 * oy, 2 * ox + 1) +
                         x.at(n, c, 2 * oy + 1, 2 * ox) + x.at(n, c, 2 * oy + 1, 2 * ox + 1)) /
                        T(4);
    return y;
}

// Adjoint of avg_pool2: broadcast each grad element over its block, /4.
template <typename T>
Tensor4<T> avg_pool2_backward(const Tensor4<T>& grad_y) {
    Tensor4<T> gx(grad_y.n(), grad_y.c(), grad_y.h() * 2, grad_y.w() * 2);
    for (int n = 0; n < grad_y.n(); ++n)
        for (int c = 0; c < grad_y.c(); ++c)
            for (int y = 0; y < gx.h(); ++y)
                for (int x = 0; x < gx.w(); ++x)
                    gx.at(n, c, y, x) = grad_y.at(n, c, y / 2, x / 2) / T(4);
    return gx;
}

/// 2x2 max pooling with stride 2. Requires even spatial dims.
template <typename T>
Tensor4<T> max_pool2(const Tensor4<T>& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw ShapeError("max_pool2: spatial dims must be even, got " + x.shape());
    Tensor4<T> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox) {
                    T best = x.at(n, c, 2 * oy, 2 * ox);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const T v = x.at(n, c, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) best = v;
                        }
                    y.at(n, c, oy, ox) = best;
                }
    return y;
}

// Adjoint of max_pool2: grad routes to the arg-max location of the forward
// block; ties break to the first occurrence in row-major order.
template <typename T>
Tensor4<T> max_pool2_backward(const Tensor4<T>& x, const Tensor4<T>& grad_y) {
    Tensor4<T> gx(x.n(), x.c(), x.h(), x.w());
    for (int n = 0; n < grad_y.n(); ++n)
        for (int c = 0; c < grad_y.c(); ++c)
            for (int oy = 0; oy < grad_y.h(); ++oy)
                for (int ox = 0; ox < grad_y.w(); ++ox) {
                    int by = 2 * oy, bx = 2 * ox;
                    T best = x.at(n, c, by, bx);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const T v = x.at(n, c, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) {
                                best = v;
                                by = 2 * oy + dy;
                                bx = 2 * ox + dx;
                            }
                        }
                    gx.at(n, c, by, bx) += grad_y.at(n, c, oy, ox);
                }
    return gx;
}

/// Nearest-neighbor 2x upsampling: out(y, x) = in(y/2, x/2).
template <typename T>
Tensor4<T> upsample_nearest2(const Tensor4<T>& x) {
    Tensor4<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int yy = 0; yy < y.h(); ++yy)
                for (int xx = 0; xx < y.w(); ++xx)
                    y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
    return y;
}

// Adjoint of upsample_nearest2: 2x2 block sum.
template <typename T>
Tensor4<T> upsample_nearest2_backward(const Tensor4<T>& grad_y) {
    if (grad_y.h() % 2 != 0 || grad_y.w() % 2 != 0)
        throw ShapeError("upsample_nearest2_backward: grad dims must be even, got " +
                         grad_y.shape());
    Tensor4<T> gx(grad_y.n(), grad_y.c(), grad_y.h() / 2, grad_y.w() / 2);
    for (int n = 0; n < gx.n(); ++n)
        for (int c = 0; c < gx.c(); ++c)
            for (int y = 0; y < gx.h(); ++y)
                for (int x = 0; x < gx.w(); ++x)
                    gx.at(n, c, y, x) =
                        grad_y.at(n, c, 2 * y, 2 * x) + grad_y.at(n, c, 2 * y, 2 * x + 1) +
                        grad_y.at(n, c, 2 * y + 1, 2 * x) + grad_y.at(n, c, 2 * y + 1, 2 * x + 1);
    return gx;
}

} // namespace oct
