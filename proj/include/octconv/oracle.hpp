#pragma once

#include <functional>
#include <vector>

#include "octconv/octconv.hpp"
#include "octconv/tensor.hpp"

// Slow direct-index reference implementations used as ground truth for the
// fast paths. Everything here runs in 64-bit scalars, single-threaded, with
// no reordering; determinism outranks speed.

namespace oct {

/// Per-output-element cross-correlation, stride 1, zero padding. The
/// innermost sums follow the kernel neighborhood directly.
inline Tensor4<double> vanilla_ref(const Tensor4<double>& x, const ConvKernel<double>& w,
                                   int padding) {
    if (x.c() != w.c_in())
        throw ShapeError("vanilla_ref: input has " + std::to_string(x.c()) +
                         " channels, kernel expects " + std::to_string(w.c_in()));
    const int oh = x.h() + 2 * padding - w.k_h() + 1;
    const int ow = x.w() + 2 * padding - w.k_w() + 1;
    if (oh < 1 || ow < 1) throw ShapeError("vanilla_ref: non-positive output dims");
    const int cpg_in = w.c_in_per_group();
    const int cpg_out = w.c_out() / w.groups();

    Tensor4<double> y(x.n(), w.c_out(), oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < w.c_out(); ++co)
            for (int p = 0; p < oh; ++p)
                for (int q = 0; q < ow; ++q) {
                    double acc = 0.0;
                    for (int ky = 0; ky < w.k_h(); ++ky)
                        for (int kx = 0; kx < w.k_w(); ++kx)
                            for (int ci = 0; ci < cpg_in; ++ci)
                                acc += w.at(co, ci, ky, kx) *
                                       x.at_padded(n, (co / cpg_out) * cpg_in + ci,
                                                   p + ky - padding, q + kx - padding);
                    y.at(n, co, p, q) = acc;
                }
    return y;
}

namespace detail {

// Value of the high map at the fractional location one half step past
// (2r, 2s): the mean of the 4 adjacent integer locations, zero outside.
inline double mean4(const Tensor4<double>& x, int n, int c, int r2, int s2) {
    return (x.at_padded(n, c, r2, s2) + x.at_padded(n, c, r2, s2 + 1) +
            x.at_padded(n, c, r2 + 1, s2) + x.at_padded(n, c, r2 + 1, s2 + 1)) /
           4.0;
}

} // namespace detail

/// High-frequency output by per-element evaluation: intra-high correlation
/// plus the floor-indexed low-frequency term. The floor indexing is exactly
/// nearest-upsampling of a low-resolution convolution.
inline Tensor4<double> oct_high_ref(const OctTensor<double>& x, const OctKernel<double>& k) {
    if (k.high_out() == 0) throw ShapeError("oct_high_ref: kernel has no high output");
    const int n = x.batch(), h = x.full_h(), w = x.full_w();
    const int pad = k.pad();
    Tensor4<double> y(n, k.high_out(), h, w);
    for (int b = 0; b < n; ++b)
        for (int co = 0; co < k.high_out(); ++co)
            for (int p = 0; p < h; ++p)
                for (int q = 0; q < w; ++q) {
                    double acc = 0.0;
                    if (x.high && k.w_hh) {
                        const auto& blk = *k.w_hh;
                        const int cpg = blk.c_in_per_group();
                        const int base = (co / (blk.c_out() / blk.groups())) * cpg;
                        for (int ky = 0; ky < k.k; ++ky)
                            for (int kx = 0; kx < k.k; ++kx)
                                for (int ci = 0; ci < cpg; ++ci)
                                    acc += blk.at(co, ci, ky, kx) *
                                           x.high->at_padded(b, base + ci, p + ky - pad,
                                                             q + kx - pad);
                    }
                    if (x.low && k.w_lh) {
                        const auto& blk = *k.w_lh;
                        const int cpg = blk.c_in_per_group();
                        const int base = (co / (blk.c_out() / blk.groups())) * cpg;
                        for (int ky = 0; ky < k.k; ++ky)
                            for (int kx = 0; kx < k.k; ++kx)
                                for (int ci = 0; ci < cpg; ++ci)
                                    acc += blk.at(co, ci, ky, kx) *
                                           x.low->at_padded(b, base + ci, p / 2 + ky - pad,
                                                            q / 2 + kx - pad);
                    }
                    y.at(b, co, p, q) = acc;
                }
    return y;
}

/// Low-frequency output by per-element evaluation: intra-low correlation plus
/// the down-sampled high-frequency term, realized either by rounding the
/// half-step index (strided convolution) or by averaging the 4 adjacent
/// locations (average pooling).
inline Tensor4<double> oct_low_ref(const OctTensor<double>& x, const OctKernel<double>& k,
                                   DownsampleStrategy strategy) {
    if (k.low_out() == 0) throw ShapeError("oct_low_ref: kernel has no low output");
    const int n = x.batch(), h = x.full_h() / 2, w = x.full_w() / 2;
    const int pad = k.pad();
    Tensor4<double> y(n, k.low_out(), h, w);
    for (int b = 0; b < n; ++b)
        for (int co = 0; co < k.low_out(); ++co)
            for (int p = 0; p < h; ++p)
                for (int q = 0; q < w; ++q) {
                    double acc = 0.0;
                    if (x.low && k.w_ll) {
                        const auto& blk = *k.w_ll;
                        const int cpg = blk.c_in_per_group();
                        const int base = (co / (blk.c_out() / blk.groups())) * cpg;
                        for (int ky = 0; ky < k.k; ++ky)
                            for (int kx = 0; kx < k.k; ++kx)
                                for (int ci = 0; ci < cpg; ++ci)
                                    acc += blk.at(co, ci, ky, kx) *
                                           x.low->at_padded(b, base + ci, p + ky - pad,
                                                            q + kx - pad);
                    }
                    if (x.high && k.w_hl) {
                        const auto& blk = *k.w_hl;
                        const int cpg = blk.c_in_per_group();
                        const int base = (co / (blk.c_out() / blk.groups())) * cpg;
                        for (int ky = 0; ky < k.k; ++ky)
                            for (int kx = 0; kx < k.k; ++kx)
                                for (int ci = 0; ci < cpg; ++ci) {
                                    const double v =
                                        strategy == DownsampleStrategy::StridedConv
                                            ? x.high->at_padded(b, base + ci, 2 * p + ky - pad,
                                                                2 * q + kx - pad)
                                            : detail::mean4(*x.high, b, base + ci,
                                                            2 * (p + ky - pad),
                                                            2 * (q + kx - pad));
                                    acc += blk.at(co, ci, ky, kx) * v;
                                }
                    }
                    y.at(b, co, p, q) = acc;
                }
    return y;
}

/// Central finite differences of a scalar function w.r.t. a parameter buffer
/// that the function reads. The buffer is restored after each probe.
template <typename F>
std::vector<double> finite_diff_grad(F&& f, std::vector<double>& params, double step) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = f();
        params[i] = saved - step;
        const double down = f();
        params[i] = saved;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

/// Convenience overload for tensors: returns the gradient with the same dims.
template <typename F>
Tensor4<double> finite_diff_grad(F&& f, Tensor4<double>& x, double step) {
    Tensor4<double> g(x.n(), x.c(), x.h(), x.w());
    g.buffer() = finite_diff_grad(std::forward<F>(f), x.buffer(), step);
    return g;
}

} // namespace oct
