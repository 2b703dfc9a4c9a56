#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "octconv/octconv.hpp"
#include "octconv/oracle.hpp"

namespace oct {

/// One gradient-check instance: the analytic backward pass of a seeded
/// octave convolution is compared against central finite differences of the
/// scalar probe f = <r, forward(x)>, perturbing every input element and
/// every weight element.
struct GradCheckConfig {
    int n = 1, c_in = 4, c_out = 4, k = 3, h = 6, w = 6;
    double alpha_in = 0.5, alpha_out = 0.5;
    OctMode mode = OctMode::Dense;
    int groups = 1;
    DownsampleStrategy strategy = DownsampleStrategy::AveragePool;
    PathMask mask;
    std::uint64_t seed = 0;
    double step = 1e-5;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_part;
};

namespace detail {

// Relative error with the denominator floored at a fraction of the overall
// gradient scale, so near-zero components compare against finite-difference
// noise honestly instead of blowing up.
inline double grad_rel_err(const std::vector<double>& analytic,
                           const std::vector<double>& fd) {
    double scale = 0.0;
    for (double v : analytic) scale = std::max(scale, std::abs(v));
    for (double v : fd) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom =
            std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-3 * scale});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

} // namespace detail

inline GradCheckResult gradcheck_octconv(const GradCheckConfig& cfg) {
    auto kernel = make_oct_kernel<double>(cfg.c_in, cfg.c_out, cfg.k, cfg.alpha_in,
                                          cfg.alpha_out, cfg.mode, cfg.seed, cfg.groups);
    OctTensor<double> x;
    x.alpha = cfg.alpha_in;
    const CounterRng rng(cfg.seed ^ 0x5eedULL);
    if (kernel.high_in() > 0) {
        x.high = Tensor4<double>(cfg.n, kernel.high_in(), cfg.h, cfg.w);
        x.high->fill_normal(rng.substream(0), 1.0);
    }
    if (kernel.low_in() > 0) {
        x.low = Tensor4<double>(cfg.n, kernel.low_in(), cfg.h / 2, cfg.w / 2);
        x.low->fill_normal(rng.substream(1), 1.0);
    }

    // Random projection so the probe exercises every output element.
    OctTensor<double> r;
    r.alpha = cfg.alpha_out;
    if (kernel.high_out() > 0) {
        r.high = Tensor4<double>(cfg.n, kernel.high_out(), cfg.h, cfg.w);
        r.high->fill_normal(rng.substream(2), 1.0);
    }
    if (kernel.low_out() > 0) {
        r.low = Tensor4<double>(cfg.n, kernel.low_out(), cfg.h / 2, cfg.w / 2);
        r.low->fill_normal(rng.substream(3), 1.0);
    }

    auto probe = [&]() {
        const auto y = oct_conv_forward(x, kernel, cfg.strategy, cfg.mask);
        double s = 0.0;
        if (y.high)
            for (std::size_t i = 0; i < y.high->size(); ++i)
                s += y.high->buffer()[i] * r.high->buffer()[i];
        if (y.low)
            for (std::size_t i = 0; i < y.low->size(); ++i)
                s += y.low->buffer()[i] * r.low->buffer()[i];
        return s;
    };

    const auto grads = oct_conv_backward(x, kernel, r, cfg.strategy, cfg.mask);

    GradCheckResult result;
    auto check = [&](const std::string& part, const std::vector<double>& analytic,
                     std::vector<double>& params) {
        const auto fd = finite_diff_grad(probe, params, cfg.step);
        const double err = detail::grad_rel_err(analytic, fd);
        if (err > result.max_rel_err) {
            result.max_rel_err = err;
            result.worst_part = part;
        }
    };

    if (x.high) check("grad_x.high", grads.grad_x.high->buffer(), x.high->buffer());
    if (x.low) check("grad_x.low", grads.grad_x.low->buffer(), x.low->buffer());
    if (kernel.w_hh) check("grad_w_hh", grads.grad_k.w_hh->buffer(), kernel.w_hh->buffer());
    if (kernel.w_lh) check("grad_w_lh", grads.grad_k.w_lh->buffer(), kernel.w_lh->buffer());
    if (kernel.w_hl) check("grad_w_hl", grads.grad_k.w_hl->buffer(), kernel.w_hl->buffer());
    if (kernel.w_ll) check("grad_w_ll", grads.grad_k.w_ll->buffer(), kernel.w_ll->buffer());
    return result;
}

} // namespace oct
