#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "octconv/ops.hpp"
#include "octconv/tensor.hpp"

namespace oct {

// Low-frequency channel count for a total of c channels at ratio alpha.
// Floor keeps the high group nonempty for every alpha < 1; the epsilon
// absorbs representation error in products like 0.3 * 10.
inline int low_channels(int c, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("alpha must be in [0,1], got " + std::to_string(alpha));
    return static_cast<int>(std::floor(alpha * c + 1e-9));
}

/// Multi-frequency feature tensor: a full-resolution high group and a
/// half-resolution low group. Either group may be absent (alpha 0 or 1);
/// a plain tensor is the special case with no low group.
template <typename T>
struct OctTensor {
    std::optional<Tensor4<T>> high;
    std::optional<Tensor4<T>> low;
    double alpha = 0.0;

    int batch() const { return high ? high->n() : (low ? low->n() : 0); }
    int high_channels() const { return high ? high->c() : 0; }
    int low_channels() const { return low ? low->c() : 0; }
    int channels() const { return high_channels() + low_channels(); }
    // Full-resolution spatial dims, whether or not the high group exists.
    int full_h() const { return high ? high->h() : (low ? 2 * low->h() : 0); }
    int full_w() const { return high ? high->w() : (low ? 2 * low->w() : 0); }
    std::size_t elems() const {
        return (high ? high->size() : 0) + (low ? low->size() : 0);
    }

    void validate() const {
        if (!high && !low) throw ShapeError("OctTensor: both groups empty");
        if (high && low) {
            if (low->n() != high->n())
                throw ShapeError("OctTensor: batch mismatch between groups");
            if (2 * low->h() != high->h() || 2 * low->w() != high->w())
                throw ShapeError("OctTensor: low group " + low->shape() +
                                 " is not half the resolution of high " + high->shape());
        }
    }
};

template <typename T>
OctTensor<T> from_vanilla(Tensor4<T> x) {
    return OctTensor<T>{std::move(x), std::nullopt, 0.0};
}

enum class DownsampleStrategy { AveragePool, MaxPool, StridedConv };

enum class OctMode { Dense, Grouped, Depthwise };

// Inter-octave path toggles for the connectivity ablation. Both on by default.
struct PathMask {
    bool enable_l_to_h = true;
    bool enable_h_to_l = true;
};

/// The four weight blocks of an octave convolution, partitioned from a
/// vanilla c_out x c_in x k x k kernel by the (alpha_in, alpha_out) channel
/// split. Blocks with zero channels on either axis are absent and skipped.
/// In depth-wise mode the exchange blocks do not exist at all.
template <typename T>
struct OctKernel {
    std::optional<ConvKernel<T>> w_hh; // high -> high
    std::optional<ConvKernel<T>> w_lh; // low  -> high
    std::optional<ConvKernel<T>> w_hl; // high -> low
    std::optional<ConvKernel<T>> w_ll; // low  -> low
    int c_in = 0, c_out = 0, k = 0;
    double alpha_in = 0.0, alpha_out = 0.0;
    OctMode mode = OctMode::Dense;
    int groups = 1;
    std::uint64_t seed = 0;

    int low_in() const { return oct::low_channels(c_in, alpha_in); }
    int high_in() const { return c_in - low_in(); }
    int low_out() const { return oct::low_channels(c_out, alpha_out); }
    int high_out() const { return c_out - low_out(); }
    int pad() const { return (k - 1) / 2; }

    std::size_t param_count() const {
        return (w_hh ? w_hh->size() : 0) + (w_lh ? w_lh->size() : 0) +
               (w_hl ? w_hl->size() : 0) + (w_ll ? w_ll->size() : 0);
    }
};

namespace detail {

template <typename T>
std::optional<ConvKernel<T>> make_block(int c_out, int c_in, int k, OctMode mode, int groups,
                                        const CounterRng& stream) {
    if (c_out == 0 || c_in == 0) return std::nullopt;
    int g = 1;
    if (mode == OctMode::Grouped) {
        g = groups;
        if (c_in % g != 0 || c_out % g != 0)
            throw ConfigError("block " + std::to_string(c_out) + "x" + std::to_string(c_in) +
                              " not divisible into " + std::to_string(g) + " groups");
    } else if (mode == OctMode::Depthwise) {
        if (c_in != c_out)
            throw ConfigError("depthwise block needs c_in == c_out, got " +
                              std::to_string(c_in) + " vs " + std::to_string(c_out));
        g = c_in;
    }
    ConvKernel<T> w(c_out, c_in, k, k, g);
    const double fan_in = static_cast<double>(c_in) / g * k * k;
    w.fill_normal(stream, static_cast<T>(std::sqrt(2.0 / fan_in)));
    return w;
}

template <typename T>
void add_inplace(Tensor4<T>& dst, const Tensor4<T>& src) {
    if (!dst.same_shape(src))
        throw ShapeError("cannot add " + src.shape() + " into " + dst.shape());
    for (std::size_t i = 0; i < dst.size(); ++i) dst.buffer()[i] += src.buffer()[i];
}

} // namespace detail

/// Partition a kernel for (c_in -> c_out) at the given ratios and draw
/// fan-in-scaled normal weights, one counter stream per block, so any block
/// is reproducible from (seed, block) alone.
template <typename T>
OctKernel<T> make_oct_kernel(int c_in, int c_out, int k, double alpha_in, double alpha_out,
                             OctMode mode = OctMode::Dense, std::uint64_t seed = 0,
                             int groups = 1) {
    if (c_in < 1 || c_out < 1) throw ConfigError("make_oct_kernel: channels must be >= 1");
    if (k < 1 || k % 2 == 0) throw ConfigError("make_oct_kernel: k must be odd");
    if (mode == OctMode::Grouped && groups < 1)
        throw ConfigError("make_oct_kernel: grouped mode needs groups >= 1");

    OctKernel<T> kn;
    kn.c_in = c_in;
    kn.c_out = c_out;
    kn.k = k;
    kn.alpha_in = alpha_in;
    kn.alpha_out = alpha_out;
    kn.mode = mode;
    kn.groups = (mode == OctMode::Grouped) ? groups : 1;
    kn.seed = seed;

    const int cl_in = kn.low_in(), ch_in = kn.high_in();
    const int cl_out = kn.low_out(), ch_out = kn.high_out();
    CounterRng rng(seed);

    kn.w_hh = detail::make_block<T>(ch_out, ch_in, k, mode, groups, rng.substream(0));
    if (mode != OctMode::Depthwise) {
        kn.w_lh = detail::make_block<T>(ch_out, cl_in, k, mode, groups, rng.substream(1));
        kn.w_hl = detail::make_block<T>(cl_out, ch_in, k, mode, groups, rng.substream(2));
    }
    kn.w_ll = detail::make_block<T>(cl_out, cl_in, k, mode, groups, rng.substream(3));
    return kn;
}

namespace detail {

template <typename T>
void check_forward_shapes(const OctTensor<T>& x, const OctKernel<T>& k) {
    x.validate();
    if (x.high_channels() != k.high_in() || x.low_channels() != k.low_in())
        throw ShapeError("octconv: input split (" + std::to_string(x.high_channels()) + "H," +
                         std::to_string(x.low_channels()) + "L) does not match kernel (" +
                         std::to_string(k.high_in()) + "H," + std::to_string(k.low_in()) + "L)");
    if (x.high && (x.high->h() % 2 != 0 || x.high->w() % 2 != 0))
        throw ShapeError("octconv: high-frequency spatial dims must be even, got " +
                         x.high->shape());
}

template <typename T>
Tensor4<T> downsample(const Tensor4<T>& x, DownsampleStrategy s) {
    return s == DownsampleStrategy::MaxPool ? max_pool2(x) : avg_pool2(x);
}

} // namespace detail

/// Octave convolution forward pass. All internal convolutions run stride 1
/// with same-padding; the resolution change between groups is carried by
/// pool/upsample (or by stride 2 on the H->L conv under StridedConv).
template <typename T>
OctTensor<T> oct_conv_forward(const OctTensor<T>& x, const OctKernel<T>& k,
                              DownsampleStrategy strategy = DownsampleStrategy::AveragePool,
                              PathMask mask = {}) {
    detail::check_forward_shapes(x, k);
    const int pad = k.pad();
    const int n = x.batch();
    const int h = x.full_h(), w = x.full_w();

    OctTensor<T> y;
    y.alpha = k.alpha_out;

    if (k.high_out() > 0) {
        Tensor4<T> yh(n, k.high_out(), h, w);
        if (x.high && k.w_hh) yh = conv2d(*x.high, *k.w_hh, 1, pad);
        if (x.low && k.w_lh && mask.enable_l_to_h)
            detail::add_inplace(yh, upsample_nearest2(conv2d(*x.low, *k.w_lh, 1, pad)));
        y.high = std::move(yh);
    }
    if (k.low_out() > 0) {
        Tensor4<T> yl(n, k.low_out(), h / 2, w / 2);
        if (x.low && k.w_ll) yl = conv2d(*x.low, *k.w_ll, 1, pad);
        if (x.high && k.w_hl && mask.enable_h_to_l) {
            if (strategy == DownsampleStrategy::StridedConv)
                detail::add_inplace(yl, conv2d(*x.high, *k.w_hl, 2, pad));
            else
                detail::add_inplace(yl, conv2d(detail::downsample(*x.high, strategy), *k.w_hl,
                                               1, pad));
        }
        y.low = std::move(yl);
    }
    return y;
}

template <typename T>
struct OctGrads {
    OctTensor<T> grad_x;
    OctKernel<T> grad_k;
};

/// Exact adjoint of oct_conv_forward: each forward primitive is reversed and
/// the gradients of summed paths add. Masked or absent paths contribute
/// zero (their weight-block gradients stay zero-filled).
template <typename T>
OctGrads<T> oct_conv_backward(const OctTensor<T>& x, const OctKernel<T>& k,
                              const OctTensor<T>& grad_out,
                              DownsampleStrategy strategy = DownsampleStrategy::AveragePool,
                              PathMask mask = {}) {
    detail::check_forward_shapes(x, k);
    const int pad = k.pad();
    const int h = x.full_h(), w = x.full_w();

    if ((k.high_out() > 0) != grad_out.high.has_value() ||
        (k.low_out() > 0) != grad_out.low.has_value())
        throw ShapeError("octconv backward: grad_out groups do not match the forward output");
    if (grad_out.high && (grad_out.high->h() != h || grad_out.high->w() != w ||
                          grad_out.high->c() != k.high_out()))
        throw ShapeError("octconv backward: grad_out.high has shape " + grad_out.high->shape());
    if (grad_out.low && (grad_out.low->h() != h / 2 || grad_out.low->w() != w / 2 ||
                         grad_out.low->c() != k.low_out()))
        throw ShapeError("octconv backward: grad_out.low has shape " + grad_out.low->shape());

    OctGrads<T> g;
    g.grad_k = k;
    if (g.grad_k.w_hh) g.grad_k.w_hh->fill(T(0));
    if (g.grad_k.w_lh) g.grad_k.w_lh->fill(T(0));
    if (g.grad_k.w_hl) g.grad_k.w_hl->fill(T(0));
    if (g.grad_k.w_ll) g.grad_k.w_ll->fill(T(0));

    g.grad_x.alpha = x.alpha;
    if (x.high) g.grad_x.high = Tensor4<T>(x.high->n(), x.high->c(), x.high->h(), x.high->w());
    if (x.low) g.grad_x.low = Tensor4<T>(x.low->n(), x.low->c(), x.low->h(), x.low->w());

    if (grad_out.high) {
        const Tensor4<T>& gh = *grad_out.high;
        if (x.high && k.w_hh) {
            detail::add_inplace(*g.grad_x.high, conv2d_backward_input(gh, *k.w_hh, h, w, 1, pad));
            g.grad_k.w_hh = conv2d_backward_weight(*x.high, gh, *k.w_hh, 1, pad);
        }
        if (x.low && k.w_lh && mask.enable_l_to_h) {
            const Tensor4<T> gs = upsample_nearest2_backward(gh);
            detail::add_inplace(*g.grad_x.low,
                                conv2d_backward_input(gs, *k.w_lh, h / 2, w / 2, 1, pad));
            g.grad_k.w_lh = conv2d_backward_weight(*x.low, gs, *k.w_lh, 1, pad);
        }
    }
    if (grad_out.low) {
        const Tensor4<T>& gl = *grad_out.low;
        if (x.low && k.w_ll) {
            detail::add_inplace(*g.grad_x.low,
                                conv2d_backward_input(gl, *k.w_ll, h / 2, w / 2, 1, pad));
            g.grad_k.w_ll = conv2d_backward_weight(*x.low, gl, *k.w_ll, 1, pad);
        }
        if (x.high && k.w_hl && mask.enable_h_to_l) {
            if (strategy == DownsampleStrategy::StridedConv) {
                detail::add_inplace(*g.grad_x.high,
                                    conv2d_backward_input(gl, *k.w_hl, h, w, 2, pad));
                g.grad_k.w_hl = conv2d_backward_weight(*x.high, gl, *k.w_hl, 2, pad);
            } else {
                const Tensor4<T> pooled = detail::downsample(*x.high, strategy);
                const Tensor4<T> gp = conv2d_backward_input(gl, *k.w_hl, h / 2, w / 2, 1, pad);
                if (strategy == DownsampleStrategy::MaxPool)
                    detail::add_inplace(*g.grad_x.high, max_pool2_backward(*x.high, gp));
                else
                    detail::add_inplace(*g.grad_x.high, avg_pool2_backward(gp));
                g.grad_k.w_hl = conv2d_backward_weight(pooled, gl, *k.w_hl, 1, pad);
            }
        }
    }
    return g;
}

/// First octave layer of a network: vanilla input, alpha_in == 0.
template <typename T>
OctTensor<T> oct_entry(const Tensor4<T>& x, const OctKernel<T>& k,
                       DownsampleStrategy strategy = DownsampleStrategy::AveragePool) {
    if (k.alpha_in != 0.0)
        throw ConfigError("oct_entry requires alpha_in == 0, got " +
                          std::to_string(k.alpha_in));
    return oct_conv_forward(from_vanilla(x), k, strategy);
}

/// Last octave layer: alpha_out == 0, collapses back to a single tensor.
template <typename T>
Tensor4<T> oct_exit(const OctTensor<T>& x, const OctKernel<T>& k,
                    DownsampleStrategy strategy = DownsampleStrategy::AveragePool) {
    if (k.alpha_out != 0.0)
        throw ConfigError("oct_exit requires alpha_out == 0, got " +
                          std::to_string(k.alpha_out));
    return *oct_conv_forward(x, k, strategy).high;
}

} // namespace oct
