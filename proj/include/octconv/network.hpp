#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "octconv/cost.hpp"
#include "octconv/netspec.hpp"
#include "octconv/octconv.hpp"
#include "octconv/tensor_io.hpp"

namespace oct {

namespace detail {

// Flatten all frequency groups of one sample into a (n, flat, 1, 1) column:
// high elements first, then low.
template <typename T>
Tensor4<T> flatten(const OctTensor<T>& x) {
    const int n = x.batch();
    const std::size_t flat = x.elems() / n;
    Tensor4<T> out(n, static_cast<int>(flat), 1, 1);
    for (int b = 0; b < n; ++b) {
        std::size_t i = 0;
        if (x.high)
            for (int c = 0; c < x.high->c(); ++c)
                for (int y = 0; y < x.high->h(); ++y)
                    for (int xx = 0; xx < x.high->w(); ++xx)
                        out.at(b, static_cast<int>(i++), 0, 0) = x.high->at(b, c, y, xx);
        if (x.low)
            for (int c = 0; c < x.low->c(); ++c)
                for (int y = 0; y < x.low->h(); ++y)
                    for (int xx = 0; xx < x.low->w(); ++xx)
                        out.at(b, static_cast<int>(i++), 0, 0) = x.low->at(b, c, y, xx);
    }
    return out;
}

template <typename T>
OctTensor<T> unflatten_like(const Tensor4<T>& flat, const OctTensor<T>& ref) {
    OctTensor<T> out;
    out.alpha = ref.alpha;
    if (ref.high) out.high = Tensor4<T>(ref.high->n(), ref.high->c(), ref.high->h(), ref.high->w());
    if (ref.low) out.low = Tensor4<T>(ref.low->n(), ref.low->c(), ref.low->h(), ref.low->w());
    for (int b = 0; b < ref.batch(); ++b) {
        std::size_t i = 0;
        if (out.high)
            for (int c = 0; c < out.high->c(); ++c)
                for (int y = 0; y < out.high->h(); ++y)
                    for (int xx = 0; xx < out.high->w(); ++xx)
                        out.high->at(b, c, y, xx) = flat.at(b, static_cast<int>(i++), 0, 0);
        if (out.low)
            for (int c = 0; c < out.low->c(); ++c)
                for (int y = 0; y < out.low->h(); ++y)
                    for (int xx = 0; xx < out.low->w(); ++xx)
                        out.low->at(b, c, y, xx) = flat.at(b, static_cast<int>(i++), 0, 0);
    }
    return out;
}

template <typename T>
void relu_inplace(Tensor4<T>& t) {
    for (auto& v : t.buffer())
        if (v < T(0)) v = T(0);
}

// grad *= (input > 0), elementwise
template <typename T>
void relu_mask(Tensor4<T>& grad, const Tensor4<T>& input) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (input.buffer()[i] <= T(0)) grad.buffer()[i] = T(0);
}

template <typename T>
Tensor4<T> global_mean(const Tensor4<T>& x) {
    Tensor4<T> out(x.n(), x.c(), 1, 1);
    const T scale = T(1) / static_cast<T>(x.h() * x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            T acc = T(0);
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx) acc += x.at(n, c, y, xx);
            out.at(n, c, 0, 0) = acc * scale;
        }
    return out;
}

} // namespace detail

/// A built, runnable network: the spec plus one weight holder per layer.
/// Weight init is keyed by (spec seed, layer index, block index) through the
/// counter generator, so an alpha = 0 octave twin draws exactly the weights
/// of its vanilla original.
template <typename T>
class Network {
public:
    struct Layer {
        LayerDesc desc;
        LayerShape shape;
        std::optional<ConvKernel<T>> conv; // conv and linear layers
        std::optional<OctKernel<T>> oct;   // octconv layers
    };

    struct Tape {
        std::vector<OctTensor<T>> inputs; // input activation of each layer
    };

    struct Grads {
        std::vector<std::optional<ConvKernel<T>>> conv;
        std::vector<std::optional<OctKernel<T>>> oct;
    };

    explicit Network(const NetSpec& spec,
                     DownsampleStrategy strategy = DownsampleStrategy::AveragePool)
        : spec_(spec), strategy_(strategy) {
        const auto shapes = infer_shapes(spec);
        CounterRng net_rng(spec.seed);
        layers_.reserve(spec.layers.size());
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            Layer layer{spec.layers[i], shapes[i], std::nullopt, std::nullopt};
            const std::uint64_t layer_seed = net_rng.substream(i).key();
            switch (layer.desc.kind) {
                case LayerKind::Conv:
                    layer.conv = detail::make_block<T>(layer.desc.c_out, layer.shape.c_in,
                                                       layer.desc.k, OctMode::Dense, 1,
                                                       CounterRng(layer_seed).substream(0));
                    break;
                case LayerKind::OctConv:
                    layer.oct = make_oct_kernel<T>(layer.shape.c_in, layer.desc.c_out,
                                                   layer.desc.k, layer.shape.alpha_in,
                                                   layer.shape.alpha_out, OctMode::Dense,
                                                   layer_seed);
                    break;
                case LayerKind::Linear:
                    layer.conv = detail::make_block<T>(
                        layer.desc.c_out, static_cast<int>(layer.shape.flat_in), 1,
                        OctMode::Dense, 1, CounterRng(layer_seed).substream(0));
                    break;
                default:
                    break;
            }
            layers_.push_back(std::move(layer));
        }
    }

    const NetSpec& spec() const { return spec_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    DownsampleStrategy strategy() const { return strategy_; }

    std::size_t param_count() const {
        std::size_t total = 0;
        for (const auto& l : layers_) {
            if (l.conv) total += l.conv->size();
            if (l.oct) total += l.oct->param_count();
        }
        return total;
    }

    Tensor4<T> forward(const Tensor4<T>& x, Tape* tape = nullptr) const {
        OctTensor<T> act = run_to(x, layers_.size(), tape);
        if (!act.high || act.low)
            throw ShapeError("network output is not a single-frequency tensor; "
                             "end the spec with globalpool/linear or an alpha_out=0 octconv");
        return *act.high;
    }

    // Activation after layer `idx` (for feature dumps).
    OctTensor<T> activation_at(const Tensor4<T>& x, std::size_t idx) const {
        if (idx >= layers_.size())
            throw ConfigError("layer index " + std::to_string(idx) + " out of range (net has " +
                              std::to_string(layers_.size()) + " layers)");
        return run_to(x, idx + 1, nullptr);
    }

    // One layer in isolation, on an activation of the right shape.
    OctTensor<T> apply_one(std::size_t idx, const OctTensor<T>& in) const {
        if (idx >= layers_.size())
            throw ConfigError("layer index " + std::to_string(idx) + " out of range");
        return apply_layer(layers_[idx], in);
    }

    Grads backward(const Tape& tape, const Tensor4<T>& grad_logits) const {
        Grads g;
        g.conv.resize(layers_.size());
        g.oct.resize(layers_.size());
        OctTensor<T> grad = from_vanilla(grad_logits);

        for (std::size_t ri = layers_.size(); ri-- > 0;) {
            const Layer& l = layers_[ri];
            const OctTensor<T>& input = tape.inputs[ri];
            switch (l.desc.kind) {
                case LayerKind::Conv: {
                    const int pad = (l.desc.k - 1) / 2;
                    const Tensor4<T>& gy = *grad.high;
                    g.conv[ri] = conv2d_backward_weight(*input.high, gy, *l.conv, 1, pad);
                    grad = from_vanilla(conv2d_backward_input(gy, *l.conv, input.high->h(),
                                                              input.high->w(), 1, pad));
                    break;
                }
                case LayerKind::OctConv: {
                    OctGrads<T> og = oct_conv_backward(input, *l.oct, grad, strategy_);
                    g.oct[ri] = std::move(og.grad_k);
                    grad = std::move(og.grad_x);
                    break;
                }
                case LayerKind::Relu: {
                    if (grad.high) detail::relu_mask(*grad.high, *input.high);
                    if (grad.low) detail::relu_mask(*grad.low, *input.low);
                    break;
                }
                case LayerKind::AvgPool: {
                    OctTensor<T> gx;
                    gx.alpha = input.alpha;
                    if (grad.high) gx.high = avg_pool2_backward(*grad.high);
                    if (grad.low) gx.low = avg_pool2_backward(*grad.low);
                    grad = std::move(gx);
                    break;
                }
                case LayerKind::MaxPool: {
                    OctTensor<T> gx;
                    gx.alpha = input.alpha;
                    if (grad.high) gx.high = max_pool2_backward(*input.high, *grad.high);
                    if (grad.low) gx.low = max_pool2_backward(*input.low, *grad.low);
                    grad = std::move(gx);
                    break;
                }
                case LayerKind::GlobalPool: {
                    OctTensor<T> gx;
                    gx.alpha = input.alpha;
                    int offset = 0;
                    auto spread = [&](const Tensor4<T>& ref) {
                        Tensor4<T> out(ref.n(), ref.c(), ref.h(), ref.w());
                        const T scale = T(1) / static_cast<T>(ref.h() * ref.w());
                        for (int n = 0; n < ref.n(); ++n)
                            for (int c = 0; c < ref.c(); ++c) {
                                const T gv = grad.high->at(n, offset + c, 0, 0) * scale;
                                for (int y = 0; y < ref.h(); ++y)
                                    for (int xx = 0; xx < ref.w(); ++xx)
                                        out.at(n, c, y, xx) = gv;
                            }
                        return out;
                    };
                    if (input.high) {
                        gx.high = spread(*input.high);
                        offset += input.high->c();
                    }
                    if (input.low) gx.low = spread(*input.low);
                    grad = std::move(gx);
                    break;
                }
                case LayerKind::Linear: {
                    const Tensor4<T> flat_in = detail::flatten(input);
                    const Tensor4<T>& gy = *grad.high;
                    g.conv[ri] = conv2d_backward_weight(flat_in, gy, *l.conv, 1, 0);
                    const Tensor4<T> gflat = conv2d_backward_input(gy, *l.conv, 1, 1, 1, 0);
                    grad = detail::unflatten_like(gflat, input);
                    break;
                }
            }
        }
        return g;
    }

    void sgd_step(const Grads& g, T lr) {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (layers_[i].conv && g.conv[i])
                axpy(*layers_[i].conv, *g.conv[i], -lr);
            if (layers_[i].oct && g.oct[i]) {
                auto& k = *layers_[i].oct;
                const auto& gk = *g.oct[i];
                if (k.w_hh) axpy(*k.w_hh, *gk.w_hh, -lr);
                if (k.w_lh) axpy(*k.w_lh, *gk.w_lh, -lr);
                if (k.w_hl) axpy(*k.w_hl, *gk.w_hl, -lr);
                if (k.w_ll) axpy(*k.w_ll, *gk.w_ll, -lr);
            }
        }
    }

    void save_weights(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open " + path + " for writing");
        io::put_bytes(f, "OCTW", 4);
        io::put_le<std::uint32_t>(f, 1);
        io::put_le<std::uint8_t>(f, io::dtype_code<T>());
        io::put_le<std::uint64_t>(f, spec_hash(spec_));
        for (const auto& l : layers_) {
            if (l.conv) write_kernel(f, *l.conv);
            if (l.oct) {
                write_block(f, l.oct->w_hh);
                write_block(f, l.oct->w_lh);
                write_block(f, l.oct->w_hl);
                write_block(f, l.oct->w_ll);
            }
        }
        if (!f) throw IoError("write failed on " + path);
    }

    void load_weights(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open " + path);
        char magic[4];
        io::get_bytes(f, magic, 4);
        if (std::memcmp(magic, "OCTW", 4) != 0) throw IoError("bad weight-file magic");
        if (io::get_le<std::uint32_t>(f) != 1) throw IoError("unsupported weight-file version");
        if (io::get_le<std::uint8_t>(f) != io::dtype_code<T>())
            throw IoError("weight-file dtype does not match this network");
        const auto hash = io::get_le<std::uint64_t>(f);
        if (hash != spec_hash(spec_))
            throw IoError("weight file was saved for a different spec (hash mismatch)");
        for (auto& l : layers_) {
            if (l.conv) read_kernel(f, *l.conv);
            if (l.oct) {
                read_block(f, l.oct->w_hh);
                read_block(f, l.oct->w_lh);
                read_block(f, l.oct->w_hl);
                read_block(f, l.oct->w_ll);
            }
        }
    }

private:
    OctTensor<T> run_to(const Tensor4<T>& x, std::size_t end, Tape* tape) const {
        if (x.c() != spec_.in_c || x.h() != spec_.in_h || x.w() != spec_.in_w)
            throw ShapeError("network input " + x.shape() + " does not match spec input (" +
                             std::to_string(spec_.in_c) + "," + std::to_string(spec_.in_h) +
                             "," + std::to_string(spec_.in_w) + ")");
        if (tape) {
            tape->inputs.clear();
            tape->inputs.reserve(layers_.size());
        }
        OctTensor<T> act = from_vanilla(x);
        for (std::size_t i = 0; i < end; ++i) {
            if (tape) tape->inputs.push_back(act);
            act = apply_layer(layers_[i], act);
        }
        return act;
    }

    OctTensor<T> apply_layer(const Layer& l, const OctTensor<T>& in) const {
        switch (l.desc.kind) {
            case LayerKind::Conv:
                return from_vanilla(conv2d(*in.high, *l.conv, 1, (l.desc.k - 1) / 2));
            case LayerKind::OctConv:
                return oct_conv_forward(in, *l.oct, strategy_);
            case LayerKind::Relu: {
                OctTensor<T> out = in;
                if (out.high) detail::relu_inplace(*out.high);
                if (out.low) detail::relu_inplace(*out.low);
                return out;
            }
            case LayerKind::AvgPool: {
                OctTensor<T> out;
                out.alpha = in.alpha;
                if (in.high) out.high = avg_pool2(*in.high);
                if (in.low) out.low = avg_pool2(*in.low);
                return out;
            }
            case LayerKind::MaxPool: {
                OctTensor<T> out;
                out.alpha = in.alpha;
                if (in.high) out.high = max_pool2(*in.high);
                if (in.low) out.low = max_pool2(*in.low);
                return out;
            }
            case LayerKind::GlobalPool: {
                Tensor4<T> out(in.batch(), in.channels(), 1, 1);
                int offset = 0;
                auto fill = [&](const Tensor4<T>& part) {
                    const Tensor4<T> m = detail::global_mean(part);
                    for (int n = 0; n < m.n(); ++n)
                        for (int c = 0; c < m.c(); ++c)
                            out.at(n, offset + c, 0, 0) = m.at(n, c, 0, 0);
                    offset += part.c();
                };
                if (in.high) fill(*in.high);
                if (in.low) fill(*in.low);
                return from_vanilla(std::move(out));
            }
            case LayerKind::Linear:
                return from_vanilla(conv2d(detail::flatten(in), *l.conv, 1, 0));
        }
        throw ConfigError("unreachable layer kind");
    }

    static void axpy(ConvKernel<T>& w, const ConvKernel<T>& g, T a) {
        for (std::size_t i = 0; i < w.size(); ++i) w.buffer()[i] += a * g.buffer()[i];
    }

    static void write_kernel(std::ostream& os, const ConvKernel<T>& k) {
        Tensor4<T> t(k.c_out(), k.c_in_per_group(), k.k_h(), k.k_w());
        t.buffer() = k.buffer();
        write_tensor(os, t);
    }
    static void read_kernel(std::istream& is, ConvKernel<T>& k) {
        const Tensor4<T> t = read_tensor<T>(is);
        if (t.buffer().size() != k.size())
            throw IoError("weight block size mismatch for kernel " + k.shape());
        k.buffer() = t.buffer();
    }
    static void write_block(std::ostream& os, const std::optional<ConvKernel<T>>& k) {
        io::put_le<std::uint8_t>(os, k ? 1 : 0);
        if (k) write_kernel(os, *k);
    }
    static void read_block(std::istream& is, std::optional<ConvKernel<T>>& k) {
        const auto present = io::get_le<std::uint8_t>(is);
        if (static_cast<bool>(present) != k.has_value())
            throw IoError("weight block presence mismatch");
        if (k) read_kernel(is, *k);
    }

    NetSpec spec_;
    DownsampleStrategy strategy_;
    std::vector<Layer> layers_;
};

enum class CostView {
    TableStyle, // every conv costed as an interior octconv at alpha/alpha
    Octified    // the converted network's actual entry/mid/exit structure
};

/// Cost report for a spec at ratio alpha. Theoretical MACs come from the
/// path formulas; counted MACs from an instrumented single-sample forward of
/// each weighted layer; the baseline column is the same layer at alpha = 0.
inline CostReport network_cost(const NetSpec& spec, double alpha,
                               CostView view = CostView::Octified) {
    NetSpec costed = spec;
    if (view == CostView::Octified && !spec.has_octconv()) costed = octify(spec, alpha);
    const auto shapes = infer_shapes(costed);

    CostReport report;
    for (std::size_t i = 0; i < costed.layers.size(); ++i) {
        const auto& l = costed.layers[i];
        const auto& s = shapes[i];
        LayerCost row;
        row.layer_id = static_cast<int>(i);
        row.type = layer_kind_name(l.kind);
        row.c_in = s.c_in;
        row.c_out = s.out_c_high + s.out_c_low;
        row.h = s.in_h;
        row.w = s.in_w;
        row.mem_elems = static_cast<std::uint64_t>(s.out_c_high) * s.out_h * s.out_w +
                        static_cast<std::uint64_t>(s.out_c_low) * (s.out_h / 2) * (s.out_w / 2);

        const bool conv_like = l.kind == LayerKind::Conv || l.kind == LayerKind::OctConv;
        if (conv_like) {
            row.k = l.k;
            double a_in = s.alpha_in, a_out = s.alpha_out;
            if (view == CostView::TableStyle) a_in = a_out = alpha;
            if (l.kind == LayerKind::Conv && view == CostView::Octified) a_in = a_out = 0.0;
            row.alpha_in = a_in;
            row.alpha_out = a_out;
            // memory follows the costed view's output split
            const std::uint64_t cl_out = low_channels(l.c_out, a_out);
            row.mem_elems = (l.c_out - cl_out) * static_cast<std::uint64_t>(s.out_h) * s.out_w +
                            cl_out * static_cast<std::uint64_t>(s.out_h / 2) * (s.out_w / 2);
            row.flops_theory = layer_flops_theoretical(s.c_in, l.c_out, s.in_h, s.in_w, l.k,
                                                       a_in, a_out);
            row.flops_baseline =
                layer_flops_theoretical(s.c_in, l.c_out, s.in_h, s.in_w, l.k, 0.0, 0.0);

            // Instrumented single-sample run of this layer in isolation.
            const auto kernel = make_oct_kernel<float>(s.c_in, l.c_out, l.k, a_in, a_out);
            OctTensor<float> input;
            input.alpha = a_in;
            if (kernel.high_in() > 0)
                input.high = Tensor4<float>(1, kernel.high_in(), s.in_h, s.in_w);
            if (kernel.low_in() > 0)
                input.low = Tensor4<float>(1, kernel.low_in(), s.in_h / 2, s.in_w / 2);
            reset_mac_count();
            oct_conv_forward(input, kernel);
            row.flops_counted = mac_count();
        } else if (l.kind == LayerKind::Linear) {
            row.k = 1;
            const auto flat = static_cast<std::uint64_t>(s.flat_in);
            row.flops_theory = flat * l.c_out;
            row.flops_baseline = row.flops_theory;
            ConvKernel<float> w(l.c_out, static_cast<int>(flat), 1, 1);
            Tensor4<float> input(1, static_cast<int>(flat), 1, 1);
            reset_mac_count();
            conv2d(input, w, 1, 0);
            row.flops_counted = mac_count();
        }
        report.per_layer.push_back(row);
    }
    reset_mac_count();
    return report;
}

} // namespace oct
