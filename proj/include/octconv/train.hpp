#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "octconv/network.hpp"

namespace oct {

/// Synthetic classification task: class = the quadrant holding an oriented
/// stripe patch. The patch sits over a natural-image-like background of
/// smooth low-frequency waves plus light Gaussian noise. Samples are pure
/// functions of (seed, index) and classes cycle round-robin, so any subset
/// is balanced.
struct ToyTask {
    std::uint64_t seed = 0;
    int classes = 4;
    int channels = 1;
    int h = 32, w = 32;

    int label_of(int index) const { return index % classes; }

    template <typename T>
    Tensor4<T> make_sample(int index) const {
        const CounterRng noise = CounterRng(seed).substream(0).substream(index);
        const CounterRng place = CounterRng(seed).substream(1).substream(index);
        const CounterRng waves = CounterRng(seed).substream(2).substream(index);
        Tensor4<T> x(1, channels, h, w);
        for (std::size_t i = 0; i < x.size(); ++i)
            x.buffer()[i] = static_cast<T>(0.05 * noise.normal(i));

        // smooth background: a few whole-image waves, at most 1 cycle per
        // axis, so the smooth content sits well below the patch stripes
        for (std::uint64_t j = 0; j < 4; ++j) {
            int fy = static_cast<int>(waves.below(4 * j, 3)) - 1;
            int fx = static_cast<int>(waves.below(4 * j + 1, 3)) - 1;
            if (fy == 0 && fx == 0) fx = 1;
            const double phase = 2.0 * std::numbers::pi * waves.uniform(4 * j + 2);
            const double amp = 0.3 + 0.3 * waves.uniform(4 * j + 3);
            for (int c = 0; c < channels; ++c)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        x.at(0, c, y, xx) += static_cast<T>(
                            amp * std::cos(2.0 * std::numbers::pi *
                                               (static_cast<double>(fy) * y / h +
                                                static_cast<double>(fx) * xx / w) +
                                           phase));
        }

        const int label = label_of(index);
        const int qy = (label / 2) * (h / 2), qx = (label % 2) * (w / 2);
        const int patch = 3 * h / 8;
        const int oy = qy + static_cast<int>(place.below(0, h / 2 - patch + 1));
        const int ox = qx + static_cast<int>(place.below(1, w / 2 - patch + 1));
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < patch; ++y)
                for (int xx = 0; xx < patch; ++xx) {
                    const double stripes =
                        std::sin(2.0 * std::numbers::pi * (y + xx) / 4.0);
                    x.at(0, c, oy + y, ox + xx) += static_cast<T>(1.2 * stripes);
                }
        return x;
    }

    // Stacks samples `first..first+count-1` into one batch.
    template <typename T>
    Tensor4<T> make_batch(const std::vector<int>& indices) const {
        Tensor4<T> out(static_cast<int>(indices.size()), channels, h, w);
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const Tensor4<T> s = make_sample<T>(indices[b]);
            for (int c = 0; c < channels; ++c)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        out.at(static_cast<int>(b), c, y, xx) = s.at(0, c, y, xx);
        }
        return out;
    }
};

template <typename T>
struct LossGrad {
    double loss = 0.0;
    Tensor4<T> grad; // d(mean loss)/d(logits)
};

/// Mean softmax cross-entropy over the batch, with the usual max-shift for
/// stability. grad is already divided by the batch size.
template <typename T>
LossGrad<T> softmax_cross_entropy(const Tensor4<T>& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.n()) != labels.size())
        throw ShapeError("softmax_cross_entropy: batch size mismatch");
    LossGrad<T> out;
    out.grad = Tensor4<T>(logits.n(), logits.c(), 1, 1);
    double total = 0.0;
    for (int n = 0; n < logits.n(); ++n) {
        double maxv = logits.at(n, 0, 0, 0);
        for (int c = 1; c < logits.c(); ++c) maxv = std::max(maxv, (double)logits.at(n, c, 0, 0));
        double denom = 0.0;
        for (int c = 0; c < logits.c(); ++c)
            denom += std::exp(static_cast<double>(logits.at(n, c, 0, 0)) - maxv);
        const int y = labels[n];
        total += -(static_cast<double>(logits.at(n, y, 0, 0)) - maxv - std::log(denom));
        for (int c = 0; c < logits.c(); ++c) {
            const double p =
                std::exp(static_cast<double>(logits.at(n, c, 0, 0)) - maxv) / denom;
            out.grad.at(n, c, 0, 0) =
                static_cast<T>((p - (c == y ? 1.0 : 0.0)) / logits.n());
        }
    }
    out.loss = total / logits.n();
    return out;
}

template <typename T>
int argmax_class(const Tensor4<T>& logits, int n) {
    int best = 0;
    for (int c = 1; c < logits.c(); ++c)
        if (logits.at(n, c, 0, 0) > logits.at(n, best, 0, 0)) best = c;
    return best;
}

struct CurveRow {
    int epoch = 0;
    double loss = 0.0;
    double acc = 0.0;
};

template <typename T>
struct TrainOutcome {
    std::vector<CurveRow> curve;
    double final_acc = 0.0;
    Network<T> net;
};

inline double cosine_lr(double lr0, int epoch, int total_epochs) {
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

template <typename T>
double evaluate_accuracy(const Network<T>& net, const ToyTask& task, int count, int batch) {
    int correct = 0;
    for (int start = 0; start < count; start += batch) {
        std::vector<int> idx;
        for (int i = start; i < std::min(start + batch, count); ++i) idx.push_back(i);
        const Tensor4<T> logits = net.forward(task.make_batch<T>(idx));
        for (std::size_t b = 0; b < idx.size(); ++b)
            if (argmax_class(logits, static_cast<int>(b)) == task.label_of(idx[b]))
                ++correct;
    }
    return static_cast<double>(correct) / count;
}

/// Plain SGD with a cosine learning-rate schedule and softmax cross-entropy.
/// Bit-deterministic for a fixed (spec, task, thread count): batch order is
/// drawn from the task seed only, never from the network.
template <typename T>
TrainOutcome<T> train_toy(const NetSpec& spec, const ToyTask& task, int epochs, double lr0,
                          int train_size = 256, int batch_size = 32) {
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::Linear)
        throw ConfigError("train_toy: spec must end in a linear classifier");
    if (spec.layers.back().c_out != task.classes)
        throw ConfigError("train_toy: classifier width " +
                          std::to_string(spec.layers.back().c_out) + " != class count " +
                          std::to_string(task.classes));
    if (spec.in_c != task.channels || spec.in_h != task.h || spec.in_w != task.w)
        throw ConfigError("train_toy: spec input dims do not match the task");

    TrainOutcome<T> out{{}, 0.0, Network<T>(spec)};
    const CounterRng order_rng = CounterRng(task.seed).substream(2);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates over the sample indices, keyed by (task seed, epoch).
        std::vector<int> order(train_size);
        for (int i = 0; i < train_size; ++i) order[i] = i;
        const CounterRng er = order_rng.substream(epoch);
        for (int i = train_size - 1; i > 0; --i)
            std::swap(order[i], order[er.below(i, static_cast<std::uint64_t>(i) + 1)]);

        const double lr = cosine_lr(lr0, epoch, epochs);
        double loss_sum = 0.0;
        int batches = 0;
        for (int start = 0; start < train_size; start += batch_size) {
            std::vector<int> idx(order.begin() + start,
                                 order.begin() + std::min(start + batch_size, train_size));
            std::vector<int> labels;
            for (int i : idx) labels.push_back(task.label_of(i));

            typename Network<T>::Tape tape;
            const Tensor4<T> logits = out.net.forward(task.make_batch<T>(idx), &tape);
            const LossGrad<T> lg = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(lg.loss))
                throw std::runtime_error("training diverged: loss is not finite at epoch " +
                                         std::to_string(epoch));
            loss_sum += lg.loss;
            ++batches;
            out.net.sgd_step(out.net.backward(tape, lg.grad), static_cast<T>(lr));
        }
        const double acc = evaluate_accuracy(out.net, task, train_size, batch_size);
        out.curve.push_back({epoch, loss_sum / batches, acc});
    }
    out.final_acc = out.curve.empty()
                        ? evaluate_accuracy(out.net, task, train_size, batch_size)
                        : out.curve.back().acc;
    return out;
}

inline void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& curve) {
    os << "# schema: octcli.losscurve.v1\n";
    os << "epoch,loss,acc\n";
    char buf[96];
    for (const auto& r : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.loss, r.acc);
        os << buf;
    }
}

} // namespace oct
