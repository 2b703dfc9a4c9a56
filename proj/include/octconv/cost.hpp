#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "octconv/errors.hpp"
#include "octconv/octconv.hpp"

namespace oct {

/// Relative FLOP cost of an octave convolution versus vanilla at ratio
/// alpha: 1 - (3/4) * alpha * (2 - alpha). One FLOP = one multiply-add.
inline double flops_ratio(double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("flops_ratio: alpha must be in [0,1], got " + std::to_string(alpha));
    return 1.0 - 0.75 * alpha * (2.0 - alpha);
}

/// Relative activation-memory cost at ratio alpha: 1 - (3/4) * alpha.
inline double memory_ratio(double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("memory_ratio: alpha must be in [0,1], got " + std::to_string(alpha));
    return 1.0 - 0.75 * alpha;
}

/// Multiply-add count of one octave convolution layer on an h x w (full
/// resolution) input, summing the four path terms. Generalizes the equal-
/// ratio formulas to alpha_in != alpha_out and c_in != c_out. Masked paths
/// contribute zero; grouped paths divide by the group count; depth-wise
/// layers have no exchange paths at all.
inline std::uint64_t layer_flops_theoretical(int c_in, int c_out, int h, int w, int k,
                                             double alpha_in, double alpha_out,
                                             OctMode mode = OctMode::Dense, int groups = 1,
                                             PathMask mask = {}) {
    if (c_in < 1 || c_out < 1 || h < 1 || w < 1 || k < 1)
        throw ConfigError("layer_flops_theoretical: dims must be positive");
    const std::uint64_t cl_in = low_channels(c_in, alpha_in);
    const std::uint64_t ch_in = c_in - cl_in;
    const std::uint64_t cl_out = low_channels(c_out, alpha_out);
    const std::uint64_t ch_out = c_out - cl_out;
    const std::uint64_t hw = static_cast<std::uint64_t>(h) * w;
    const std::uint64_t kk = static_cast<std::uint64_t>(k) * k;

    auto path = [&](std::uint64_t out_elems, std::uint64_t ci, std::uint64_t co) {
        if (ci == 0 || co == 0) return std::uint64_t{0};
        const std::uint64_t g = mode == OctMode::Grouped ? groups
                                : mode == OctMode::Depthwise ? ci
                                                             : 1;
        return out_elems * kk * (ci / g) * co;
    };

    std::uint64_t total = path(hw, ch_in, ch_out) + path(hw / 4, cl_in, cl_out);
    if (mode != OctMode::Depthwise) {
        if (mask.enable_l_to_h) total += path(hw / 4, cl_in, ch_out);
        if (mask.enable_h_to_l) total += path(hw / 4, ch_in, cl_out);
    }
    return total;
}

struct LayerCost {
    int layer_id = 0;
    std::string type;
    int c_in = 0, c_out = 0, h = 0, w = 0, k = 0;
    double alpha_in = 0.0, alpha_out = 0.0;
    std::uint64_t flops_theory = 0;
    std::uint64_t flops_counted = 0;
    std::uint64_t flops_baseline = 0; // same layer at alpha = 0
    std::uint64_t mem_elems = 0;
};

/// Per-layer and aggregate cost of a network, theoretical and counted, with
/// ratios against the alpha = 0 evaluation of the same architecture.
struct CostReport {
    std::vector<LayerCost> per_layer;

    std::uint64_t total_theory() const {
        std::uint64_t s = 0;
        for (const auto& l : per_layer) s += l.flops_theory;
        return s;
    }
    std::uint64_t total_counted() const {
        std::uint64_t s = 0;
        for (const auto& l : per_layer) s += l.flops_counted;
        return s;
    }
    std::uint64_t total_baseline() const {
        std::uint64_t s = 0;
        for (const auto& l : per_layer) s += l.flops_baseline;
        return s;
    }
    std::uint64_t total_mem_elems() const {
        std::uint64_t s = 0;
        for (const auto& l : per_layer) s += l.mem_elems;
        return s;
    }
    double total_ratio() const {
        const auto base = total_baseline();
        return base == 0 ? 1.0 : static_cast<double>(total_theory()) / base;
    }
};

inline double layer_ratio(const LayerCost& l) {
    return l.flops_baseline == 0 ? 1.0
                                 : static_cast<double>(l.flops_theory) / l.flops_baseline;
}

inline void write_cost_csv(std::ostream& os, const CostReport& report) {
    os << "# schema: octcli.cost.v1\n";
    os << "layer_id,type,c_in,c_out,h,w,k,alpha_in,alpha_out,flops_theory,flops_counted,"
          "mem_elems,ratio_vs_baseline\n";
    for (const auto& l : report.per_layer) {
        os << l.layer_id << ',' << l.type << ',' << l.c_in << ',' << l.c_out << ',' << l.h
           << ',' << l.w << ',' << l.k << ',' << l.alpha_in << ',' << l.alpha_out << ','
           << l.flops_theory << ',' << l.flops_counted << ',' << l.mem_elems << ','
           << layer_ratio(l) << '\n';
    }
    os << "total,,,,,,,,," << report.total_theory() << ',' << report.total_counted() << ','
       << report.total_mem_elems() << ',' << report.total_ratio() << '\n';
    // 1 FLOP = 1 multiply-add above; doubled totals for the mul+add-counted convention
    os << "# mul+add convention: total_theory_2x=" << 2 * report.total_theory()
       << " total_counted_2x=" << 2 * report.total_counted() << '\n';
}

} // namespace oct
