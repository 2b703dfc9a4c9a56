#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "octconv/errors.hpp"
#include "octconv/octconv.hpp"

namespace oct {

// Net description text format, one layer per line, '#' starts a comment:
//
//   input N C H W          required first declaration
//   alpha A                optional; default ratio for octconv layers
//   seed S                 optional; weight init seed
//   conv C K               vanilla convolution, stride 1, same padding
//   octconv C K [AOUT]     octave convolution; alpha_in follows the incoming
//                          tensor, alpha_out defaults to the global ratio
//   relu                   applied to each frequency group independently
//   avgpool | maxpool      2x2 stride-2 pooling of every frequency group
//   globalpool             global average per channel, groups concatenated
//   linear C               flattens all groups, then a dense projection

enum class LayerKind { Conv, OctConv, Relu, AvgPool, MaxPool, GlobalPool, Linear };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::OctConv: return "octconv";
        case LayerKind::Relu: return "relu";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::GlobalPool: return "globalpool";
        case LayerKind::Linear: return "linear";
    }
    return "?";
}

struct LayerDesc {
    LayerKind kind;
    int c_out = 0; // conv / octconv / linear
    int k = 0;     // conv / octconv
    std::optional<double> alpha_out; // octconv only; overrides the global ratio
    int line = 0;  // source line, for diagnostics
};

/// Resolved per-layer geometry from shape inference. For octconv layers the
/// alpha pair is the one the built network will actually use.
struct LayerShape {
    int c_in = 0, c_out = 0;
    int in_h = 0, in_w = 0;   // full-resolution input dims
    int out_h = 0, out_w = 0; // full-resolution output dims
    int out_c_high = 0, out_c_low = 0;
    double alpha_in = 0.0, alpha_out = 0.0;
    std::size_t flat_in = 0; // linear layers: flattened input length
};

struct NetSpec {
    int in_n = 1, in_c = 0, in_h = 0, in_w = 0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::vector<LayerDesc> layers;

    bool has_octconv() const {
        for (const auto& l : layers)
            if (l.kind == LayerKind::OctConv) return true;
        return false;
    }
};

/// Walks the layer list propagating (c_high, c_low, h, w), validating every
/// build-time invariant. Errors name the offending layer's source line.
inline std::vector<LayerShape> infer_shapes(const NetSpec& spec) {
    if (spec.in_c < 1 || spec.in_h < 1 || spec.in_w < 1 || spec.in_n < 1)
        throw ParseError(1, "input dims must all be >= 1");
    std::vector<LayerShape> shapes;
    shapes.reserve(spec.layers.size());

    int c_high = spec.in_c, c_low = 0, h = spec.in_h, w = spec.in_w;
    double alpha_state = 0.0;

    for (const auto& l : spec.layers) {
        LayerShape s;
        s.c_in = c_high + c_low;
        s.in_h = h;
        s.in_w = w;
        switch (l.kind) {
            case LayerKind::Conv: {
                if (c_low > 0)
                    throw ParseError(l.line, "conv cannot consume a multi-frequency tensor; "
                                             "use octconv or exit the octave chain first");
                if (l.k < 1 || l.k % 2 == 0)
                    throw ParseError(l.line, "conv kernel size must be odd");
                c_high = l.c_out;
                break;
            }
            case LayerKind::OctConv: {
                if (l.k < 1 || l.k % 2 == 0)
                    throw ParseError(l.line, "octconv kernel size must be odd");
                if (h % 2 != 0 || w % 2 != 0)
                    throw ParseError(l.line, "octconv requires even spatial dims, got " +
                                                 std::to_string(h) + "x" + std::to_string(w));
                s.alpha_in = c_low > 0 ? alpha_state : 0.0;
                if (low_channels(s.c_in, s.alpha_in) != c_low)
                    throw ParseError(l.line, "octconv channel split mismatch");
                s.alpha_out = l.alpha_out.value_or(spec.alpha);
                if (s.alpha_out < 0.0 || s.alpha_out > 1.0)
                    throw ParseError(l.line, "octconv alpha_out must be in [0,1]");
                c_low = low_channels(l.c_out, s.alpha_out);
                c_high = l.c_out - c_low;
                alpha_state = s.alpha_out;
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::AvgPool:
            case LayerKind::MaxPool: {
                if (h % 2 != 0 || w % 2 != 0)
                    throw ParseError(l.line, "pooling requires even spatial dims, got " +
                                                 std::to_string(h) + "x" + std::to_string(w));
                if (c_low > 0 && (h % 4 != 0 || w % 4 != 0))
                    throw ParseError(l.line,
                                     "pooling a multi-frequency tensor requires dims "
                                     "divisible by 4, got " +
                                         std::to_string(h) + "x" + std::to_string(w));
                h /= 2;
                w /= 2;
                break;
            }
            case LayerKind::GlobalPool: {
                c_high = c_high + c_low;
                c_low = 0;
                alpha_state = 0.0;
                h = w = 1;
                break;
            }
            case LayerKind::Linear: {
                s.flat_in = static_cast<std::size_t>(c_high) * h * w +
                            static_cast<std::size_t>(c_low) * (h / 2) * (w / 2);
                c_high = l.c_out;
                c_low = 0;
                alpha_state = 0.0;
                h = w = 1;
                break;
            }
        }
        s.c_out = c_high + c_low;
        s.out_h = h;
        s.out_w = w;
        s.out_c_high = c_high;
        s.out_c_low = c_low;
        shapes.push_back(s);
    }
    return shapes;
}

inline NetSpec parse_spec(const std::string& text) {
    NetSpec spec;
    bool have_input = false;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;

    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::istringstream line(raw);
        std::string kind;
        if (!(line >> kind)) continue;

        auto want_int = [&](const char* what) {
            long long v;
            if (!(line >> v)) throw ParseError(lineno, std::string("expected ") + what);
            return static_cast<int>(v);
        };
        auto want_double = [&](const char* what) {
            double v;
            if (!(line >> v)) throw ParseError(lineno, std::string("expected ") + what);
            return v;
        };
        auto expect_end = [&]() {
            std::string extra;
            if (line >> extra) throw ParseError(lineno, "unexpected token '" + extra + "'");
        };

        if (kind == "input") {
            if (have_input) throw ParseError(lineno, "duplicate input declaration");
            spec.in_n = want_int("batch count");
            spec.in_c = want_int("channel count");
            spec.in_h = want_int("height");
            spec.in_w = want_int("width");
            expect_end();
            have_input = true;
        } else if (kind == "alpha") {
            spec.alpha = want_double("ratio");
            if (spec.alpha < 0.0 || spec.alpha > 1.0)
                throw ParseError(lineno, "alpha must be in [0,1]");
            expect_end();
        } else if (kind == "seed") {
            spec.seed = static_cast<std::uint64_t>(want_int("seed"));
            expect_end();
        } else if (kind == "conv" || kind == "octconv") {
            LayerDesc l;
            l.kind = kind == "conv" ? LayerKind::Conv : LayerKind::OctConv;
            l.c_out = want_int("output channels");
            l.k = want_int("kernel size");
            if (l.kind == LayerKind::OctConv) {
                double a;
                if (line >> a) l.alpha_out = a;
            }
            expect_end();
            l.line = lineno;
            spec.layers.push_back(l);
        } else if (kind == "relu" || kind == "avgpool" || kind == "maxpool" ||
                   kind == "globalpool") {
            LayerDesc l;
            l.kind = kind == "relu"      ? LayerKind::Relu
                     : kind == "avgpool" ? LayerKind::AvgPool
                     : kind == "maxpool" ? LayerKind::MaxPool
                                         : LayerKind::GlobalPool;
            expect_end();
            l.line = lineno;
            spec.layers.push_back(l);
        } else if (kind == "linear") {
            LayerDesc l;
            l.kind = LayerKind::Linear;
            l.c_out = want_int("output count");
            expect_end();
            l.line = lineno;
            spec.layers.push_back(l);
        } else {
            throw ParseError(lineno, "unknown layer kind '" + kind + "'");
        }
    }
    if (!have_input) throw ParseError(lineno, "no input declaration");
    infer_shapes(spec); // validate now so parse errors carry locations
    return spec;
}

inline NetSpec parse_spec_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open spec file " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_spec(buf.str());
}

/// Converts a vanilla net to its octave twin at the global ratio: every conv
/// except the first becomes an octconv; the last converted layer pins
/// alpha_out = 0 so the net exits the octave representation. alpha_in values
/// follow from shape inference (the first converted layer sees a vanilla
/// tensor, hence alpha_in = 0).
inline NetSpec octify(const NetSpec& spec, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("octify: alpha must be in [0,1]");
    if (spec.has_octconv()) throw ConfigError("octify: spec already contains octconv layers");

    std::vector<std::size_t> convertible;
    bool seen_first_conv = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::Conv) continue;
        if (!seen_first_conv) {
            seen_first_conv = true; // the stem conv stays vanilla
            continue;
        }
        convertible.push_back(i);
    }
    if (convertible.empty())
        throw ConfigError("octify: no convertible conv layers (the first conv stays vanilla)");

    NetSpec out = spec;
    out.alpha = alpha;
    for (std::size_t i : convertible) {
        out.layers[i].kind = LayerKind::OctConv;
        out.layers[i].alpha_out = std::nullopt; // global ratio
    }
    out.layers[convertible.back()].alpha_out = 0.0; // exit layer
    infer_shapes(out);
    return out;
}

/// Canonical one-line form with resolved alphas; basis for the weight-file
/// compatibility hash.
inline std::string canonical_spec(const NetSpec& spec) {
    const auto shapes = infer_shapes(spec);
    std::ostringstream os;
    os << "input " << spec.in_n << ' ' << spec.in_c << ' ' << spec.in_h << ' ' << spec.in_w
       << ';';
    char buf[64];
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        os << layer_kind_name(l.kind);
        if (l.kind == LayerKind::Conv) {
            os << ' ' << l.c_out << ' ' << l.k;
        } else if (l.kind == LayerKind::OctConv) {
            std::snprintf(buf, sizeof buf, " %d %d %.17g %.17g", l.c_out, l.k,
                          shapes[i].alpha_in, shapes[i].alpha_out);
            os << buf;
        } else if (l.kind == LayerKind::Linear) {
            os << ' ' << l.c_out;
        }
        os << ';';
    }
    return os.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t spec_hash(const NetSpec& spec) { return fnv1a64(canonical_spec(spec)); }

} // namespace oct
