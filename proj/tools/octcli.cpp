// Diagnostics CLI: cost reports, benchmarks, gradient checks, oracle
// equivalence runs, toy training and frequency analysis. Every subcommand
// exits nonzero on failure with a single "error: ..." line on stderr.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "octconv/analysis.hpp"
#include "octconv/gradcheck.hpp"
#include "octconv/network.hpp"
#include "octconv/oracle.hpp"
#include "octconv/train.hpp"

namespace {

std::uint64_t env_seed_or(std::uint64_t fallback) {
    if (const char* s = std::getenv("OCT_SEED")) return std::strtoull(s, nullptr, 10);
    return fallback;
}

oct::DownsampleStrategy parse_strategy(const std::string& name) {
    if (name == "avg") return oct::DownsampleStrategy::AveragePool;
    if (name == "max") return oct::DownsampleStrategy::MaxPool;
    if (name == "stride") return oct::DownsampleStrategy::StridedConv;
    throw oct::ConfigError("unknown strategy '" + name + "' (want avg|max|stride)");
}

void parse_size(const std::string& text, int& h, int& w) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw oct::ConfigError("size must look like 8x8");
    h = std::stoi(text.substr(0, x));
    w = std::stoi(text.substr(x + 1));
}

std::unique_ptr<std::ofstream> open_out(const std::string& path) {
    auto f = std::make_unique<std::ofstream>(path);
    if (!*f) throw oct::IoError("cannot open " + path + " for writing");
    return f;
}

// Octifies vanilla specs at the requested ratio unless told to run them raw.
oct::NetSpec prepare_spec(const std::string& path, double alpha, bool vanilla) {
    oct::NetSpec spec = oct::parse_spec_file(path);
    if (vanilla || spec.has_octconv()) return spec;
    return oct::octify(spec, alpha);
}

int cmd_analyze(const std::string& spec_path, double alpha, bool octified,
                const std::string& out_path) {
    const auto spec = oct::parse_spec_file(spec_path);
    const auto report = oct::network_cost(
        spec, alpha, octified ? oct::CostView::Octified : oct::CostView::TableStyle);
    if (out_path.empty()) {
        oct::write_cost_csv(std::cout, report);
    } else {
        auto f = open_out(out_path);
        oct::write_cost_csv(*f, report);
    }
    return 0;
}

int cmd_bench(const std::string& spec_path, double alpha, bool vanilla, int repeats,
              int threads, const std::string& dtype, const std::string& out_path) {
    oct::set_num_threads(threads);
    const auto spec = prepare_spec(spec_path, alpha, vanilla);

    auto run = [&](auto tag) {
        using T = decltype(tag);
        oct::Network<T> net(spec);
        oct::Tensor4<T> x(spec.in_n, spec.in_c, spec.in_h, spec.in_w);
        x.fill_normal(oct::CounterRng(env_seed_or(1)), T(1));

        std::ostream* os = &std::cout;
        std::unique_ptr<std::ofstream> file;
        if (!out_path.empty()) {
            file = open_out(out_path);
            os = file.get();
        }
        *os << "# schema: octcli.bench.v1\n";
        *os << "layer_id,type,best_ms,mean_ms\n";
        oct::OctTensor<T> act = oct::from_vanilla(x);
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            double best = 1e100, total = 0.0;
            for (int r = 0; r < repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                net.apply_one(i, act);
                const auto t1 = std::chrono::steady_clock::now();
                const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                best = std::min(best, ms);
                total += ms;
            }
            *os << i << ',' << oct::layer_kind_name(spec.layers[i].kind) << ',' << best << ','
                << total / repeats << '\n';
            act = net.apply_one(i, act);
        }
    };
    if (dtype == "f32")
        run(float{});
    else if (dtype == "f64")
        run(double{});
    else
        throw oct::ConfigError("dtype must be f32 or f64");
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double alpha, const std::string& size, int chans,
                  const std::string& mode, const std::string& strategy) {
    oct::GradCheckConfig cfg;
    cfg.seed = seed;
    cfg.alpha_in = cfg.alpha_out = alpha;
    parse_size(size, cfg.h, cfg.w);
    cfg.c_in = cfg.c_out = chans;
    cfg.strategy = parse_strategy(strategy);
    if (mode == "grouped") {
        cfg.mode = oct::OctMode::Grouped;
        cfg.groups = 2;
    } else if (mode == "depthwise") {
        cfg.mode = oct::OctMode::Depthwise;
    } else if (mode != "dense") {
        throw oct::ConfigError("mode must be dense|grouped|depthwise");
    }
    const auto r = oct::gradcheck_octconv(cfg);
    std::cout << "max_rel_err=" << r.max_rel_err << " worst_part=" << r.worst_part << "\n";
    return r.max_rel_err < 1e-4 ? 0 : 1;
}

int cmd_misalign(const std::string& strategy, int size) {
    const auto s = oct::misalignment_probe(parse_strategy(strategy), size);
    std::cout << "# schema: octcli.misalign.v1\n";
    std::cout << "strategy,dy,dx,norm\n";
    std::cout << strategy << ',' << s.dy << ',' << s.dx << ',' << s.norm() << "\n";
    return 0;
}

int cmd_train_toy(const std::string& spec_path, double alpha, bool vanilla, int epochs,
                  std::uint64_t seed, std::uint64_t task_seed, double lr, int train_size,
                  int batch, const std::string& dtype, const std::string& curve_out,
                  const std::string& weights_out) {
    oct::NetSpec spec = prepare_spec(spec_path, alpha, vanilla);
    spec.seed = seed;

    oct::ToyTask task;
    task.seed = task_seed;
    task.channels = spec.in_c;
    task.h = spec.in_h;
    task.w = spec.in_w;
    task.classes = spec.layers.back().kind == oct::LayerKind::Linear
                       ? spec.layers.back().c_out
                       : 4;

    auto run = [&](auto tag) {
        using T = decltype(tag);
        const auto outcome = oct::train_toy<T>(spec, task, epochs, lr, train_size, batch);
        if (curve_out.empty()) {
            oct::write_curve_csv(std::cout, outcome.curve);
        } else {
            auto f = open_out(curve_out);
            oct::write_curve_csv(*f, outcome.curve);
        }
        if (!weights_out.empty()) outcome.net.save_weights(weights_out);
        std::cerr << "final train accuracy: " << outcome.final_acc << "\n";
    };
    if (dtype == "f32")
        run(float{});
    else if (dtype == "f64")
        run(double{});
    else
        throw oct::ConfigError("dtype must be f32 or f64");
    return 0;
}

int cmd_freq(const std::string& spec_path, const std::string& weights,
             const std::string& features, double alpha, bool vanilla, int dump_layer,
             std::uint64_t task_seed, int samples, const std::string& prefix) {
    auto emit = [&](const oct::Tensor4<double>& feats, const std::string& group) {
        const auto map = oct::energy_map(feats);
        auto f = open_out(prefix + "_" + group + ".csv");
        oct::write_energy_csv(*f, map);
        std::cout << group << " out_of_band_fraction=" << oct::out_of_band_fraction(map)
                  << "\n";
    };

    // direct mode: analyze a previously written feature dump
    if (!features.empty()) {
        emit(oct::load_tensor_as_double(features), "features");
        return 0;
    }
    if (spec_path.empty() || weights.empty())
        throw oct::ConfigError("freq needs either --features or --spec with --weights");

    oct::NetSpec spec = prepare_spec(spec_path, alpha, vanilla);
    oct::Network<double> net(spec);
    net.load_weights(weights);

    oct::ToyTask task;
    task.seed = task_seed;
    task.channels = spec.in_c;
    task.h = spec.in_h;
    task.w = spec.in_w;

    std::vector<int> idx(samples);
    for (int i = 0; i < samples; ++i) idx[i] = i;
    const auto act = net.activation_at(task.make_batch<double>(idx),
                                       static_cast<std::size_t>(dump_layer));

    if (!act.high && !act.low) throw oct::ShapeError("empty activation dump");
    if (act.high) {
        oct::save_tensor(prefix + "_high.oct4", *act.high);
        emit(*act.high, "high");
    }
    if (act.low) {
        oct::save_tensor(prefix + "_low.oct4", *act.low);
        emit(*act.low, "low");
    }
    return 0;
}

int cmd_oracle(std::uint64_t seed, int trials) {
    double worst_vanilla = 0.0, worst_avg = 0.0, worst_strided = 0.0;
    const oct::CounterRng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const oct::CounterRng tr = rng.substream(t);
        const int c = 2 * (1 + static_cast<int>(tr.below(0, 8)));      // 2..16
        const int h = 2 * (2 + static_cast<int>(tr.below(1, 7)));      // 4..16
        const int w = 2 * (2 + static_cast<int>(tr.below(2, 7)));
        const int k = 1 + 2 * static_cast<int>(tr.below(3, 3));        // 1,3,5
        const double alpha = 0.25 * (1 + tr.below(4, 3));              // .25,.5,.75

        oct::Tensor4<double> x(1, c, h, w);
        x.fill_normal(tr.substream(1), 1.0);
        oct::ConvKernel<double> wk(c, c, k, k);
        wk.fill_normal(tr.substream(2), 1.0);
        const int pad = (k - 1) / 2;
        auto rel = [](const oct::Tensor4<double>& a, const oct::Tensor4<double>& b) {
            double scale = 0.0, worst = 0.0;
            for (double v : a.buffer()) scale = std::max(scale, std::abs(v));
            for (double v : b.buffer()) scale = std::max(scale, std::abs(v));
            if (scale == 0.0) return 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double denom = std::max(
                    {std::abs(a.buffer()[i]), std::abs(b.buffer()[i]), 1e-6 * scale});
                worst = std::max(worst, std::abs(a.buffer()[i] - b.buffer()[i]) / denom);
            }
            return worst;
        };
        worst_vanilla =
            std::max(worst_vanilla, rel(oct::conv2d(x, wk, 1, pad), oct::vanilla_ref(x, wk, pad)));

        const auto kernel =
            oct::make_oct_kernel<double>(c, c, k, alpha, alpha, oct::OctMode::Dense,
                                         tr.substream(3).key());
        oct::OctTensor<double> ox;
        ox.alpha = alpha;
        if (kernel.high_in() > 0) {
            ox.high = oct::Tensor4<double>(1, kernel.high_in(), h, w);
            ox.high->fill_normal(tr.substream(4), 1.0);
        }
        if (kernel.low_in() > 0) {
            ox.low = oct::Tensor4<double>(1, kernel.low_in(), h / 2, w / 2);
            ox.low->fill_normal(tr.substream(5), 1.0);
        }
        const auto avg = oct::oct_conv_forward(ox, kernel, oct::DownsampleStrategy::AveragePool);
        if (avg.high) worst_avg = std::max(worst_avg, rel(*avg.high, oct::oct_high_ref(ox, kernel)));
        if (avg.low)
            worst_avg = std::max(
                worst_avg,
                rel(*avg.low, oct::oct_low_ref(ox, kernel, oct::DownsampleStrategy::AveragePool)));
        const auto strided =
            oct::oct_conv_forward(ox, kernel, oct::DownsampleStrategy::StridedConv);
        if (strided.low)
            worst_strided = std::max(
                worst_strided,
                rel(*strided.low,
                    oct::oct_low_ref(ox, kernel, oct::DownsampleStrategy::StridedConv)));
    }
    std::cout << "vanilla_vs_ref=" << worst_vanilla << " oct_avg_vs_ref=" << worst_avg
              << " oct_strided_vs_ref=" << worst_strided << "\n";
    return (worst_vanilla < 1e-6 && worst_avg < 1e-5 && worst_strided < 1e-6) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"octave convolution diagnostics"};
    app.require_subcommand(1);

    std::string spec_path, out_path, weights, features, dtype = "f32", strategy = "avg";
    std::string size = "8x8", mode = "dense", prefix = "freq", curve_out, weights_out;
    std::string train_dtype = "f64";
    double alpha = 0.25, lr = 0.05;
    bool octified = false, vanilla = false;
    int repeats = 5, threads = 1, chans = 8, epochs = 30, dump_layer = 0;
    int train_size = 256, batch = 32, samples = 16, probe_size = 16, trials = 20;
    std::uint64_t seed = env_seed_or(0), task_seed = env_seed_or(77);

    auto* analyze = app.add_subcommand("analyze", "Table-1 style FLOP/memory cost report");
    analyze->add_option("--spec", spec_path, "net description file")->required();
    analyze->add_option("--alpha", alpha, "low-frequency channel ratio");
    analyze->add_flag("--octified", octified,
                      "report the converted network (entry/exit layers) instead of the "
                      "per-layer steady state");
    analyze->add_option("--out", out_path, "CSV output path (default stdout)");

    auto* bench = app.add_subcommand("bench", "per-layer wall-clock timings");
    bench->add_option("--spec", spec_path)->required();
    bench->add_option("--alpha", alpha);
    bench->add_flag("--vanilla", vanilla, "run the spec unconverted");
    bench->add_option("--repeats", repeats);
    bench->add_option("--threads", threads);
    bench->add_option("--dtype", dtype, "f32 or f64");
    bench->add_option("--out", out_path);

    auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    gradcheck->add_option("--seed", seed);
    gradcheck->add_option("--alpha", alpha);
    gradcheck->add_option("--size", size, "input dims, e.g. 8x8");
    gradcheck->add_option("--chans", chans);
    gradcheck->add_option("--mode", mode, "dense|grouped|depthwise");
    gradcheck->add_option("--strategy", strategy, "avg|max|stride");

    auto* misalign = app.add_subcommand("misalign", "down-sampling centroid-shift probe");
    misalign->add_option("--strategy", strategy, "avg|max|stride")->required();
    misalign->add_option("--size", probe_size);

    auto* train = app.add_subcommand("train-toy", "SGD on the synthetic quadrant task");
    train->add_option("--spec", spec_path)->required();
    train->add_option("--alpha", alpha);
    train->add_flag("--vanilla", vanilla, "train the spec unconverted");
    train->add_option("--epochs", epochs);
    train->add_option("--seed", seed, "weight-init seed");
    train->add_option("--task-seed", task_seed);
    train->add_option("--lr", lr);
    train->add_option("--train-size", train_size);
    train->add_option("--batch", batch);
    train->add_option("--dtype", train_dtype, "f64 (default) or f32");
    train->add_option("--curve-out", curve_out, "loss-curve CSV path (default stdout)");
    train->add_option("--weights-out", weights_out);

    auto* freq = app.add_subcommand("freq", "DFT energy maps of a layer's feature groups");
    freq->add_option("--spec", spec_path);
    freq->add_option("--weights", weights);
    freq->add_option("--features", features, "analyze an existing .oct4 feature dump");
    freq->add_option("--alpha", alpha);
    freq->add_flag("--vanilla", vanilla);
    freq->add_option("--dump-layer", dump_layer);
    freq->add_option("--task-seed", task_seed);
    freq->add_option("--samples", samples);
    freq->add_option("--out-prefix", prefix);

    auto* oracle = app.add_subcommand("oracle", "fast paths vs direct-index references");
    oracle->add_option("--seed", seed);
    oracle->add_option("--trials", trials);

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) return cmd_analyze(spec_path, alpha, octified, out_path);
        if (bench->parsed())
            return cmd_bench(spec_path, alpha, vanilla, repeats, threads, dtype, out_path);
        if (gradcheck->parsed())
            return cmd_gradcheck(seed, alpha, size, chans, mode, strategy);
        if (misalign->parsed()) return cmd_misalign(strategy, probe_size);
        if (train->parsed())
            return cmd_train_toy(spec_path, alpha, vanilla, epochs, seed, task_seed, lr,
                                 train_size, batch, train_dtype, curve_out, weights_out);
        if (freq->parsed())
            return cmd_freq(spec_path, weights, features, alpha, vanilla, dump_layer,
                            task_seed, samples, prefix);
        if (oracle->parsed()) return cmd_oracle(seed, trials);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
