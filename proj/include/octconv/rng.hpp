#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace oct {

// Counter-based deterministic generator: value i of stream `key` is a pure
// function of (key, i), so any draw can be replayed from the seed alone.
// Mixing is the splitmix64 finalizer.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    // Derive an independent stream, e.g. per layer or per kernel block.
    CounterRng substream(std::uint64_t id) const {
        return CounterRng(mix(key_ ^ (0x9e3779b97f4a7c15ULL + id)));
    }

    std::uint64_t bits(std::uint64_t counter) const {
        return mix(key_ + 0xbf58476d1ce4e5b9ULL * (counter + 1));
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    // Standard normal draw i (Box-Muller over counters 2i, 2i+1).
    double normal(std::uint64_t i) const {
        double u1 = uniform(2 * i);
        double u2 = uniform(2 * i + 1);
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
        return bits(counter) % n;
    }

    std::uint64_t key() const { return key_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
};

} // namespace oct
