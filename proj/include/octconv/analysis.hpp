#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "octconv/octconv.hpp"
#include "octconv/ops.hpp"
#include "octconv/tensor.hpp"

namespace oct {

struct CentroidShift {
    double dy = 0.0;
    double dx = 0.0;
    double norm() const { return std::hypot(dy, dx); }
};

namespace detail {

inline CentroidShift centroid(const Tensor4<double>& x) {
    double mass = 0.0, my = 0.0, mx = 0.0;
    for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) {
            const double v = std::abs(x.at(0, 0, y, xx));
            mass += v;
            my += v * y;
            mx += v * xx;
        }
    if (mass == 0.0) return {0.0, 0.0};
    return {my / mass, mx / mass};
}

} // namespace detail

/// Round trip a centered impulse through H->L (3x3 all-ones kernel, then the
/// chosen down-sampling) and back up through nearest upsampling, and report
/// how far the intensity centroid moved. The impulse is unit mass centered
/// on the grid point between pixels (size/2, size/2) and (size/2+1, ...),
/// realized as a quarter-mass 2x2 block, so it is aligned with a pooling
/// cell and its centroid is exact.
inline CentroidShift misalignment_probe(DownsampleStrategy strategy, int size = 16) {
    if (size < 8 || size % 2 != 0)
        throw ConfigError("misalignment_probe: size must be even and >= 8");
    Tensor4<double> x(1, 1, size, size);
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) x.at(0, 0, size / 2 + dy, size / 2 + dx) = 0.25;

    ConvKernel<double> ones(1, 1, 3, 3);
    ones.fill(1.0);

    Tensor4<double> down = strategy == DownsampleStrategy::StridedConv
                               ? conv2d(x, ones, 2, 1)
                               : conv2d(strategy == DownsampleStrategy::MaxPool ? max_pool2(x)
                                                                                : avg_pool2(x),
                                        ones, 1, 1);
    const Tensor4<double> up = upsample_nearest2(down);

    const CentroidShift in = detail::centroid(x);
    const CentroidShift out = detail::centroid(up);
    return {out.dy - in.dy, out.dx - in.dx};
}

/// DC-centered 2D spectrum, averaged over batch and channels. `energy`
/// holds mean squared DFT magnitudes; index (r, c) corresponds to the
/// frequency pair (r - h/2, c - w/2).
struct EnergyMap {
    int h = 0, w = 0;
    std::vector<double> energy;
    double at(int r, int c) const { return energy[static_cast<std::size_t>(r) * w + c]; }
};

/// Unnormalized 2D DFT of one feature map, computed as row transforms then
/// column transforms (each a direct O(n^2) sum; map sizes are capped at 64).
inline std::vector<std::complex<double>> dft2d(const Tensor4<double>& x, int n, int c) {
    const int h = x.h(), w = x.w();
    if (h > 64 || w > 64) throw ConfigError("dft2d: spatial dims capped at 64");
    std::vector<std::complex<double>> rows(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int kx = 0; kx < w; ++kx) {
            std::complex<double> acc{0.0, 0.0};
            for (int xx = 0; xx < w; ++xx) {
                const double phi = -2.0 * std::numbers::pi * kx * xx / w;
                acc += x.at(n, c, y, xx) * std::complex<double>(std::cos(phi), std::sin(phi));
            }
            rows[static_cast<std::size_t>(y) * w + kx] = acc;
        }
    std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
    for (int kx = 0; kx < w; ++kx)
        for (int ky = 0; ky < h; ++ky) {
            std::complex<double> acc{0.0, 0.0};
            for (int y = 0; y < h; ++y) {
                const double phi = -2.0 * std::numbers::pi * ky * y / h;
                acc += rows[static_cast<std::size_t>(y) * w + kx] *
                       std::complex<double>(std::cos(phi), std::sin(phi));
            }
            out[static_cast<std::size_t>(ky) * w + kx] = acc;
        }
    return out;
}

inline EnergyMap energy_map(const Tensor4<double>& feats) {
    if (feats.size() == 0) throw ShapeError("energy_map: empty feature dump");
    const int h = feats.h(), w = feats.w();
    EnergyMap map{h, w, std::vector<double>(static_cast<std::size_t>(h) * w, 0.0)};
    for (int n = 0; n < feats.n(); ++n)
        for (int c = 0; c < feats.c(); ++c) {
            const auto f = dft2d(feats, n, c);
            for (int ky = 0; ky < h; ++ky)
                for (int kx = 0; kx < w; ++kx) {
                    // fftshift: move DC to the center bin
                    const int r = (ky + h / 2) % h;
                    const int cc = (kx + w / 2) % w;
                    map.energy[static_cast<std::size_t>(r) * w + cc] +=
                        std::norm(f[static_cast<std::size_t>(ky) * w + kx]);
                }
        }
    const double scale = 1.0 / (static_cast<double>(feats.n()) * feats.c());
    for (auto& v : map.energy) v *= scale;
    return map;
}

/// Fraction of total energy at frequencies outside the central quarter band,
/// i.e. where |f| >= dim/4 on either axis.
inline double out_of_band_fraction(const EnergyMap& map) {
    double total = 0.0, outside = 0.0;
    for (int r = 0; r < map.h; ++r)
        for (int c = 0; c < map.w; ++c) {
            const int fy = r - map.h / 2;
            const int fx = c - map.w / 2;
            const double v = map.at(r, c);
            total += v;
            if (std::abs(fy) >= map.h / 4 || std::abs(fx) >= map.w / 4) outside += v;
        }
    return total == 0.0 ? 0.0 : outside / total;
}

inline void write_energy_csv(std::ostream& os, const EnergyMap& map) {
    os << "# schema: octcli.energy.v1\n";
    os << "ky,kx,energy\n";
    char buf[80];
    for (int r = 0; r < map.h; ++r)
        for (int c = 0; c < map.w; ++c) {
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", r - map.h / 2, c - map.w / 2,
                          map.at(r, c));
            os << buf;
        }
}

} // namespace oct
