#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

#include "octconv/errors.hpp"
#include "octconv/rng.hpp"

namespace oct {

/// Dense rank-4 tensor with (batch, channel, row, col) axes, stored flat in
/// row-major (n, c, h, w) order. All dims are >= 1; the empty case is
/// expressed by holders (std::optional) at the call sites that need it.
template <typename T>
class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
        if (n < 1 || c < 1 || h < 1 || w < 1)
            throw ShapeError("Tensor4 dims must all be >= 1, got " + shape_str(n, c, h, w));
        data_.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
    }

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }

    T& at(int n, int c, int y, int x) {
        assert(in_range(n, c, y, x));
        return data_[index(n, c, y, x)];
    }
    T at(int n, int c, int y, int x) const {
        assert(in_range(n, c, y, x));
        return data_[index(n, c, y, x)];
    }

    // Zero-padded read: out-of-bounds spatial coordinates yield 0.
    T at_padded(int n, int c, int y, int x) const {
        if (y < 0 || y >= h_ || x < 0 || x >= w_) return T(0);
        return at(n, c, y, x);
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& buffer() { return data_; }
    const std::vector<T>& buffer() const { return data_; }

    bool same_shape(const Tensor4& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    std::string shape() const { return shape_str(n_, c_, h_, w_); }

    void fill(T v) { data_.assign(data_.size(), v); }

    void fill_normal(const CounterRng& rng, T stddev) {
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] = static_cast<T>(rng.normal(i) * static_cast<double>(stddev));
    }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(n_, c_, h_, w_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out.buffer()[i] = static_cast<U>(data_[i]);
        return out;
    }

    static std::string shape_str(int n, int c, int h, int w) {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
               "," + std::to_string(w) + ")";
    }

private:
    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
    }
    bool in_range(int n, int c, int y, int x) const {
        return n >= 0 && n < n_ && c >= 0 && c < c_ && y >= 0 && y < h_ && x >= 0 && x < w_;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

/// Convolution weights with (c_out, c_in_per_group * groups, k_h, k_w) logical
/// shape, stored as a flat (c_out, c_in/groups, k_h, k_w) buffer. Kernels are
/// odd-sized; depth-wise means groups == c_in == c_out.
template <typename T>
class ConvKernel {
public:
    ConvKernel() = default;

    ConvKernel(int c_out, int c_in, int k_h, int k_w, int groups = 1)
        : c_out_(c_out), c_in_(c_in), k_h_(k_h), k_w_(k_w), groups_(groups) {
        if (c_out < 1 || c_in < 1)
            throw ShapeError("kernel channels must be >= 1, got c_out=" + std::to_string(c_out) +
                             " c_in=" + std::to_string(c_in));
        if (k_h < 1 || k_w < 1 || k_h % 2 == 0 || k_w % 2 == 0)
            throw ConfigError("kernel size must be odd and positive, got " +
                              std::to_string(k_h) + "x" + std::to_string(k_w));
        if (groups < 1 || c_in % groups != 0 || c_out % groups != 0)
            throw ConfigError("c_in=" + std::to_string(c_in) + " and c_out=" +
                              std::to_string(c_out) + " must both divide by groups=" +
                              std::to_string(groups));
        data_.assign(static_cast<std::size_t>(c_out) * (c_in / groups) * k_h * k_w, T(0));
    }

    int c_out() const { return c_out_; }
    int c_in() const { return c_in_; }
    int c_in_per_group() const { return c_in_ / groups_; }
    int k_h() const { return k_h_; }
    int k_w() const { return k_w_; }
    int groups() const { return groups_; }
    bool depthwise() const { return groups_ == c_in_ && groups_ == c_out_; }
    std::size_t size() const { return data_.size(); }

    // ci is the index within the output channel's group, in [0, c_in/groups).
    T& at(int co, int ci, int ky, int kx) {
        assert(co >= 0 && co < c_out_ && ci >= 0 && ci < c_in_per_group());
        return data_[index(co, ci, ky, kx)];
    }
    T at(int co, int ci, int ky, int kx) const {
        assert(co >= 0 && co < c_out_ && ci >= 0 && ci < c_in_per_group());
        return data_[index(co, ci, ky, kx)];
    }

    std::vector<T>& buffer() { return data_; }
    const std::vector<T>& buffer() const { return data_; }

    bool same_shape(const ConvKernel& o) const {
        return c_out_ == o.c_out_ && c_in_ == o.c_in_ && k_h_ == o.k_h_ && k_w_ == o.k_w_ &&
               groups_ == o.groups_;
    }

    std::string shape() const {
        return "(" + std::to_string(c_out_) + "," + std::to_string(c_in_) + "," +
               std::to_string(k_h_) + "," + std::to_string(k_w_) + ",g=" +
               std::to_string(groups_) + ")";
    }

    void fill(T v) { data_.assign(data_.size(), v); }

    void fill_normal(const CounterRng& rng, T stddev) {
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] = static_cast<T>(rng.normal(i) * static_cast<double>(stddev));
    }

    template <typename U>
    ConvKernel<U> cast() const {
        ConvKernel<U> out(c_out_, c_in_, k_h_, k_w_, groups_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out.buffer()[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::size_t index(int co, int ci, int ky, int kx) const {
        return ((static_cast<std::size_t>(co) * c_in_per_group() + ci) * k_h_ + ky) * k_w_ + kx;
    }

    int c_out_ = 0, c_in_ = 0, k_h_ = 0, k_w_ = 0, groups_ = 1;
    std::vector<T> data_;
};

} // namespace oct
