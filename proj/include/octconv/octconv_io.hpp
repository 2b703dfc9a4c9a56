#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "octconv/octconv.hpp"
#include "octconv/tensor_io.hpp"

// Octave-kernel container ("OCTK"): header with the construction parameters
// (c_in, c_out, k, alpha_in, alpha_out, mode, groups, seed), then the four
// weight blocks in hh/lh/hl/ll order, each a presence byte plus a tensor
// record. Little-endian, like every other format here.

namespace oct {

namespace detail {

template <typename T>
void write_kernel_block(std::ostream& os, const std::optional<ConvKernel<T>>& blk) {
    io::put_le<std::uint8_t>(os, blk ? 1 : 0);
    if (!blk) return;
    Tensor4<T> t(blk->c_out(), blk->c_in_per_group(), blk->k_h(), blk->k_w());
    t.buffer() = blk->buffer();
    write_tensor(os, t);
}

template <typename T>
void read_kernel_block(std::istream& is, std::optional<ConvKernel<T>>& blk) {
    const auto present = io::get_le<std::uint8_t>(is);
    if (static_cast<bool>(present) != blk.has_value())
        throw IoError("kernel block presence does not match the header geometry");
    if (!blk) return;
    const Tensor4<T> t = read_tensor<T>(is);
    if (t.buffer().size() != blk->size()) throw IoError("kernel block size mismatch");
    blk->buffer() = t.buffer();
}

} // namespace detail

template <typename T>
void save_oct_kernel(const std::string& path, const OctKernel<T>& k) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    io::put_bytes(f, "OCTK", 4);
    io::put_le<std::uint32_t>(f, 1);
    io::put_le<std::uint8_t>(f, io::dtype_code<T>());
    io::put_le<std::uint32_t>(f, static_cast<std::uint32_t>(k.c_in));
    io::put_le<std::uint32_t>(f, static_cast<std::uint32_t>(k.c_out));
    io::put_le<std::uint32_t>(f, static_cast<std::uint32_t>(k.k));
    io::put_f64(f, k.alpha_in);
    io::put_f64(f, k.alpha_out);
    io::put_le<std::uint8_t>(f, static_cast<std::uint8_t>(k.mode));
    io::put_le<std::uint32_t>(f, static_cast<std::uint32_t>(k.groups));
    io::put_le<std::uint64_t>(f, k.seed);
    detail::write_kernel_block(f, k.w_hh);
    detail::write_kernel_block(f, k.w_lh);
    detail::write_kernel_block(f, k.w_hl);
    detail::write_kernel_block(f, k.w_ll);
    if (!f) throw IoError("write failed on " + path);
}

template <typename T>
OctKernel<T> load_oct_kernel(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    io::get_bytes(f, magic, 4);
    if (std::memcmp(magic, "OCTK", 4) != 0) throw IoError("bad kernel-file magic");
    if (io::get_le<std::uint32_t>(f) != 1) throw IoError("unsupported kernel-file version");
    if (io::get_le<std::uint8_t>(f) != io::dtype_code<T>())
        throw IoError("kernel-file dtype mismatch");
    const int c_in = static_cast<int>(io::get_le<std::uint32_t>(f));
    const int c_out = static_cast<int>(io::get_le<std::uint32_t>(f));
    const int k = static_cast<int>(io::get_le<std::uint32_t>(f));
    const double a_in = io::get_f64(f);
    const double a_out = io::get_f64(f);
    const auto mode_byte = io::get_le<std::uint8_t>(f);
    if (mode_byte > 2) throw IoError("bad kernel mode byte");
    const auto mode = static_cast<OctMode>(mode_byte);
    const int groups = static_cast<int>(io::get_le<std::uint32_t>(f));
    const auto seed = io::get_le<std::uint64_t>(f);

    OctKernel<T> out = make_oct_kernel<T>(c_in, c_out, k, a_in, a_out, mode, seed, groups);
    detail::read_kernel_block(f, out.w_hh);
    detail::read_kernel_block(f, out.w_lh);
    detail::read_kernel_block(f, out.w_hl);
    detail::read_kernel_block(f, out.w_ll);
    return out;
}

} // namespace oct
