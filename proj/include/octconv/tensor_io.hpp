#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "octconv/tensor.hpp"

// Tensor container format, little-endian throughout:
//   magic "OCT4" | u32 version=1 | u8 dtype (0=f32, 1=f64) | 4 x u64 dims (n,c,h,w)
//   | payload, row-major (n,c,h,w)

namespace oct {
namespace io {

inline void put_bytes(std::ostream& os, const void* p, std::size_t len) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
}

inline void get_bytes(std::istream& is, void* p, std::size_t len) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
    if (!is) throw IoError("unexpected end of stream");
}

template <typename U>
void put_le(std::ostream& os, U v) {
    static_assert(std::is_integral_v<U>);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    put_bytes(os, buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
    static_assert(std::is_integral_v<U>);
    unsigned char buf[sizeof(U)];
    get_bytes(is, buf, sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<U>(v);
}

inline void put_f64(std::ostream& os, double v) {
    put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
}
inline double get_f64(std::istream& is) {
    return std::bit_cast<double>(get_le<std::uint64_t>(is));
}
inline void put_f32(std::ostream& os, float v) {
    put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
}
inline float get_f32(std::istream& is) {
    return std::bit_cast<float>(get_le<std::uint32_t>(is));
}

template <typename T>
void put_scalar(std::ostream& os, T v) {
    if constexpr (sizeof(T) == 4)
        put_f32(os, static_cast<float>(v));
    else
        put_f64(os, static_cast<double>(v));
}

template <typename T>
constexpr std::uint8_t dtype_code() {
    return sizeof(T) == 4 ? 0 : 1;
}

} // namespace io

inline constexpr char kTensorMagic[4] = {'O', 'C', 'T', '4'};
inline constexpr std::uint32_t kTensorVersion = 1;

template <typename T>
void write_tensor(std::ostream& os, const Tensor4<T>& t) {
    io::put_bytes(os, kTensorMagic, 4);
    io::put_le<std::uint32_t>(os, kTensorVersion);
    io::put_le<std::uint8_t>(os, io::dtype_code<T>());
    io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.n()));
    io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.c()));
    io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.h()));
    io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.w()));
    for (const T v : t.buffer()) io::put_scalar(os, v);
}

template <typename T>
Tensor4<T> read_tensor(std::istream& is) {
    char magic[4];
    io::get_bytes(is, magic, 4);
    if (std::memcmp(magic, kTensorMagic, 4) != 0) throw IoError("bad tensor magic");
    const auto version = io::get_le<std::uint32_t>(is);
    if (version != kTensorVersion)
        throw IoError("unsupported tensor version " + std::to_string(version));
    const auto dtype = io::get_le<std::uint8_t>(is);
    if (dtype != io::dtype_code<T>())
        throw IoError("tensor dtype mismatch: file has " +
                      std::string(dtype == 0 ? "f32" : "f64"));
    const auto n = io::get_le<std::uint64_t>(is);
    const auto c = io::get_le<std::uint64_t>(is);
    const auto h = io::get_le<std::uint64_t>(is);
    const auto w = io::get_le<std::uint64_t>(is);
    if (n == 0 || c == 0 || h == 0 || w == 0 || n * c * h * w > (1ULL << 32))
        throw IoError("implausible tensor dims in file");
    Tensor4<T> t(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h),
                 static_cast<int>(w));
    for (T& v : t.buffer())
        v = sizeof(T) == 4 ? static_cast<T>(io::get_f32(is)) : static_cast<T>(io::get_f64(is));
    return t;
}

template <typename T>
void save_tensor(const std::string& path, const Tensor4<T>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_tensor(f, t);
    if (!f) throw IoError("write failed on " + path);
}

template <typename T>
Tensor4<T> load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return read_tensor<T>(f);
}

// Analysis paths accept either precision; f32 payloads are up-cast.
inline Tensor4<double> load_tensor_as_double(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    io::get_bytes(f, magic, 4);
    io::get_le<std::uint32_t>(f);
    const auto dtype = io::get_le<std::uint8_t>(f);
    f.seekg(0);
    if (dtype == 0) return read_tensor<float>(f).template cast<double>();
    return read_tensor<double>(f);
}

} // namespace oct
