#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sumgan/errors.hpp"

// Little-endian primitives for the on-disk containers. Multi-byte values
// are byteswapped on big-endian hosts so files are portable.

namespace sumgan::io {

namespace detail {

template <typename T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <typename T>
T from_le(T v) {
    return to_le(v);
}

}  // namespace detail

template <typename T>
void write_pod(std::ostream& os, T v) {
    const T le = detail::to_le(v);
    os.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ValidationError(std::string("truncated file while reading ") + what);
    return detail::from_le(v);
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_pod(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_pod(os, v); }
inline void write_i32(std::ostream& os, std::int32_t v) { write_pod(os, v); }
inline void write_f64(std::ostream& os, double v) { write_pod(os, v); }

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    return read_pod<std::uint32_t>(is, what);
}
inline std::uint64_t read_u64(std::istream& is, const char* what) {
    return read_pod<std::uint64_t>(is, what);
}
inline std::int32_t read_i32(std::istream& is, const char* what) {
    return read_pod<std::int32_t>(is, what);
}
inline double read_f64(std::istream& is, const char* what) {
    return read_pod<double>(is, what);
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
    const std::uint32_t n = read_u32(is, what);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw ValidationError(std::string("truncated file while reading ") + what);
    return s;
}

template <typename T>
void write_array(std::ostream& os, const std::vector<T>& v) {
    write_u64(os, v.size());
    for (T x : v) write_pod(os, x);
}

template <typename T>
std::vector<T> read_array(std::istream& is, const char* what) {
    const std::uint64_t n = read_u64(is, what);
    std::vector<T> v(n);
    for (auto& x : v) x = read_pod<T>(is, what);
    return v;
}

}  // namespace sumgan::io
