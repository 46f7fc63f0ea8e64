#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "puncta/errors.hpp"
#include "puncta/grid.hpp"

namespace puncta {

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is, const char* ctx) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw io_error(std::string(ctx) + ": truncated file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_f32le(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32le(os, bits);
}

inline float read_f32le(std::istream& is, const char* ctx) {
    const std::uint32_t bits = read_u32le(is, ctx);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace detail

// MCT1 raw tensor: magic "MCT1", u32 ndim, ndim u32 dims, row-major f32
// payload, all little-endian.
inline void write_mct1(const std::string& path, const std::vector<std::uint32_t>& dims,
                       const std::vector<float>& values) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("MCT1", 4);
    detail::write_u32le(os, static_cast<std::uint32_t>(dims.size()));
    std::size_t n = 1;
    for (const auto d : dims) {
        detail::write_u32le(os, d);
        n *= d;
    }
    if (n != values.size()) throw validation_error("write_mct1: dims do not match value count");
    for (const float v : values) detail::write_f32le(os, v);
    if (!os) throw io_error("write failed: " + path);
}

template <typename T>
void write_mct1(const std::string& path, const Grid<T>& g) {
    std::vector<float> vals(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) vals[i] = static_cast<float>(g.v[i]);
    write_mct1(path, {static_cast<std::uint32_t>(g.h), static_cast<std::uint32_t>(g.w)}, vals);
}

struct Mct1Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

inline Mct1Tensor read_mct1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MCT1", 4) != 0)
        throw io_error("not an MCT1 file: " + path);
    const std::uint32_t ndim = detail::read_u32le(is, path.c_str());
    if (ndim > 8) throw io_error("implausible ndim in " + path);
    Mct1Tensor t;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.dims.push_back(detail::read_u32le(is, path.c_str()));
        n *= t.dims.back();
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = detail::read_f32le(is, path.c_str());
    return t;
}

template <typename T>
Grid<T> read_mct1_grid(const std::string& path) {
    const Mct1Tensor t = read_mct1(path);
    if (t.dims.size() != 2) throw io_error("expected 2-D tensor in " + path);
    Grid<T> g(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    for (std::size_t i = 0; i < t.values.size(); ++i) g.v[i] = static_cast<T>(t.values[i]);
    return g;
}

namespace detail {

inline int pgm_next_token(std::istream& is, const std::string& path) {
    // Skips whitespace and '#' comment lines per the Netpbm grammar.
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    if (c == EOF) throw io_error("truncated PGM header: " + path);
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = is.get();
    }
    return value;
}

} // namespace detail

struct PgmImage {
    int w = 0, h = 0, maxval = 0;
    std::vector<std::uint16_t> v; // row-major samples
};

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw io_error("not a binary PGM (P5): " + path);
    PgmImage img;
    img.w = detail::pgm_next_token(is, path);
    img.h = detail::pgm_next_token(is, path);
    img.maxval = detail::pgm_next_token(is, path);
    if (img.w <= 0 || img.h <= 0 || img.maxval <= 0 || img.maxval > 65535)
        throw io_error("bad PGM header: " + path);
    const std::size_t n = static_cast<std::size_t>(img.w) * img.h;
    img.v.resize(n);
    if (img.maxval < 256) {
        std::vector<unsigned char> raw(n);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n)))
            throw io_error("truncated PGM payload: " + path);
        for (std::size_t i = 0; i < n; ++i) img.v[i] = raw[i];
    } else {
        std::vector<unsigned char> raw(2 * n);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n)))
            throw io_error("truncated PGM payload: " + path);
        for (std::size_t i = 0; i < n; ++i)
            img.v[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    return img;
}

// Binary mask convention: 0 = background, 255 = foreground.
inline void write_pgm_mask(const std::string& path, const MaskGrid& mask) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<unsigned char> raw(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) raw[i] = mask.v[i] ? 255 : 0;
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw io_error("write failed: " + path);
}

inline MaskGrid read_pgm_mask(const std::string& path) {
    const PgmImage img = read_pgm(path);
    MaskGrid mask(img.h, img.w);
    const int mid = (img.maxval + 1) / 2;
    for (std::size_t i = 0; i < mask.size(); ++i) mask.v[i] = img.v[i] >= mid ? 1 : 0;
    return mask;
}

// Grayscale PGM patch mapped linearly from [0,maxval] onto [-1,1].
template <typename T>
Grid<T> read_pgm_patch(const std::string& path) {
    const PgmImage img = read_pgm(path);
    Grid<T> g(img.h, img.w);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] = static_cast<T>(2.0 * img.v[i] / img.maxval - 1.0);
    return g;
}

// Shortest round-trip-exact decimal form, stable across runs.
inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// FNV-1a, 64-bit; used to fingerprint report files.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

} // namespace puncta
