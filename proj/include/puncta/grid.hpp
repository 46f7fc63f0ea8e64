#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "puncta/errors.hpp"

namespace puncta {

// Dense row-major 2-D grid. Patch-role grids hold values in [-1,1],
// probability grids in [0,1], mask/seed grids in {0,1}.
template <typename T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}

    T& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    const T& at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }

    T* row(int r) { return v.data() + static_cast<std::size_t>(r) * w; }
    const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * w; }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
};

using MaskGrid = Grid<std::uint8_t>;

namespace detail {

// Symmetric (edge-inclusive) reflection; valid for any n >= 1.
inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

} // namespace detail

template <typename A, typename B>
inline void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (a.h != b.h || a.w != b.w)
        throw validation_error(std::string(what) + ": shape mismatch");
}

// Numerically stable logistic function.
template <typename T>
inline T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Grid<T> sigmoid_map(const Grid<T>& logits) {
    Grid<T> p(logits.h, logits.w);
    for (std::size_t i = 0; i < logits.size(); ++i) p.v[i] = sigmoid(logits.v[i]);
    return p;
}

// Same-size true convolution (kernel flipped) with reflected borders.
// Kernel dimensions must be odd.
template <typename T>
Grid<T> conv2d_same(const Grid<T>& img, const Grid<T>& kernel) {
    if (kernel.h % 2 == 0 || kernel.w % 2 == 0)
        throw validation_error("conv2d_same: kernel dimensions must be odd");
    const int rh = kernel.h / 2;
    const int rw = kernel.w / 2;
    Grid<T> out(img.h, img.w);
    for (int r = 0; r < img.h; ++r) {
        const bool edge_row = r < rh || r >= img.h - rh;
        for (int c = 0; c < img.w; ++c) {
            T acc = T(0);
            if (!edge_row && c >= rw && c < img.w - rw) {
                for (int a = -rh; a <= rh; ++a) {
                    const T* krow = kernel.row(rh + a) ;
                    const T* irow = img.row(r - a);
                    for (int b = -rw; b <= rw; ++b)
                        acc += krow[rw + b] * irow[c - b];
                }
            } else {
                for (int a = -rh; a <= rh; ++a) {
                    const int rr = detail::reflect(r - a, img.h);
                    for (int b = -rw; b <= rw; ++b) {
                        const int cc = detail::reflect(c - b, img.w);
                        acc += kernel.at(rh + a, rw + b) * img.at(rr, cc);
                    }
                }
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

// (2r+1)^2 isotropic Gaussian, normalized to unit sum.
template <typename T>
Grid<T> gaussian_kernel(T sigma, int radius) {
    if (!(sigma > T(0))) throw validation_error("gaussian_kernel: sigma must be positive");
    if (radius < 0) throw validation_error("gaussian_kernel: radius must be non-negative");
    const int n = 2 * radius + 1;
    Grid<T> k(n, n);
    T sum = T(0);
    for (int i = -radius; i <= radius; ++i)
        for (int j = -radius; j <= radius; ++j) {
            const T val = std::exp(-(T(i) * i + T(j) * j) / (T(2) * sigma * sigma));
            k.at(radius + i, radius + j) = val;
            sum += val;
        }
    for (auto& val : k.v) val /= sum;
    return k;
}

// Sobel gradient magnitude, normalized by the per-image maximum. Output in [0,1].
template <typename T>
Grid<T> edge_map(const Grid<T>& x) {
    Grid<T> mag(x.h, x.w);
    T max_mag = T(0);
    for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c) {
            T win[3][3];
            for (int a = -1; a <= 1; ++a) {
                const int rr = detail::reflect(r + a, x.h);
                for (int b = -1; b <= 1; ++b)
                    win[a + 1][b + 1] = x.at(rr, detail::reflect(c + b, x.w));
            }
            const T gx = (win[0][2] + T(2) * win[1][2] + win[2][2]) -
                         (win[0][0] + T(2) * win[1][0] + win[2][0]);
            const T gy = (win[2][0] + T(2) * win[2][1] + win[2][2]) -
                         (win[0][0] + T(2) * win[0][1] + win[0][2]);
            const T m = std::sqrt(gx * gx + gy * gy);
            mag.at(r, c) = m;
            max_mag = std::max(max_mag, m);
        }
    const T denom = max_mag + T(1e-8);
    for (auto& val : mag.v) val /= denom;
    return mag;
}

template <typename T>
    requires std::is_arithmetic_v<T>
T clip_unit(T v) {
    return std::clamp(v, T(-1), T(1));
}

template <typename T>
Grid<T> clip_unit(Grid<T> g) {
    for (auto& val : g.v) val = std::clamp(val, T(-1), T(1));
    return g;
}

template <typename T>
T grid_sum(const Grid<T>& g) {
    T s = T(0);
    for (const auto& val : g.v) s += val;
    return s;
}

template <typename T>
T grid_max(const Grid<T>& g) {
    T m = g.v.empty() ? T(0) : g.v[0];
    for (const auto& val : g.v) m = std::max(m, val);
    return m;
}

template <typename To, typename From>
Grid<To> grid_cast(const Grid<From>& g) {
    Grid<To> out(g.h, g.w);
    for (std::size_t i = 0; i < g.size(); ++i) out.v[i] = static_cast<To>(g.v[i]);
    return out;
}

// 8-connected component labelling. Labels are 1..count in first-encounter
// row-major order; 0 marks background.
inline std::pair<Grid<int>, int> label_components(const MaskGrid& mask) {
    Grid<int> labels(mask.h, mask.w, 0);
    int count = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < mask.h; ++r)
        for (int c = 0; c < mask.w; ++c) {
            if (!mask.at(r, c) || labels.at(r, c)) continue;
            ++count;
            stack.push_back({r, c});
            labels.at(r, c) = count;
            while (!stack.empty()) {
                const auto [cr, cc] = stack.back();
                stack.pop_back();
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= mask.h || nc < 0 || nc >= mask.w) continue;
                        if (!mask.at(nr, nc) || labels.at(nr, nc)) continue;
                        labels.at(nr, nc) = count;
                        stack.push_back({nr, nc});
                    }
            }
        }
    return {std::move(labels), count};
}

} // namespace puncta
