#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "puncta/errors.hpp"
#include "puncta/grid.hpp"
#include "puncta/rng.hpp"

namespace puncta {

struct TextureParams {
    int octaves = 3;
    double gain = 0.55;             // per-octave amplitude falloff
    double orientation_jitter = 0.6; // 0 = shared fibre direction, 1 = free
    double contrast = 0.3;           // peak |value| of the output
};

inline void validate(const TextureParams& p) {
    if (p.octaves < 1) throw validation_error("texture: octaves must be >= 1");
    if (!(p.gain > 0)) throw validation_error("texture: gain must be > 0");
    if (!(p.orientation_jitter >= 0 && p.orientation_jitter <= 1))
        throw validation_error("texture: orientation_jitter outside [0,1]");
    if (!(p.contrast > 0 && p.contrast <= 1))
        throw validation_error("texture: contrast outside (0,1]");
}

namespace detail {

// Separable Gaussian blur with clamped borders (texture use only; border
// fidelity does not matter for noise shaping).
inline Grid<double> blur_sep(const Grid<double>& img, double sigma) {
    const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
    double sum = 0.0;
    for (int i = -rad; i <= rad; ++i) {
        k[static_cast<std::size_t>(i + rad)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i + rad)];
    }
    for (auto& v : k) v /= sum;
    Grid<double> tmp(img.h, img.w), out(img.h, img.w);
    for (int r = 0; r < img.h; ++r) {
        const double* src = img.row(r);
        double* dst = tmp.row(r);
        for (int c = 0; c < img.w; ++c) {
            double acc = 0.0;
            for (int i = -rad; i <= rad; ++i)
                acc += k[static_cast<std::size_t>(i + rad)] * src[std::clamp(c + i, 0, img.w - 1)];
            dst[c] = acc;
        }
    }
    for (int r = 0; r < img.h; ++r) {
        double* dst = out.row(r);
        for (int c = 0; c < img.w; ++c) {
            double acc = 0.0;
            for (int i = -rad; i <= rad; ++i)
                acc += k[static_cast<std::size_t>(i + rad)] * tmp.at(std::clamp(r + i, 0, img.h - 1), c);
            dst[c] = acc;
        }
    }
    return out;
}

// 1-D Gaussian smear along an arbitrary direction, nearest-pixel sampling.
inline Grid<double> smear_along(const Grid<double>& img, double angle, double sigma) {
    const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
    double sum = 0.0;
    for (int i = -rad; i <= rad; ++i) {
        k[static_cast<std::size_t>(i + rad)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i + rad)];
    }
    for (auto& v : k) v /= sum;
    const double dy = std::sin(angle), dx = std::cos(angle);
    Grid<double> out(img.h, img.w);
    for (int r = 0; r < img.h; ++r) {
        for (int c = 0; c < img.w; ++c) {
            double acc = 0.0;
            for (int i = -rad; i <= rad; ++i) {
                const int rr = std::clamp(r + static_cast<int>(std::lround(i * dy)), 0, img.h - 1);
                const int cc = std::clamp(c + static_cast<int>(std::lround(i * dx)), 0, img.w - 1);
                acc += k[static_cast<std::size_t>(i + rad)] * img.at(rr, cc);
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

} // namespace detail

// Fibrous pseudo-mammographic background: oriented band-pass noise octaves
// summed with geometric gains, then normalized to peak |contrast|.
inline Grid<double> generate_texture_background(Rng& rng, const TextureParams& params, int h,
                                                int w) {
    validate(params);
    const double base_angle = rng.uniform(0.0, 3.141592653589793);
    Grid<double> acc(h, w);
    double weight = 1.0;
    for (int o = 0; o < params.octaves; ++o) {
        Grid<double> noise(h, w);
        for (auto& v : noise.v) v = rng.normal();
        const double jitter =
            params.orientation_jitter * rng.uniform(-1.5707963267948966, 1.5707963267948966);
        const double scale = static_cast<double>(1 << o);
        const Grid<double> lo = detail::blur_sep(noise, 0.6 * scale);
        const Grid<double> hi = detail::blur_sep(noise, 1.4 * scale);
        Grid<double> band(h, w);
        for (std::size_t i = 0; i < band.size(); ++i) band.v[i] = lo.v[i] - hi.v[i];
        const Grid<double> oriented = detail::smear_along(band, base_angle + jitter, 1.2 * scale);
        for (std::size_t i = 0; i < band.size(); ++i) acc.v[i] += weight * oriented.v[i];
        weight *= params.gain;
    }
    double mean = 0.0;
    for (const double v : acc.v) mean += v;
    mean /= static_cast<double>(acc.size());
    double peak = 0.0;
    for (const double v : acc.v) peak = std::max(peak, std::fabs(v - mean));
    Grid<double> out(h, w);
    const double scale = params.contrast / (peak + 1e-8);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = (acc.v[i] - mean) * scale;
    return out;
}

} // namespace puncta
