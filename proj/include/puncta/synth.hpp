#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "puncta/errors.hpp"
#include "puncta/grid.hpp"
#include "puncta/rng.hpp"

namespace puncta {

struct Punctum {
    double center_row = 0.0;
    double center_col = 0.0;
    double radius = 0.0;   // hard support radius, pixels
    double spread = 1.0;   // Gaussian sigma of the soft kernel, pixels
    double amplitude = 1.0;
};

struct SynthConfig {
    int patch_size = 64;
    int clusters_lo = 1, clusters_hi = 2;
    int puncta_lo = 3, puncta_hi = 10;
    double cluster_spread = 2.5;     // compact-mode scatter sigma, pixels
    double line_pattern_prob = 0.25; // linear ductal-style arrangements
    double radius_lo = 0.5, radius_hi = 2.0;
    double spread_lo = 0.6, spread_hi = 1.8;
    double amplitude_lo = 0.3, amplitude_hi = 1.2;
    double blur_sigma_lo = 0.5, blur_sigma_hi = 1.2;
    double gain_lo = 0.4, gain_hi = 1.0;
    double clamp_lo = 0.25, clamp_hi = 2.0;
    int local_window = 9;
};

inline void validate(const SynthConfig& c) {
    auto ival = [](int lo, int hi) { return lo <= hi; };
    auto rval = [](double lo, double hi) { return lo <= hi; };
    if (c.patch_size < 8) throw validation_error("synth: patch_size too small");
    if (!ival(c.clusters_lo, c.clusters_hi) || c.clusters_lo < 0)
        throw validation_error("synth: bad clusters range");
    if (!ival(c.puncta_lo, c.puncta_hi) || c.puncta_lo < 1)
        throw validation_error("synth: bad puncta range");
    if (!(c.cluster_spread >= 0)) throw validation_error("synth: bad cluster_spread");
    if (!(c.line_pattern_prob >= 0 && c.line_pattern_prob <= 1))
        throw validation_error("synth: line_pattern_prob outside [0,1]");
    if (!rval(c.radius_lo, c.radius_hi) || c.radius_lo < 0)
        throw validation_error("synth: bad radius range");
    if (!rval(c.spread_lo, c.spread_hi) || !(c.spread_lo > 0))
        throw validation_error("synth: bad spread range");
    if (!rval(c.amplitude_lo, c.amplitude_hi) || c.amplitude_lo < 0)
        throw validation_error("synth: bad amplitude range");
    if (!rval(c.blur_sigma_lo, c.blur_sigma_hi) || !(c.blur_sigma_lo > 0))
        throw validation_error("synth: bad blur sigma range");
    if (!rval(c.gain_lo, c.gain_hi) || !(c.gain_lo > 0))
        throw validation_error("synth: bad gain range");
    if (!rval(c.clamp_lo, c.clamp_hi) || !(c.clamp_lo > 0))
        throw validation_error("synth: bad contrast clamp");
    if (c.local_window < 1 || c.local_window % 2 == 0)
        throw validation_error("synth: local_window must be odd and positive");
}

struct LabeledPatch {
    Grid<double> xs;  // injected patch, [-1,1]
    MaskGrid ys;      // exact support mask
    MaskGrid ss;      // sparse seed, one pixel per component
    std::vector<Punctum> puncta;
};

// Cluster centers away from the border, then per cluster either a compact
// Gaussian scatter or a line arrangement (small perpendicular jitter keeps
// centers within 0.5 px of a fitted line). Draw order is fixed; layouts are
// a pure function of the random stream.
inline std::vector<Punctum> sample_cluster_layout(Rng& rng, const SynthConfig& cfg) {
    validate(cfg);
    std::vector<Punctum> out;
    const double size = static_cast<double>(cfg.patch_size);
    const double margin = std::min(size / 4.0, cfg.radius_hi + cfg.cluster_spread + 2.0);
    const int n_clusters = rng.uniform_int(cfg.clusters_lo, cfg.clusters_hi);
    for (int c = 0; c < n_clusters; ++c) {
        const double cy = rng.uniform(margin, size - 1.0 - margin);
        const double cx = rng.uniform(margin, size - 1.0 - margin);
        const int n_p = rng.uniform_int(cfg.puncta_lo, cfg.puncta_hi);
        const bool line = rng.bernoulli(cfg.line_pattern_prob);
        double ang = 0.0, seg_len = 0.0;
        if (line) {
            ang = rng.uniform(0.0, 3.141592653589793);
            seg_len = rng.uniform(2.0, 2.0 + 3.0 * std::max(cfg.cluster_spread, 1.0));
        }
        for (int k = 0; k < n_p; ++k) {
            double dr, dc;
            if (line) {
                const double along =
                    (n_p > 1 ? (static_cast<double>(k) / (n_p - 1) - 0.5) * seg_len : 0.0);
                const double perp = rng.uniform(-0.15, 0.15);
                dr = along * std::sin(ang) + perp * std::cos(ang);
                dc = along * std::cos(ang) - perp * std::sin(ang);
            } else {
                dr = rng.normal() * cfg.cluster_spread;
                dc = rng.normal() * cfg.cluster_spread;
            }
            Punctum p;
            p.center_row = std::clamp(cy + dr, 0.0, size - 1.0);
            p.center_col = std::clamp(cx + dc, 0.0, size - 1.0);
            p.radius = rng.uniform(cfg.radius_lo, cfg.radius_hi);
            p.spread = rng.uniform(cfg.spread_lo, cfg.spread_hi);
            p.amplitude = rng.uniform(cfg.amplitude_lo, cfg.amplitude_hi);
            out.push_back(p);
        }
    }
    return out;
}

// a(u) = sum_k amplitude_k * exp(-|u - c_k|^2 / (2 spread_k^2)), evaluated
// at every pixel (no truncation window).
inline Grid<double> render_mc_field(const std::vector<Punctum>& puncta, int h, int w) {
    Grid<double> a(h, w);
    for (const auto& p : puncta) {
        if (p.center_row < 0 || p.center_row > h - 1 || p.center_col < 0 || p.center_col > w - 1)
            throw validation_error("render_mc_field: punctum center out of bounds");
        // amplitude 0 is allowed: the pure-support case renders an identically
        // zero field and injection degenerates to a bit-copy.
        if (!(p.spread > 0) || p.amplitude < 0 || p.radius < 0)
            throw validation_error("render_mc_field: bad punctum parameters");
        const double inv2s2 = 1.0 / (2.0 * p.spread * p.spread);
        for (int r = 0; r < h; ++r) {
            const double dy = r - p.center_row;
            double* row = a.row(r);
            for (int c = 0; c < w; ++c) {
                const double dx = c - p.center_col;
                row[c] += p.amplitude * std::exp(-(dy * dy + dx * dx) * inv2s2);
            }
        }
    }
    return a;
}

// kappa_u = g * clamp(local std / (global std + 1e-6), clamp_lo, clamp_hi).
// Local std uses a local_window box with clamped borders; population form.
inline Grid<double> local_contrast(const Grid<double>& xb, double gain, const SynthConfig& cfg) {
    if (!(gain > 0)) throw validation_error("local_contrast: gain must be > 0");
    double s = 0.0, s2 = 0.0;
    for (const double v : xb.v) {
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(xb.size());
    const double gvar = std::max(0.0, s2 / n - (s / n) * (s / n));
    const double gstd = std::sqrt(gvar);

    const int rad = cfg.local_window / 2;
    Grid<double> kappa(xb.h, xb.w);
    for (int r = 0; r < xb.h; ++r) {
        for (int c = 0; c < xb.w; ++c) {
            double ls = 0.0, ls2 = 0.0;
            for (int dr = -rad; dr <= rad; ++dr) {
                const int rr = std::clamp(r + dr, 0, xb.h - 1);
                const double* row = xb.row(rr);
                for (int dc = -rad; dc <= rad; ++dc) {
                    const double v = row[std::clamp(c + dc, 0, xb.w - 1)];
                    ls += v;
                    ls2 += v * v;
                }
            }
            const double wn = static_cast<double>(cfg.local_window) * cfg.local_window;
            const double lvar = std::max(0.0, ls2 / wn - (ls / wn) * (ls / wn));
            const double ratio = std::sqrt(lvar) / (gstd + 1e-6);
            kappa.at(r, c) = gain * std::clamp(ratio, cfg.clamp_lo, cfg.clamp_hi);
        }
    }
    return kappa;
}

// x_s = clip(x_b + kappa .* blur(a), -1, 1). Pixels the blurred field does
// not touch are copied bit-exactly.
inline Grid<double> inject(const Grid<double>& xb, const Grid<double>& a, double blur_sigma,
                           const Grid<double>& kappa) {
    require_same_shape(xb, a, "inject");
    require_same_shape(xb, kappa, "inject");
    const int rad = static_cast<int>(std::ceil(3.0 * blur_sigma));
    const Grid<double> dx = conv2d_same(a, gaussian_kernel(blur_sigma, rad));
    Grid<double> out(xb.h, xb.w);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = dx.v[i];
        out.v[i] = (d == 0.0) ? xb.v[i] : clip_unit(xb.v[i] + kappa.v[i] * d);
    }
    return out;
}

// Union of hard disks |u - c_k| <= radius_k on pixel centers; the pixel
// nearest each center is always set so a zero radius marks one pixel.
inline MaskGrid mask_from_puncta(const std::vector<Punctum>& puncta, int h, int w) {
    MaskGrid y(h, w);
    for (const auto& p : puncta) {
        const int nr = std::clamp(static_cast<int>(std::lround(p.center_row)), 0, h - 1);
        const int nc = std::clamp(static_cast<int>(std::lround(p.center_col)), 0, w - 1);
        y.at(nr, nc) = 1;
        const int r_lo = std::max(0, static_cast<int>(std::floor(p.center_row - p.radius)));
        const int r_hi = std::min(h - 1, static_cast<int>(std::ceil(p.center_row + p.radius)));
        const int c_lo = std::max(0, static_cast<int>(std::floor(p.center_col - p.radius)));
        const int c_hi = std::min(w - 1, static_cast<int>(std::ceil(p.center_col + p.radius)));
        const double r2 = p.radius * p.radius;
        for (int r = r_lo; r <= r_hi; ++r) {
            const double dy = r - p.center_row;
            for (int c = c_lo; c <= c_hi; ++c) {
                const double dxx = c - p.center_col;
                if (dy * dy + dxx * dxx <= r2) y.at(r, c) = 1;
            }
        }
    }
    return y;
}

// One uniformly chosen pixel per 8-connected component, in label order.
inline MaskGrid extract_seed_from_mask(const MaskGrid& y, Rng& rng) {
    auto [labels, count] = label_components(y);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < y.size(); ++i)
        if (labels.v[i] > 0) members[static_cast<std::size_t>(labels.v[i] - 1)].push_back(i);
    MaskGrid s(y.h, y.w);
    for (const auto& m : members) {
        const auto pick = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(m.size()) - 1));
        s.v[m[pick]] = 1;
    }
    return s;
}

inline LabeledPatch make_labeled_patch(const Grid<double>& xb, Rng& rng, const SynthConfig& cfg) {
    validate(cfg);
    if (xb.h != cfg.patch_size || xb.w != cfg.patch_size)
        throw validation_error("make_labeled_patch: background size mismatch");
    LabeledPatch lp;
    lp.puncta = sample_cluster_layout(rng, cfg);
    const Grid<double> field = render_mc_field(lp.puncta, xb.h, xb.w);
    const double gain = rng.uniform(cfg.gain_lo, cfg.gain_hi);
    const double blur_sigma = rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
    const Grid<double> kappa = local_contrast(xb, gain, cfg);
    lp.xs = inject(xb, field, blur_sigma, kappa);
    lp.ys = mask_from_puncta(lp.puncta, xb.h, xb.w);
    lp.ss = extract_seed_from_mask(lp.ys, rng);
    return lp;
}

} // namespace puncta
