#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "puncta/errors.hpp"
#include "puncta/grid.hpp"
#include "puncta/losses.hpp"
#include "puncta/nn.hpp"
#include "puncta/rfprior.hpp"
#include "puncta/rng.hpp"

namespace puncta {

// Defaults are the tuned operating point; see config files for overrides.
struct TTGPRConfig {
    int iterations = 50;
    double t_start = 0.09053149415704413;
    double t_end = 0.8052230726911125;
    double w_tversky = 128.15533098670937;
    double w_stab = 57.88546958560159;
    double w_edge = 220.70931647468294;
    double alpha_tversky = 0.3;
    double beta_tversky = 2.6140537072408576;
    double eta = 0.4945043784053065;
    double rho = 2.8422788048947973;
    double tau_seed = 0.5;
    int max_seeds = 32;
    double eps = 1e-6;
    RFConfig rf;
};

inline void validate(const TTGPRConfig& c) {
    if (c.iterations < 0) throw validation_error("ttgpr: iterations must be >= 0");
    if (!(c.t_start >= 0.0 && c.t_start <= c.t_end && c.t_end <= 1.0))
        throw validation_error("ttgpr: need 0 <= t_start <= t_end <= 1");
    if (c.w_tversky < 0 || c.w_stab < 0 || c.w_edge < 0 || c.eta < 0 || c.rho < 0)
        throw validation_error("ttgpr: weights and rates must be >= 0");
    if (!(c.tau_seed > 0.0 && c.tau_seed < 1.0))
        throw validation_error("ttgpr: tau_seed must lie in (0,1)");
    if (c.max_seeds < 0) throw validation_error("ttgpr: max_seeds must be >= 0");
    if (!(c.eps > 0.0)) throw validation_error("ttgpr: eps must be > 0");
    if (c.rf.euler_steps < 1) throw validation_error("ttgpr: euler_steps must be >= 1");
}

// Linear coarse-to-fine schedule over [t_start, t_end]; the last index is
// pinned so the endpoint is exact in floating point.
inline double schedule_time(int i, int iterations, double t_start, double t_end) {
    const int upper = std::max(iterations, 1);
    if (i < 0 || i >= upper) throw validation_error("schedule_time: index out of range");
    if (iterations > 1 && i == iterations - 1) return t_end;
    const double denom = static_cast<double>(std::max(1, iterations - 1));
    return t_start + (static_cast<double>(i) / denom) * (t_end - t_start);
}

// Sparse seeding operator A(p): threshold, 8-connected components, one peak
// pixel each (row-major first on ties), top max_seeds components by peak.
template <typename T>
MaskGrid extract_seed_from_prob(const Grid<T>& p, const TTGPRConfig& cfg) {
    MaskGrid thr(p.h, p.w);
    for (std::size_t i = 0; i < p.size(); ++i)
        thr.v[i] = p.v[i] > static_cast<T>(cfg.tau_seed) ? 1 : 0;
    auto [labels, count] = label_components(thr);
    struct Peak {
        T prob;
        std::size_t index;
    };
    std::vector<Peak> peaks(static_cast<std::size_t>(count), Peak{T(0), 0});
    std::vector<char> seen(static_cast<std::size_t>(count), 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const int lab = labels.v[i];
        if (lab == 0) continue;
        auto& pk = peaks[static_cast<std::size_t>(lab - 1)];
        char& s = seen[static_cast<std::size_t>(lab - 1)];
        if (!s || p.v[i] > pk.prob) {
            pk = Peak{p.v[i], i};
            s = 1;
        }
    }
    std::vector<int> order(peaks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return peaks[a].prob > peaks[b].prob; });
    MaskGrid seed(p.h, p.w);
    const int keep = std::min<int>(cfg.max_seeds, count);
    for (int r = 0; r < keep; ++r) seed.v[peaks[static_cast<std::size_t>(order[r])].index] = 1;
    return seed;
}

// q = sigmoid(S_theta(x_hat)); held constant during the logit update.
template <typename T>
Grid<T> surrogate_target(const Params<T>& theta, const Grid<T>& x_hat) {
    return sigmoid_map(segmentor_forward(theta, x_hat));
}

template <typename T>
T energy_with_edge(const Grid<T>& l, const Grid<T>& q, const Grid<T>& e, const TTGPRConfig& cfg) {
    require_same_shape(l, q, "energy");
    require_same_shape(l, e, "energy");
    const Grid<T> p = sigmoid_map(l);
    T mse = T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T d = p.v[i] - q.v[i];
        mse += d * d;
    }
    T total = static_cast<T>(cfg.w_stab) * mse;
    if (cfg.w_tversky != 0.0)
        total += static_cast<T>(cfg.w_tversky) *
                 tversky_loss(p, q, static_cast<T>(cfg.alpha_tversky),
                              static_cast<T>(cfg.beta_tversky), static_cast<T>(cfg.eps));
    if (cfg.w_edge != 0.0)
        total += static_cast<T>(cfg.w_edge) * edge_loss(p, e, static_cast<T>(cfg.eps));
    return total;
}

template <typename T>
T energy(const Grid<T>& l, const Grid<T>& q, const Grid<T>& x, const TTGPRConfig& cfg) {
    require_same_shape(l, x, "energy");
    return energy_with_edge(l, q, edge_map(x), cfg);
}

// dE/dl: per-pixel chain rule through sigmoid; q and e are constants.
template <typename T>
Grid<T> energy_grad_with_edge(const Grid<T>& l, const Grid<T>& q, const Grid<T>& e,
                              const TTGPRConfig& cfg) {
    require_same_shape(l, q, "energy_grad");
    require_same_shape(l, e, "energy_grad");
    const Grid<T> p = sigmoid_map(l);
    Grid<T> g(l.h, l.w);
    if (cfg.w_tversky != 0.0) {
        const Grid<T> tg = tversky_loss_grad(p, q, static_cast<T>(cfg.alpha_tversky),
                                             static_cast<T>(cfg.beta_tversky),
                                             static_cast<T>(cfg.eps));
        for (std::size_t i = 0; i < g.size(); ++i)
            g.v[i] += static_cast<T>(cfg.w_tversky) * tg.v[i];
    }
    if (cfg.w_stab != 0.0)
        for (std::size_t i = 0; i < g.size(); ++i)
            g.v[i] += static_cast<T>(cfg.w_stab) * T(2) * (p.v[i] - q.v[i]);
    if (cfg.w_edge != 0.0) {
        const Grid<T> eg = edge_loss_grad(p, e, static_cast<T>(cfg.eps));
        for (std::size_t i = 0; i < g.size(); ++i)
            g.v[i] += static_cast<T>(cfg.w_edge) * eg.v[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= p.v[i] * (T(1) - p.v[i]);
    return g;
}

template <typename T>
Grid<T> energy_grad(const Grid<T>& l, const Grid<T>& q, const Grid<T>& x, const TTGPRConfig& cfg) {
    require_same_shape(l, x, "energy_grad");
    return energy_grad_with_edge(l, q, edge_map(x), cfg);
}

// High-pass mixing: l + rho*e, elementwise.
template <typename T>
Grid<T> apply_edge_mixing(const Grid<T>& l, const Grid<T>& e, T rho) {
    require_same_shape(l, e, "apply_edge_mixing");
    Grid<T> out(l.h, l.w);
    for (std::size_t i = 0; i < l.size(); ++i) out.v[i] = l.v[i] + rho * e.v[i];
    return out;
}

struct TraceRow {
    double t = 0.0;
    int seed_count = 0;
    double energy_before = 0.0;
    double energy_after = 0.0;
    double logit_delta_norm = 0.0;
};

template <typename T>
struct RefineResult {
    Grid<T> prob;
    std::vector<TraceRow> trace;
};

// The refinement loop. Per iteration: seed from current probabilities, fresh
// noise, projection of the observed patch through the generative prior,
// frozen surrogate target, one analytic gradient step on the logits, then
// edge mixing. An empty seed skips the projection and self-targets (q = p).
template <typename T>
RefineResult<T> refine(const Params<T>& theta, const Params<T>& phi, const Grid<T>& x,
                       const TTGPRConfig& cfg, Rng& rng) {
    validate(cfg);
    const UNet<T> seg_net = UNet<T>::from_params(theta);
    const UNet<T> vel_net = UNet<T>::from_params(phi);
    auto vel = [&](const Grid<T>& m, T t, const MaskGrid& s) {
        return vel_net.forward(phi, velocity_input(m, t, s));
    };

    Grid<T> l = seg_net.forward(theta, x);
    const Grid<T> e = edge_map(x);

    RefineResult<T> out;
    out.trace.reserve(static_cast<std::size_t>(cfg.iterations));
    for (int i = 0; i < cfg.iterations; ++i) {
        const Grid<T> p = sigmoid_map(l);
        const MaskGrid s = extract_seed_from_prob(p, cfg);
        const double t_i = schedule_time(i, cfg.iterations, cfg.t_start, cfg.t_end);
        int seed_count = 0;
        for (const auto b : s.v) seed_count += b;

        Grid<T> q;
        if (seed_count == 0) {
            q = p;
        } else {
            Grid<T> z(x.h, x.w);
            for (auto& zv : z.v) zv = static_cast<T>(rng.normal());
            const Grid<T> x_hat = rf_project_fn(vel, x, s, static_cast<T>(t_i), z, cfg.rf);
            q = sigmoid_map(seg_net.forward(theta, x_hat));
        }

        const double e_before = static_cast<double>(energy_with_edge(l, q, e, cfg));
        const Grid<T> g = energy_grad_with_edge(l, q, e, cfg);
        Grid<T> stepped(l.h, l.w);
        for (std::size_t u = 0; u < l.size(); ++u)
            stepped.v[u] = l.v[u] - static_cast<T>(cfg.eta) * g.v[u];
        const Grid<T> mixed = apply_edge_mixing(stepped, e, static_cast<T>(cfg.rho));

        double dnorm = 0.0;
        for (std::size_t u = 0; u < l.size(); ++u) {
            const double d = static_cast<double>(mixed.v[u]) - static_cast<double>(l.v[u]);
            dnorm += d * d;
        }
        l = mixed;
        out.trace.push_back(TraceRow{t_i, seed_count,
                                     e_before,
                                     static_cast<double>(energy_with_edge(l, q, e, cfg)),
                                     std::sqrt(dnorm)});
    }
    out.prob = sigmoid_map(l);
    return out;
}

} // namespace puncta
