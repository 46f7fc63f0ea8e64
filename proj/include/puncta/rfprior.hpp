#pragma once

#include <cmath>

#include "puncta/errors.hpp"
#include "puncta/grid.hpp"
#include "puncta/nn.hpp"

namespace puncta {

struct RFConfig {
    int euler_steps = 8;
    bool clip_output = true;
};

// m_t = t*x + (1-t)*z. Branches keep the endpoints bit-exact.
template <typename T>
Grid<T> rf_interpolate(const Grid<T>& x, const Grid<T>& z, T t) {
    require_same_shape(x, z, "rf_interpolate");
    if (t < T(0) || t > T(1)) throw validation_error("rf_interpolate: t outside [0,1]");
    if (t == T(0)) return z;
    if (t == T(1)) return x;
    Grid<T> m(x.h, x.w);
    for (std::size_t i = 0; i < m.size(); ++i) m.v[i] = t * x.v[i] + (T(1) - t) * z.v[i];
    return m;
}

// Forward Euler on dm/dtau = G(m, tau; s) from tau=t0 to tau=1 in `steps`
// equal steps, velocity evaluated at the left endpoint of each step.
template <typename T, typename VelFn>
Grid<T> rf_integrate(VelFn&& vel, Grid<T> m, T t0, const MaskGrid& s, int steps) {
    if (steps < 1) throw validation_error("rf_integrate: steps must be >= 1");
    const T dt = (T(1) - t0) / T(steps);
    for (int j = 0; j < steps; ++j) {
        const T tau = t0 + T(j) * dt;
        const Grid<T> v = vel(m, tau, s);
        require_same_shape(m, v, "rf_integrate");
        for (std::size_t i = 0; i < m.size(); ++i) m.v[i] += dt * v.v[i];
    }
    return m;
}

template <typename T, typename VelFn>
Grid<T> rf_sample_fn(VelFn&& vel, const Grid<T>& z, const MaskGrid& s, const RFConfig& cfg) {
    if (z.h != s.h || z.w != s.w) throw validation_error("rf_sample: shape mismatch");
    Grid<T> m = rf_integrate(vel, z, T(0), s, cfg.euler_steps);
    if (cfg.clip_output)
        for (auto& x : m.v) x = clip_unit(x);
    return m;
}

// Projection onto the learned manifold: re-noise x to time t against z,
// then integrate the remaining ceil(euler_steps*(1-t)) steps (at least one).
// t=1 is a fixed point up to range clipping.
template <typename T, typename VelFn>
Grid<T> rf_project_fn(VelFn&& vel, const Grid<T>& x, const MaskGrid& s, T t, const Grid<T>& z,
                      const RFConfig& cfg) {
    if (x.h != s.h || x.w != s.w) throw validation_error("rf_project: shape mismatch");
    if (t < T(0) || t > T(1)) throw validation_error("rf_project: t outside [0,1]");
    if (cfg.euler_steps < 1) throw validation_error("rf_project: euler_steps must be >= 1");
    Grid<T> m;
    if (t == T(1)) {
        m = x;
    } else {
        m = rf_interpolate(x, z, t);
        int steps = static_cast<int>(std::ceil(T(cfg.euler_steps) * (T(1) - t)));
        if (steps < 1) steps = 1;
        m = rf_integrate(vel, std::move(m), t, s, steps);
    }
    if (cfg.clip_output)
        for (auto& v : m.v) v = clip_unit(v);
    return m;
}

template <typename T>
Grid<T> rf_sample(const Params<T>& phi, const Grid<T>& z, const MaskGrid& s, const RFConfig& cfg) {
    const UNet<T> net = UNet<T>::from_params(phi);
    return rf_sample_fn(
        [&](const Grid<T>& m, T t, const MaskGrid& seed) {
            return net.forward(phi, velocity_input(m, t, seed));
        },
        z, s, cfg);
}

template <typename T>
Grid<T> rf_project(const Params<T>& phi, const Grid<T>& x, const MaskGrid& s, T t,
                   const Grid<T>& z, const RFConfig& cfg) {
    const UNet<T> net = UNet<T>::from_params(phi);
    return rf_project_fn(
        [&](const Grid<T>& m, T tt, const MaskGrid& seed) {
            return net.forward(phi, velocity_input(m, tt, seed));
        },
        x, s, t, z, cfg);
}

} // namespace puncta
