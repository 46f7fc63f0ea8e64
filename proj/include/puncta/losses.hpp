#pragma once

#include <cmath>

#include "puncta/grid.hpp"

namespace puncta {

// Soft Dice complement: 1 - (2*sum(p*y)+eps)/(sum(p)+sum(y)+eps).
template <typename T>
T dice_loss(const Grid<T>& p, const MaskGrid& y, T eps) {
    if (p.h != y.h || p.w != y.w) throw validation_error("dice_loss: shape mismatch");
    T inter = T(0), sp = T(0), sy = T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T yi = T(y.v[i]);
        inter += p.v[i] * yi;
        sp += p.v[i];
        sy += yi;
    }
    return T(1) - (T(2) * inter + eps) / (sp + sy + eps);
}

template <typename T>
Grid<T> dice_loss_grad(const Grid<T>& p, const MaskGrid& y, T eps) {
    if (p.h != y.h || p.w != y.w) throw validation_error("dice_loss_grad: shape mismatch");
    T inter = T(0), sp = T(0), sy = T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T yi = T(y.v[i]);
        inter += p.v[i] * yi;
        sp += p.v[i];
        sy += yi;
    }
    const T num = T(2) * inter + eps;
    const T den = sp + sy + eps;
    Grid<T> g(p.h, p.w);
    for (std::size_t i = 0; i < p.size(); ++i)
        g.v[i] = -(T(2) * T(y.v[i]) * den - num) / (den * den);
    return g;
}

template <typename T>
struct TverskyStats {
    T tp, fp, fn;
};

// Soft statistics between a prediction p and a (possibly soft) target q:
// TP = sum(p*q), FP = sum(p*(1-q)), FN = sum((1-p)*q).
template <typename T>
TverskyStats<T> tversky_stats(const Grid<T>& p, const Grid<T>& q) {
    require_same_shape(p, q, "tversky_stats");
    TverskyStats<T> s{T(0), T(0), T(0)};
    for (std::size_t i = 0; i < p.size(); ++i) {
        s.tp += p.v[i] * q.v[i];
        s.fp += p.v[i] * (T(1) - q.v[i]);
        s.fn += (T(1) - p.v[i]) * q.v[i];
    }
    return s;
}

// 1 - (TP+eps)/(TP + alpha*FP + beta*FN + eps).
template <typename T>
T tversky_loss(const Grid<T>& p, const Grid<T>& q, T alpha, T beta, T eps) {
    const auto s = tversky_stats(p, q);
    const T den = s.tp + alpha * s.fp + beta * s.fn + eps;
    return T(1) - (s.tp + eps) / den;
}

template <typename T>
Grid<T> tversky_loss_grad(const Grid<T>& p, const Grid<T>& q, T alpha, T beta, T eps) {
    const auto s = tversky_stats(p, q);
    const T num = s.tp + eps;
    const T den = s.tp + alpha * s.fp + beta * s.fn + eps;
    Grid<T> g(p.h, p.w);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T qi = q.v[i];
        const T dnum = qi;
        const T dden = qi + alpha * (T(1) - qi) - beta * qi;
        g.v[i] = -(dnum * den - num * dden) / (den * den);
    }
    return g;
}

// Focal-Tversky: (1 - TI)^gamma with a binary target. FP is weighted by
// alpha, FN by beta.
template <typename T>
T focal_tversky_loss(const Grid<T>& p, const MaskGrid& y, T alpha, T beta, T gamma, T eps) {
    if (p.h != y.h || p.w != y.w) throw validation_error("focal_tversky_loss: shape mismatch");
    return std::pow(tversky_loss(p, grid_cast<T>(y), alpha, beta, eps), gamma);
}

template <typename T>
Grid<T> focal_tversky_loss_grad(const Grid<T>& p, const MaskGrid& y, T alpha, T beta, T gamma,
                                T eps) {
    if (p.h != y.h || p.w != y.w)
        throw validation_error("focal_tversky_loss_grad: shape mismatch");
    const Grid<T> q = grid_cast<T>(y);
    const T base = tversky_loss(p, q, alpha, beta, eps);
    // gamma < 1 makes the derivative singular at a perfect match; floor the base.
    const T outer = gamma * std::pow(std::max(base, T(1e-12)), gamma - T(1));
    Grid<T> g = tversky_loss_grad(p, q, alpha, beta, eps);
    for (auto& val : g.v) val *= outer;
    return g;
}

// Flow-matching regression: mean over pixels of
// (vel(t*x_s + (1-t)*z, t; s) - (x_s - z))^2.
template <typename T, typename VelFn>
T flow_matching_loss_fn(VelFn&& vel, const Grid<T>& xs, const MaskGrid& ss, const Grid<T>& z,
                        T t) {
    require_same_shape(xs, z, "flow_matching_loss");
    if (t < T(0) || t > T(1)) throw validation_error("flow_matching_loss: t outside [0,1]");
    Grid<T> mt(xs.h, xs.w);
    for (std::size_t i = 0; i < xs.size(); ++i) mt.v[i] = t * xs.v[i] + (T(1) - t) * z.v[i];
    const Grid<T> v = vel(mt, t, ss);
    require_same_shape(xs, v, "flow_matching_loss velocity output");
    T acc = T(0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const T d = v.v[i] - (xs.v[i] - z.v[i]);
        acc += d * d;
    }
    return acc / T(xs.size());
}

// Fraction of predicted mass lying in edge-free regions:
// sum(p*(1-e)) / (sum(p)+eps).
template <typename T>
T edge_loss(const Grid<T>& p, const Grid<T>& e, T eps) {
    require_same_shape(p, e, "edge_loss");
    T num = T(0), den = T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        num += p.v[i] * (T(1) - e.v[i]);
        den += p.v[i];
    }
    return num / (den + eps);
}

template <typename T>
Grid<T> edge_loss_grad(const Grid<T>& p, const Grid<T>& e, T eps) {
    require_same_shape(p, e, "edge_loss_grad");
    T num = T(0), den = T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        num += p.v[i] * (T(1) - e.v[i]);
        den += p.v[i];
    }
    const T d = den + eps;
    Grid<T> g(p.h, p.w);
    for (std::size_t i = 0; i < p.size(); ++i)
        g.v[i] = ((T(1) - e.v[i]) * d - num) / (d * d);
    return g;
}

} // namespace puncta
