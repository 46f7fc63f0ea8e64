#pragma once

#include <cstdint>
#include <vector>

#include "puncta/config.hpp"
#include "puncta/data.hpp"
#include "puncta/losses.hpp"
#include "puncta/nn.hpp"
#include "puncta/rfprior.hpp"
#include "puncta/rng.hpp"

namespace puncta {

template <typename T>
struct TrainResult {
    Params<T> params;
    Params<T> ema; // empty for the segmentor
    std::vector<double> loss_history;
};

// Per-sample loss for segmentor training: lambda_D * Dice + lambda_T * focal
// Tversky, both against the exact synthetic mask.
template <typename T>
T seg_loss(const Grid<T>& p, const MaskGrid& y, const SegTrainConfig& c) {
    return static_cast<T>(c.lambda_dice) * dice_loss(p, y, static_cast<T>(c.eps)) +
           static_cast<T>(c.lambda_ft) *
               focal_tversky_loss(p, y, static_cast<T>(c.ft_alpha), static_cast<T>(c.ft_beta),
                                  static_cast<T>(c.ft_gamma), static_cast<T>(c.eps));
}

template <typename T>
Grid<T> seg_loss_grad(const Grid<T>& p, const MaskGrid& y, const SegTrainConfig& c) {
    const Grid<T> gd = dice_loss_grad(p, y, static_cast<T>(c.eps));
    const Grid<T> gf = focal_tversky_loss_grad(p, y, static_cast<T>(c.ft_alpha),
                                               static_cast<T>(c.ft_beta),
                                               static_cast<T>(c.ft_gamma), static_cast<T>(c.eps));
    Grid<T> g(p.h, p.w);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] = static_cast<T>(c.lambda_dice) * gd.v[i] + static_cast<T>(c.lambda_ft) * gf.v[i];
    return g;
}

// Gradient accumulation is a fixed-order sequential reduction so repeated
// runs are bit-identical.
template <typename T>
TrainResult<T> train_segmentor(const std::vector<Sample>& data, const SegTrainConfig& cfg,
                               std::uint64_t seed) {
    if (data.empty()) throw validation_error("train_segmentor: empty dataset");
    const UNet<T> net(1, 16);
    Rng init_rng(seed, make_stream(StreamId::seg_init, 0));
    Params<T> params = net.init_params(init_rng, "segmentor");
    OptimizerState<T> opt = OptimizerState<T>::for_params(params, static_cast<T>(cfg.lr),
                                                          static_cast<T>(cfg.weight_decay));
    Rng rng(seed, make_stream(StreamId::seg_train, 0));
    TrainResult<T> res;
    res.loss_history.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        Params<T> grads = Params<T>::zeros_like(params);
        double batch_loss = 0.0;
        const T inv_b = T(1) / static_cast<T>(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& s = data[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))];
            Tensor<T> in(1, s.xs.h, s.xs.w);
            for (std::size_t i = 0; i < s.xs.size(); ++i) in.v[i] = static_cast<T>(s.xs.v[i]);
            typename UNet<T>::Cache cache;
            const Grid<T> l = net.forward(params, in, &cache);
            const Grid<T> p = sigmoid_map(l);
            batch_loss += static_cast<double>(seg_loss(p, s.ys, cfg));
            Grid<T> dl = seg_loss_grad(p, s.ys, cfg);
            for (std::size_t i = 0; i < dl.size(); ++i)
                dl.v[i] *= p.v[i] * (T(1) - p.v[i]) * inv_b;
            net.backward(params, cache, dl, grads);
        }
        res.loss_history.push_back(batch_loss / cfg.batch);
        optimizer_step(opt, params, grads);
    }
    res.params = std::move(params);
    return res;
}

// Flow-matching objective with fresh (z, t) per sample; tracks EMA weights.
template <typename T>
TrainResult<T> train_rf(const std::vector<Sample>& data, const RFTrainConfig& cfg,
                        std::uint64_t seed) {
    if (data.empty()) throw validation_error("train_rf: empty dataset");
    const UNet<T> net(3, 16);
    Rng init_rng(seed, make_stream(StreamId::rf_init, 0));
    Params<T> params = net.init_params(init_rng, "velocity");
    OptimizerState<T> opt = OptimizerState<T>::for_params(params, static_cast<T>(cfg.lr),
                                                          static_cast<T>(cfg.weight_decay));
    EmaParams<T> ema = EmaParams<T>::tracking(params, static_cast<T>(cfg.ema_decay));
    Rng rng(seed, make_stream(StreamId::rf_train, 0));
    TrainResult<T> res;
    res.loss_history.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        Params<T> grads = Params<T>::zeros_like(params);
        double batch_loss = 0.0;
        const T inv_b = T(1) / static_cast<T>(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& s = data[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))];
            const T t = static_cast<T>(rng.uniform());
            Grid<T> z(s.xs.h, s.xs.w);
            for (auto& zv : z.v) zv = static_cast<T>(rng.normal());
            const std::size_t n = z.size();
            // m_t and regression target x - z
            Grid<T> m(z.h, z.w);
            for (std::size_t i = 0; i < n; ++i)
                m.v[i] = t * static_cast<T>(s.xs.v[i]) + (T(1) - t) * z.v[i];
            typename UNet<T>::Cache cache;
            const Tensor<T> in = velocity_input(m, t, s.ss);
            const Grid<T> v = net.forward(params, in, &cache);
            const T inv_n = T(1) / static_cast<T>(n);
            T loss = T(0);
            Grid<T> dl(v.h, v.w);
            for (std::size_t i = 0; i < n; ++i) {
                const T r = v.v[i] - (static_cast<T>(s.xs.v[i]) - z.v[i]);
                loss += r * r * inv_n;
                dl.v[i] = T(2) * r * inv_n * inv_b;
            }
            batch_loss += static_cast<double>(loss);
            net.backward(params, cache, dl, grads);
        }
        res.loss_history.push_back(batch_loss / cfg.batch);
        optimizer_step(opt, params, grads);
        ema_update(ema, params);
    }
    res.params = std::move(params);
    res.ema = std::move(ema.shadow);
    return res;
}

} // namespace puncta
