#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "puncta/losses.hpp"
#include "puncta/metrics.hpp"
#include "puncta/nn.hpp"
#include "puncta/rfprior.hpp"
#include "puncta/rng.hpp"
#include "puncta/ttgpr.hpp"

namespace puncta {

namespace detail {

inline bool close_rel(double a, double b, double rel = 1e-4, double abs = 1e-8) {
    const double diff = std::fabs(a - b);
    return diff <= abs || diff <= rel * std::max(std::fabs(a), std::fabs(b));
}

inline Grid<double> random_grid(Rng& rng, int h, int w, double lo, double hi) {
    Grid<double> g(h, w);
    for (auto& v : g.v) v = rng.uniform(lo, hi);
    return g;
}

inline MaskGrid random_mask(Rng& rng, int h, int w, double p) {
    MaskGrid m(h, w);
    for (auto& v : m.v) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

} // namespace detail

// Fast internal verification: RNG known answers, analytic-vs-numeric
// gradients, metric identities, persistence round trip. Returns true when
// every check passes; one line per check on `os`.
inline bool run_selfcheck(std::ostream& os) {
    using detail::close_rel;
    bool all_ok = true;
    auto check = [&](const std::string& name, bool ok) {
        os << (ok ? "ok    " : "FAIL  ") << name << "\n";
        all_ok = all_ok && ok;
    };

    {
        std::uint32_t out[4];
        detail::philox4x32_10(0, 0, 0, 0, 0, 0, out);
        bool ok = out[0] == 0x6627e8d5u && out[1] == 0xe169c58du && out[2] == 0xbc57ac4cu &&
                  out[3] == 0x9b00dbd8u;
        detail::philox4x32_10(0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu,
                              0xffffffffu, out);
        ok = ok && out[0] == 0x408f276du && out[1] == 0x41c83b0eu && out[2] == 0xa20bc7c6u &&
             out[3] == 0x6d5451fdu;
        detail::philox4x32_10(0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u, 0xa4093822u,
                              0x299f31d0u, out);
        ok = ok && out[0] == 0xd16cfe09u && out[1] == 0x94fdccebu && out[2] == 0x5001e420u &&
             out[3] == 0x24126ea1u;
        check("philox4x32-10 known-answer vectors", ok);
    }

    {
        Rng rng(7, make_stream(StreamId::misc, 1));
        const Grid<double> x = detail::random_grid(rng, 6, 6, -1, 1);
        const Grid<double> z = detail::random_grid(rng, 6, 6, -1, 1);
        bool ok = true;
        const Grid<double> at1 = rf_interpolate(x, z, 1.0);
        const Grid<double> at0 = rf_interpolate(x, z, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i)
            ok = ok && at1.v[i] == x.v[i] && at0.v[i] == z.v[i];
        check("interpolation endpoints bit-exact", ok);
    }

    {
        const TTGPRConfig cfg;
        bool ok = schedule_time(0, cfg.iterations, cfg.t_start, cfg.t_end) == cfg.t_start;
        ok = ok &&
             schedule_time(cfg.iterations - 1, cfg.iterations, cfg.t_start, cfg.t_end) == cfg.t_end;
        check("schedule endpoints exact", ok);
    }

    {
        Rng rng(11, make_stream(StreamId::misc, 2));
        bool ok = true;
        for (int trial = 0; trial < 5 && ok; ++trial) {
            const Grid<double> p = detail::random_grid(rng, 8, 8, 0.02, 0.98);
            const MaskGrid y = detail::random_mask(rng, 8, 8, 0.2);
            const Grid<double> gd = dice_loss_grad(p, y, 1e-6);
            const Grid<double> gf = focal_tversky_loss_grad(p, y, 0.3, 0.7, 0.75, 1e-6);
            for (int k = 0; k < 6; ++k) {
                const auto i = static_cast<std::size_t>(rng.uniform_int(0, 63));
                Grid<double> pp = p;
                const double h = 1e-5;
                pp.v[i] = p.v[i] + h;
                const double dplus = dice_loss(pp, y, 1e-6), fplus =
                    focal_tversky_loss(pp, y, 0.3, 0.7, 0.75, 1e-6);
                pp.v[i] = p.v[i] - h;
                const double dminus = dice_loss(pp, y, 1e-6), fminus =
                    focal_tversky_loss(pp, y, 0.3, 0.7, 0.75, 1e-6);
                ok = ok && close_rel(gd.v[i], (dplus - dminus) / (2 * h), 1e-4, 1e-7);
                ok = ok && close_rel(gf.v[i], (fplus - fminus) / (2 * h), 1e-4, 1e-7);
            }
        }
        check("dice + focal-tversky gradients vs finite differences", ok);
    }

    {
        Rng rng(13, make_stream(StreamId::misc, 3));
        bool ok = true;
        for (int trial = 0; trial < 5 && ok; ++trial) {
            const Grid<double> l = detail::random_grid(rng, 8, 8, -2, 2);
            const Grid<double> q = detail::random_grid(rng, 8, 8, 0.01, 0.99);
            const Grid<double> x = detail::random_grid(rng, 8, 8, -1, 1);
            TTGPRConfig cfg;
            const Grid<double> g = energy_grad(l, q, x, cfg);
            for (int k = 0; k < 6; ++k) {
                const auto i = static_cast<std::size_t>(rng.uniform_int(0, 63));
                Grid<double> ll = l;
                const double h = 1e-4;
                ll.v[i] = l.v[i] + h;
                const double eplus = energy(ll, q, x, cfg);
                ll.v[i] = l.v[i] - h;
                const double eminus = energy(ll, q, x, cfg);
                ok = ok && close_rel(g.v[i], (eplus - eminus) / (2 * h), 1e-4, 1e-6);
            }
        }
        check("refinement energy gradient vs finite differences", ok);
    }

    {
        Rng rng(17, make_stream(StreamId::misc, 4));
        const UNet<double> net(1, 4);
        Params<double> params = net.init_params(rng, "segmentor");
        const Grid<double> x = detail::random_grid(rng, 8, 8, -1, 1);
        const MaskGrid y = detail::random_mask(rng, 8, 8, 0.2);
        auto loss_of = [&](const Params<double>& p) {
            const Grid<double> prob = sigmoid_map(net.forward(p, x));
            return dice_loss(prob, y, 1e-6);
        };
        typename UNet<double>::Cache cache;
        const Grid<double> l = net.forward(params, x, &cache);
        const Grid<double> prob = sigmoid_map(l);
        Grid<double> dl = dice_loss_grad(prob, y, 1e-6);
        for (std::size_t i = 0; i < dl.size(); ++i) dl.v[i] *= prob.v[i] * (1.0 - prob.v[i]);
        Params<double> grads = Params<double>::zeros_like(params);
        net.backward(params, cache, dl, grads);
        bool ok = true;
        for (int k = 0; k < 12 && ok; ++k) {
            const auto ti =
                static_cast<std::size_t>(rng.uniform_int(0, (std::int64_t)params.tensors.size() - 1));
            if (params.tensors[ti].size() == 0) continue;
            const auto ci = static_cast<std::size_t>(
                rng.uniform_int(0, (std::int64_t)params.tensors[ti].size() - 1));
            const double orig = params.tensors[ti].v[ci];
            const double h = 1e-3;
            params.tensors[ti].v[ci] = orig + h;
            const double lplus = loss_of(params);
            params.tensors[ti].v[ci] = orig - h;
            const double lminus = loss_of(params);
            params.tensors[ti].v[ci] = orig;
            ok = ok && close_rel(grads.tensors[ti].v[ci], (lplus - lminus) / (2 * h), 1e-4, 1e-8);
        }
        check("network parameter gradients vs finite differences", ok);
    }

    {
        Rng rng(23, make_stream(StreamId::misc, 5));
        bool ok = true;
        for (int trial = 0; trial < 50 && ok; ++trial) {
            ConfusionCounts c;
            c.tp = static_cast<std::uint64_t>(rng.uniform_int(0, 40));
            c.fp = static_cast<std::uint64_t>(rng.uniform_int(0, 40));
            c.fn = static_cast<std::uint64_t>(rng.uniform_int(0, 40));
            c.tn = static_cast<std::uint64_t>(rng.uniform_int(0, 400));
            if (c.tp + c.fn > 0) ok = ok && std::fabs(recall(c) + fnr(c) - 1.0) < 1e-15;
            ok = ok && std::fabs(gmean(c) * gmean(c) - recall(c) * tnr(c)) < 1e-12;
            ok = ok && std::fabs(balanced_accuracy(c) - 0.5 * (recall(c) + tnr(c))) < 1e-15;
            if (c.tp + c.fp > 0 && c.tp + c.fn > 0 && precision(c) + recall(c) > 0) {
                const double f1 = 2 * precision(c) * recall(c) / (precision(c) + recall(c));
                ok = ok && std::fabs(dice(c) - f1) < 1e-12;
            }
        }
        check("metric identities", ok);
    }

    {
        Rng rng(29, make_stream(StreamId::misc, 6));
        const UNet<float> net(1, 4);
        Params<float> p = net.init_params(rng, "segmentor");
        const auto tmp = std::filesystem::temp_directory_path() / "puncta_selfcheck.mcw1";
        save_checkpoint<float>(tmp.string(), {{"segmentor", &p}});
        const auto loaded = load_checkpoint(tmp.string());
        const Params<float> back = params_from_checkpoint<float>(loaded, "segmentor", "segmentor");
        bool ok = params_shapes_match(p, back);
        for (std::size_t ti = 0; ok && ti < p.tensors.size(); ++ti)
            for (std::size_t i = 0; i < p.tensors[ti].size(); ++i)
                ok = ok && p.tensors[ti].v[i] == back.tensors[ti].v[i];
        std::filesystem::remove(tmp);
        check("checkpoint round trip", ok);
    }

    os << (all_ok ? "selfcheck passed\n" : "selfcheck FAILED\n");
    return all_ok;
}

} // namespace puncta
