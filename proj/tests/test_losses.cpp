#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "puncta/losses.hpp"
#include "puncta/rng.hpp"

using namespace puncta;

namespace {

Grid<double> random_prob(Rng& rng, int h, int w) {
    Grid<double> p(h, w);
    // keep away from exact 0/1 so gradients stay informative
    for (auto& v : p.v) v = rng.uniform(0.02, 0.98);
    return p;
}

MaskGrid random_mask(Rng& rng, int h, int w, double density = 0.3) {
    MaskGrid y(h, w);
    for (auto& v : y.v) v = rng.bernoulli(density) ? 1 : 0;
    return y;
}

// central finite difference of a scalar functional of one grid
template <typename F>
Grid<double> fd_grad(const Grid<double>& p, F&& f, double h = 1e-6) {
    Grid<double> g(p.h, p.w);
    Grid<double> q = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        q.v[i] = p.v[i] + h;
        const double up = f(q);
        q.v[i] = p.v[i] - h;
        const double dn = f(q);
        q.v[i] = p.v[i];
        g.v[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

void check_close_grids(const Grid<double>& a, const Grid<double>& b, double tol) {
    REQUIRE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a.v[i]), std::abs(b.v[i]), 1.0});
        CHECK(std::abs(a.v[i] - b.v[i]) <= tol * scale);
    }
}

} // namespace

TEST_CASE("dice loss against direct summation") {
    Rng rng(11, 0);
    const double eps = 1e-6;
    for (int trial = 0; trial < 40; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(3, 12));
        const int w = static_cast<int>(rng.uniform_int(3, 12));
        const Grid<double> p = random_prob(rng, h, w);
        const MaskGrid y = random_mask(rng, h, w);

        double inter = 0, sp = 0, sy = 0;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                inter += p.at(r, c) * y.at(r, c);
                sp += p.at(r, c);
                sy += y.at(r, c);
            }
        const double want = 1.0 - (2.0 * inter + eps) / (sp + sy + eps);
        CHECK(dice_loss(p, y, eps) == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("dice loss hand values") {
    const double eps = 1e-6;
    Grid<double> p(2, 2, 0.5);
    MaskGrid y(2, 2);
    y.at(0, 0) = 1;
    // inter=0.5 sp=2 sy=1
    CHECK(dice_loss(p, y, eps) == Catch::Approx(1.0 - (1.0 + eps) / (3.0 + eps)).margin(1e-15));

    // perfect binary match: loss exactly 0 regardless of eps
    Grid<double> hard(2, 2, 0.0);
    hard.at(0, 0) = 1.0;
    CHECK(dice_loss(hard, y, eps) == Catch::Approx(0.0).margin(1e-15));

    MaskGrid bad(3, 2);
    CHECK_THROWS_AS(dice_loss(p, bad, eps), validation_error);
}

TEST_CASE("dice gradient matches finite differences") {
    Rng rng(12, 0);
    const double eps = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        const Grid<double> p = random_prob(rng, 6, 7);
        const MaskGrid y = random_mask(rng, 6, 7);
        const Grid<double> g = dice_loss_grad(p, y, eps);
        const Grid<double> fd =
            fd_grad(p, [&](const Grid<double>& q) { return dice_loss(q, y, eps); });
        check_close_grids(g, fd, 1e-7);
    }
}

TEST_CASE("tversky statistics and loss against direct summation") {
    Rng rng(13, 0);
    const double eps = 1e-6;
    for (int trial = 0; trial < 40; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(2, 10));
        const int w = static_cast<int>(rng.uniform_int(2, 10));
        const Grid<double> p = random_prob(rng, h, w);
        const Grid<double> q = random_prob(rng, h, w);
        const double alpha = rng.uniform(0.05, 1.0);
        const double beta = rng.uniform(0.05, 3.0);

        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            tp += p.v[i] * q.v[i];
            fp += p.v[i] * (1.0 - q.v[i]);
            fn += (1.0 - p.v[i]) * q.v[i];
        }
        const auto s = tversky_stats(p, q);
        CHECK(s.tp == Catch::Approx(tp).margin(1e-12));
        CHECK(s.fp == Catch::Approx(fp).margin(1e-12));
        CHECK(s.fn == Catch::Approx(fn).margin(1e-12));

        const double want = 1.0 - (tp + eps) / (tp + alpha * fp + beta * fn + eps);
        CHECK(tversky_loss(p, q, alpha, beta, eps) == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("tversky hand case") {
    Grid<double> p(1, 2);
    p.v = {0.8, 0.3};
    Grid<double> q(1, 2);
    q.v = {1.0, 0.0};
    const auto s = tversky_stats(p, q);
    CHECK(s.tp == Catch::Approx(0.8).margin(1e-15));
    CHECK(s.fp == Catch::Approx(0.3).margin(1e-15));
    CHECK(s.fn == Catch::Approx(0.2).margin(1e-15));
    // alpha=0.3 beta=0.7: den = 0.8 + 0.09 + 0.14 = 1.03
    CHECK(tversky_loss(p, q, 0.3, 0.7, 0.0) ==
          Catch::Approx(1.0 - 0.8 / 1.03).margin(1e-15));
}

TEST_CASE("tversky gradient matches finite differences") {
    Rng rng(14, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const Grid<double> p = random_prob(rng, 5, 5);
        const Grid<double> q = random_prob(rng, 5, 5);
        const double alpha = 0.3, beta = 2.61, eps = 1e-6;
        const Grid<double> g = tversky_loss_grad(p, q, alpha, beta, eps);
        const Grid<double> fd = fd_grad(
            p, [&](const Grid<double>& x) { return tversky_loss(x, q, alpha, beta, eps); });
        check_close_grids(g, fd, 1e-7);
    }
}

TEST_CASE("focal tversky reduces to powered tversky") {
    Rng rng(15, 0);
    const double alpha = 0.3, beta = 0.7, gamma = 0.75, eps = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Grid<double> p = random_prob(rng, 6, 6);
        const MaskGrid y = random_mask(rng, 6, 6);

        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double yi = y.v[i];
            tp += p.v[i] * yi;
            fp += p.v[i] * (1.0 - yi);
            fn += (1.0 - p.v[i]) * yi;
        }
        const double ti = (tp + eps) / (tp + alpha * fp + beta * fn + eps);
        CHECK(focal_tversky_loss(p, y, alpha, beta, gamma, eps) ==
              Catch::Approx(std::pow(1.0 - ti, gamma)).margin(1e-12));
    }
}

TEST_CASE("focal tversky hand value") {
    // p=[1,0], y=[1,1]: TP=1 FP=0 FN=1, den=1+0.7=1.7, so (1 - 1/1.7)^0.75.
    Grid<double> p(1, 2);
    p.v = {1.0, 0.0};
    MaskGrid y(1, 2);
    y.v = {1, 1};
    const double want = std::pow(1.0 - 1.0 / 1.7, 0.75);
    CHECK(focal_tversky_loss(p, y, 0.3, 0.7, 0.75, 0.0) ==
          Catch::Approx(want).margin(1e-15));
    CHECK(want == Catch::Approx(0.5140280740466725).margin(1e-13));

    // gamma = 1 collapses to the plain Tversky loss
    Rng rng(19, 0);
    const Grid<double> pp = random_prob(rng, 4, 4);
    const MaskGrid yy = random_mask(rng, 4, 4);
    CHECK(focal_tversky_loss(pp, yy, 0.3, 0.7, 1.0, 1e-6) ==
          Catch::Approx(tversky_loss(pp, grid_cast<double>(yy), 0.3, 0.7, 1e-6))
              .margin(1e-15));
}

TEST_CASE("focal tversky gradient matches finite differences") {
    Rng rng(16, 0);
    const double alpha = 0.3, beta = 0.7, gamma = 0.75, eps = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        const Grid<double> p = random_prob(rng, 6, 5);
        MaskGrid y = random_mask(rng, 6, 5);
        y.at(0, 0) = 1; // keep the loss away from its singular perfect-match point
        const Grid<double> g = focal_tversky_loss_grad(p, y, alpha, beta, gamma, eps);
        const Grid<double> fd = fd_grad(
            p, [&](const Grid<double>& x) {
                return focal_tversky_loss(x, y, alpha, beta, gamma, eps);
            });
        check_close_grids(g, fd, 1e-6);
    }
}

TEST_CASE("flow matching loss with stub velocities") {
    Rng rng(17, 0);
    Grid<double> xs(4, 4);
    Grid<double> z(4, 4);
    for (auto& v : xs.v) v = rng.uniform(-1.0, 1.0);
    for (auto& v : z.v) v = rng.normal();
    MaskGrid ss(4, 4);
    ss.at(1, 2) = 1;

    // exact straight-line velocity -> zero loss
    auto exact = [&](const Grid<double>& m, double t, const MaskGrid&) {
        (void)m;
        (void)t;
        Grid<double> v(4, 4);
        for (std::size_t i = 0; i < v.size(); ++i) v.v[i] = xs.v[i] - z.v[i];
        return v;
    };
    CHECK(flow_matching_loss_fn(exact, xs, ss, z, 0.37) == Catch::Approx(0.0).margin(1e-15));

    // constant velocity -> mean squared residual, summed independently
    const double c = 0.25;
    auto constant = [&](const Grid<double>&, double, const MaskGrid&) {
        return Grid<double>(4, 4, c);
    };
    double acc = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = c - (xs.v[i] - z.v[i]);
        acc += d * d;
    }
    CHECK(flow_matching_loss_fn(constant, xs, ss, z, 0.8) ==
          Catch::Approx(acc / 16.0).margin(1e-12));

    // the velocity sees m_t = t*x + (1-t)*z, not x
    auto probe = [&](const Grid<double>& m, double t, const MaskGrid&) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double want = t * xs.v[i] + (1.0 - t) * z.v[i];
            if (std::abs(m.v[i] - want) > 1e-12) throw std::runtime_error("bad m_t");
        }
        return Grid<double>(4, 4, 0.0);
    };
    CHECK_NOTHROW(flow_matching_loss_fn(probe, xs, ss, z, 0.6));

    CHECK_THROWS_AS(flow_matching_loss_fn(constant, xs, ss, z, -0.1), validation_error);
    CHECK_THROWS_AS(flow_matching_loss_fn(constant, xs, ss, z, 1.1), validation_error);
}

TEST_CASE("edge loss values and gradient") {
    Rng rng(18, 0);
    const double eps = 1e-6;

    // all mass on edges -> 0; no edges -> just below 1
    Grid<double> p(3, 3, 0.5);
    Grid<double> ones(3, 3, 1.0);
    Grid<double> zeros(3, 3, 0.0);
    CHECK(edge_loss(p, ones, eps) == Catch::Approx(0.0).margin(1e-15));
    CHECK(edge_loss(p, zeros, eps) == Catch::Approx(4.5 / (4.5 + eps)).margin(1e-15));

    for (int trial = 0; trial < 20; ++trial) {
        const Grid<double> pp = random_prob(rng, 5, 6);
        Grid<double> e(5, 6);
        for (auto& v : e.v) v = rng.uniform(0.0, 1.0);

        double num = 0, den = 0;
        for (std::size_t i = 0; i < pp.size(); ++i) {
            num += pp.v[i] * (1.0 - e.v[i]);
            den += pp.v[i];
        }
        CHECK(edge_loss(pp, e, eps) == Catch::Approx(num / (den + eps)).margin(1e-12));

        const Grid<double> g = edge_loss_grad(pp, e, eps);
        const Grid<double> fd =
            fd_grad(pp, [&](const Grid<double>& q) { return edge_loss(q, e, eps); });
        check_close_grids(g, fd, 1e-7);
    }
}
