#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "puncta/rfprior.hpp"
#include "puncta/rng.hpp"

using namespace puncta;

namespace {

Grid<double> random_grid(Rng& rng, int h, int w, double lo = -1.0, double hi = 1.0) {
    Grid<double> g(h, w);
    for (auto& v : g.v) v = rng.uniform(lo, hi);
    return g;
}

bool bit_equal(const Grid<double>& a, const Grid<double>& b) {
    return a.same_shape(b) &&
           std::memcmp(a.v.data(), b.v.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("interpolation endpoints are bit-exact") {
    Rng rng(41, 0);
    const Grid<double> x = random_grid(rng, 6, 6);
    Grid<double> z(6, 6);
    for (auto& v : z.v) v = rng.normal();

    CHECK(bit_equal(rf_interpolate(x, z, 1.0), x));
    CHECK(bit_equal(rf_interpolate(x, z, 0.0), z));

    const Grid<double> mid = rf_interpolate(x, z, 0.3);
    for (std::size_t i = 0; i < mid.size(); ++i)
        CHECK(mid.v[i] == Catch::Approx(0.3 * x.v[i] + 0.7 * z.v[i]).margin(1e-15));

    CHECK_THROWS_AS(rf_interpolate(x, z, -0.01), validation_error);
    CHECK_THROWS_AS(rf_interpolate(x, z, 1.01), validation_error);
}

TEST_CASE("euler integration of a constant field is exact displacement") {
    Rng rng(42, 0);
    const Grid<double> m0 = random_grid(rng, 4, 4);
    MaskGrid s(4, 4);
    const double c = 0.75;
    auto vel = [&](const Grid<double>& m, double, const MaskGrid&) {
        return Grid<double>(m.h, m.w, c);
    };
    // t0=0, 4 steps: dt=0.25 exactly representable, so sum telescopes cleanly
    const Grid<double> m1 = rf_integrate(vel, m0, 0.0, s, 4);
    for (std::size_t i = 0; i < m1.size(); ++i)
        CHECK(m1.v[i] == Catch::Approx(m0.v[i] + c).margin(1e-12));

    CHECK_THROWS_AS(rf_integrate(vel, m0, 0.0, s, 0), validation_error);
}

TEST_CASE("integration evaluates the velocity at left endpoints") {
    const Grid<double> m0(4, 4, 0.0);
    MaskGrid s(4, 4);
    std::vector<double> taus;
    auto vel = [&](const Grid<double>& m, double tau, const MaskGrid&) {
        taus.push_back(tau);
        return Grid<double>(m.h, m.w, 0.0);
    };
    rf_integrate(vel, m0, 0.25, s, 3);
    REQUIRE(taus.size() == 3);
    const double dt = 0.75 / 3.0;
    CHECK(taus[0] == Catch::Approx(0.25).margin(1e-15));
    CHECK(taus[1] == Catch::Approx(0.25 + dt).margin(1e-15));
    CHECK(taus[2] == Catch::Approx(0.25 + 2 * dt).margin(1e-15));
    // never evaluated at tau=1
    for (const double t : taus) CHECK(t < 1.0);
}

TEST_CASE("sampling integrates from pure noise and clips on request") {
    Rng rng(43, 0);
    Grid<double> z(4, 4);
    for (auto& v : z.v) v = rng.normal();
    MaskGrid s(4, 4);
    auto big = [](const Grid<double>& m, double, const MaskGrid&) {
        return Grid<double>(m.h, m.w, 10.0);
    };

    RFConfig cfg;
    cfg.euler_steps = 4;
    const Grid<double> clipped = rf_sample_fn(big, z, s, cfg);
    for (const double v : clipped.v) CHECK(v == 1.0); // z + 10 then clipped

    cfg.clip_output = false;
    const Grid<double> raw = rf_sample_fn(big, z, s, cfg);
    for (std::size_t i = 0; i < raw.size(); ++i)
        CHECK(raw.v[i] == Catch::Approx(z.v[i] + 10.0).margin(1e-12));
}

TEST_CASE("projection at t=1 returns the clipped input without integration") {
    Rng rng(44, 0);
    const Grid<double> x = random_grid(rng, 4, 4); // already inside [-1,1]
    Grid<double> z(4, 4);
    for (auto& v : z.v) v = rng.normal();
    MaskGrid s(4, 4);

    int calls = 0;
    auto vel = [&](const Grid<double>& m, double, const MaskGrid&) {
        ++calls;
        return Grid<double>(m.h, m.w, 0.0);
    };
    RFConfig cfg;
    const Grid<double> out = rf_project_fn(vel, x, s, 1.0, z, cfg);
    CHECK(calls == 0);
    CHECK(bit_equal(out, x));

    // out-of-range input still gets clipped at t=1
    Grid<double> wide(4, 4, 3.0);
    const Grid<double> wclip = rf_project_fn(vel, wide, s, 1.0, z, cfg);
    CHECK(calls == 0);
    for (const double v : wclip.v) CHECK(v == 1.0);
}

TEST_CASE("projection uses ceil(euler_steps*(1-t)) integration steps") {
    const Grid<double> x(8, 8, 0.1);
    const Grid<double> z(8, 8, -0.2);
    MaskGrid s(8, 8);
    RFConfig cfg;
    cfg.euler_steps = 8;

    auto count_calls = [&](double t) {
        int calls = 0;
        auto vel = [&](const Grid<double>& m, double, const MaskGrid&) {
            ++calls;
            return Grid<double>(m.h, m.w, 0.0);
        };
        rf_project_fn(vel, x, s, t, z, cfg);
        return calls;
    };

    CHECK(count_calls(0.0) == 8);   // full trajectory
    CHECK(count_calls(0.3) == 6);   // ceil(5.6)
    CHECK(count_calls(0.5) == 4);   // exact
    CHECK(count_calls(0.9) == 1);   // ceil(0.8)
    CHECK(count_calls(0.999) == 1); // floor of one step always
    CHECK_THROWS_AS(count_calls(-0.1), validation_error);
}

TEST_CASE("projection with the exact straight-line field recovers the target") {
    // If vel(m, tau) == x - z constantly, integrating from m_t recovers x at tau=1:
    // m_t + (1-t)(x-z) = t x + (1-t) z + (1-t)(x-z) = x when steps divide evenly.
    Rng rng(45, 0);
    const Grid<double> x = random_grid(rng, 4, 4, -0.9, 0.9);
    Grid<double> z(4, 4);
    for (auto& v : z.v) v = rng.normal();
    MaskGrid s(4, 4);
    auto vel = [&](const Grid<double>& m, double, const MaskGrid&) {
        Grid<double> v(m.h, m.w);
        for (std::size_t i = 0; i < v.size(); ++i) v.v[i] = x.v[i] - z.v[i];
        return v;
    };
    RFConfig cfg;
    cfg.euler_steps = 8;
    const Grid<double> out = rf_project_fn(vel, x, s, 0.5, z, cfg);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.v[i] == Catch::Approx(x.v[i]).margin(1e-12));
}

TEST_CASE("parameter-facade sampling and projection run on a real network") {
    Rng rng(46, 0);
    const UNet<float> net(3, 4);
    Params<float> phi = net.init_params(rng, "velocity");
    for (auto& v : phi.tensors[12].v) v = static_cast<float>(rng.normal() * 0.1);

    Grid<float> z(8, 8);
    for (auto& v : z.v) v = static_cast<float>(rng.normal());
    MaskGrid s(8, 8);
    s.at(3, 3) = 1;

    RFConfig cfg;
    const Grid<float> sample = rf_sample(phi, z, s, cfg);
    REQUIRE(sample.h == 8);
    for (const float v : sample.v) {
        CHECK(std::isfinite(v));
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }

    Grid<float> x(8, 8, 0.25f);
    const Grid<float> proj = rf_project(phi, x, s, 0.5f, z, cfg);
    REQUIRE(proj.h == 8);
    for (const float v : proj.v) CHECK(std::isfinite(v));
}
