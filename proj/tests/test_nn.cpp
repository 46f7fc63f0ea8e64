#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "puncta/nn.hpp"
#include "puncta/rng.hpp"

using namespace puncta;

namespace {

// scalar readout L = sum(weights .* logits); linear, so FD is well conditioned
double readout(const UNet<double>& net, const Params<double>& p, const Tensor<double>& x,
               const Grid<double>& weights) {
    const Grid<double> l = net.forward(p, x);
    double acc = 0;
    for (std::size_t i = 0; i < l.size(); ++i) acc += weights.v[i] * l.v[i];
    return acc;
}

Params<double> net_with_live_head(const UNet<double>& net, Rng& rng) {
    Params<double> p = net.init_params(rng, "test");
    // the head starts at zero by design; wake it up so gradients flow deep
    for (auto& v : p.tensors[12].v) v = rng.normal() * 0.5;
    for (auto& v : p.tensors[13].v) v = 0.1;
    return p;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::string temp_path(const std::string& tag) {
    return (std::filesystem::temp_directory_path() / ("puncta_nn_" + tag + ".mcw1")).string();
}

} // namespace

TEST_CASE("network parameter gradients match finite differences") {
    Rng rng(31, 0);
    for (int in_ch : {1, 3}) {
        const UNet<double> net(in_ch, 4);
        Params<double> p = net_with_live_head(net, rng);

        Tensor<double> x(in_ch, 8, 8);
        for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
        Grid<double> weights(8, 8);
        for (auto& v : weights.v) v = rng.uniform(-1.0, 1.0);

        typename UNet<double>::Cache cache;
        net.forward(p, x, &cache);
        Params<double> grads = Params<double>::zeros_like(p);
        net.backward(p, cache, weights, grads);

        const double h = 1e-5;
        for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
            auto& t = p.tensors[ti];
            const int probes = std::min<int>(4, static_cast<int>(t.v.size()));
            for (int k = 0; k < probes; ++k) {
                const auto idx = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(t.v.size()) - 1));
                const double save = t.v[idx];
                t.v[idx] = save + h;
                const double up = readout(net, p, x, weights);
                t.v[idx] = save - h;
                const double dn = readout(net, p, x, weights);
                t.v[idx] = save;
                const double fd = (up - dn) / (2 * h);
                const double an = grads.tensors[ti].v[idx];
                const double scale = std::max({std::abs(fd), std::abs(an), 1e-4});
                INFO(t.name << "[" << idx << "] fd=" << fd << " an=" << an);
                CHECK(std::abs(fd - an) <= 1e-6 * scale);
            }
        }
    }
}

TEST_CASE("network input gradients match finite differences") {
    Rng rng(32, 0);
    const UNet<double> net(1, 4);
    Params<double> p = net_with_live_head(net, rng);

    Tensor<double> x(1, 8, 8);
    for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
    Grid<double> weights(8, 8);
    for (auto& v : weights.v) v = rng.uniform(-1.0, 1.0);

    typename UNet<double>::Cache cache;
    net.forward(p, x, &cache);
    Params<double> grads = Params<double>::zeros_like(p);
    Tensor<double> dx;
    net.backward(p, cache, weights, grads, &dx);
    REQUIRE(dx.v.size() == x.v.size());

    const double h = 1e-5;
    for (int k = 0; k < 12; ++k) {
        const auto idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(x.v.size()) - 1));
        const double save = x.v[idx];
        x.v[idx] = save + h;
        const double up = readout(net, p, x, weights);
        x.v[idx] = save - h;
        const double dn = readout(net, p, x, weights);
        x.v[idx] = save;
        const double fd = (up - dn) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(dx.v[idx]), 1e-4});
        CHECK(std::abs(fd - dx.v[idx]) <= 1e-6 * scale);
    }
}

TEST_CASE("velocity input packs image, seed and time channels") {
    Grid<double> m(4, 4);
    for (std::size_t i = 0; i < m.size(); ++i) m.v[i] = 0.1 * static_cast<double>(i);
    MaskGrid s(4, 4);
    s.at(2, 1) = 1;
    const double t = 0.37;
    const Tensor<double> in = velocity_input(m, t, s);
    REQUIRE(in.c == 3);
    REQUIRE(in.h == 4);
    REQUIRE(in.w == 4);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(in.ch(0)[i] == m.v[i]);
        CHECK(in.ch(1)[i] == static_cast<double>(s.v[i]));
        CHECK(in.ch(2)[i] == t);
    }
    CHECK_THROWS_AS(velocity_forward(Params<double>{}, m, 1.5, s), validation_error);
}

TEST_CASE("initialization yields zero logits through the zero head") {
    Rng rng(33, 0);
    const UNet<float> net(1, 4);
    const Params<float> p = net.init_params(rng, "segmentor");
    REQUIRE(p.tensors.size() == 14);
    CHECK(p.tensors[0].name == "enc0.w");
    CHECK(p.tensors[12].name == "head.w");
    CHECK(p.role == "segmentor");

    Grid<float> x(8, 8);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Grid<float> l = net.forward(p, x);
    for (const float v : l.v) CHECK(v == 0.0f);

    const UNet<float> re = UNet<float>::from_params(p);
    CHECK(re.in_channels() == 1);
    CHECK(re.width() == 4);
}

TEST_CASE("network shape validation") {
    Rng rng(34, 0);
    const UNet<double> net(1, 4);
    Params<double> p = net.init_params(rng, "t");

    Tensor<double> bad_h(1, 6, 8);
    CHECK_THROWS_AS(net.forward(p, bad_h), validation_error);
    Tensor<double> bad_c(2, 8, 8);
    CHECK_THROWS_AS(net.forward(p, bad_c), validation_error);

    Params<double> renamed = p;
    renamed.tensors[4].name = "bogus.w";
    Tensor<double> ok(1, 8, 8);
    CHECK_THROWS_AS(net.forward(renamed, ok), validation_error);
    CHECK_THROWS_AS(UNet<double>::from_params(renamed), validation_error);

    CHECK_THROWS_AS(UNet<double>(0, 4), validation_error);
}

TEST_CASE("optimizer matches a per-coordinate oracle") {
    Params<double> p;
    p.role = "t";
    p.tensors.push_back({"w", {2}, {0.5, -0.25}});
    OptimizerState<double> opt = OptimizerState<double>::for_params(p, 1e-2, 1e-2);

    // fixed gradient sequence, oracle tracked side by side
    const std::vector<std::vector<double>> gs = {{0.3, -0.1}, {-0.2, 0.4}, {0.05, 0.0}};
    double pw[2] = {0.5, -0.25};
    double m[2] = {0, 0}, v[2] = {0, 0};
    int step = 0;
    for (const auto& gv : gs) {
        Params<double> g;
        g.role = "t";
        g.tensors.push_back({"w", {2}, gv});
        optimizer_step(opt, p, g);

        ++step;
        const double bc1 = 1.0 - std::pow(0.9, double(step));
        const double bc2 = 1.0 - std::pow(0.999, double(step));
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * gv[i];
            v[i] = 0.999 * v[i] + 0.001 * gv[i] * gv[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            pw[i] -= 1e-2 * (mhat / (std::sqrt(vhat) + 1e-8) + 1e-2 * pw[i]);
            CHECK(p.tensors[0].v[static_cast<std::size_t>(i)] ==
                  Catch::Approx(pw[i]).margin(1e-15));
        }
    }
    CHECK(opt.step == 3);
}

TEST_CASE("optimizer rejects bad gradients and zero learning rate is inert") {
    Params<double> p;
    p.tensors.push_back({"w", {1}, {1.0}});
    OptimizerState<double> opt = OptimizerState<double>::for_params(p, 0.0, 0.1);

    Params<double> g;
    g.tensors.push_back({"w", {1}, {0.7}});
    optimizer_step(opt, p, g);
    CHECK(p.tensors[0].v[0] == 1.0); // lr=0 freezes even with weight decay

    Params<double> bad;
    bad.tensors.push_back({"w", {1}, {std::nan("")}});
    CHECK_THROWS_AS(optimizer_step(opt, p, bad), validation_error);

    Params<double> wrong;
    wrong.tensors.push_back({"w", {2}, {0.0, 0.0}});
    CHECK_THROWS_AS(optimizer_step(opt, p, wrong), validation_error);
}

TEST_CASE("ema shadow follows the exponential recursion") {
    Params<double> p;
    p.tensors.push_back({"w", {2}, {1.0, -1.0}});
    EmaParams<double> ema = EmaParams<double>::tracking(p, 0.9);
    CHECK(ema.shadow.role == "_ema");

    double s[2] = {1.0, -1.0};
    for (int k = 0; k < 5; ++k) {
        p.tensors[0].v[0] = 1.0 + 0.1 * k;
        p.tensors[0].v[1] = -1.0 - 0.2 * k;
        ema_update(ema, p);
        for (int i = 0; i < 2; ++i) {
            s[i] = 0.9 * s[i] + 0.1 * p.tensors[0].v[static_cast<std::size_t>(i)];
            CHECK(ema.shadow.tensors[0].v[static_cast<std::size_t>(i)] ==
                  Catch::Approx(s[i]).margin(1e-15));
        }
    }
}

TEST_CASE("checkpoint round trip is byte-identical") {
    Rng rng(35, 0);
    const UNet<float> seg_net(1, 4);
    const UNet<float> vel_net(3, 4);
    const Params<float> seg = seg_net.init_params(rng, "segmentor");
    Params<float> vel = vel_net.init_params(rng, "velocity");
    for (auto& v : vel.tensors[12].v) v = static_cast<float>(rng.normal());

    const std::string path_a = temp_path("rt_a");
    const std::string path_b = temp_path("rt_b");
    save_checkpoint<float>(path_a, {{"segmentor", &seg}, {"velocity", &vel}});

    const auto entries = load_checkpoint(path_a);
    REQUIRE(entries.size() == 28);
    CHECK(entries[0].name == "segmentor.enc0.w");

    const Params<float> seg2 = params_from_checkpoint<float>(entries, "segmentor", "segmentor");
    const Params<float> vel2 = params_from_checkpoint<float>(entries, "velocity", "velocity");
    REQUIRE(params_shapes_match(seg, seg2));
    for (std::size_t ti = 0; ti < seg.tensors.size(); ++ti)
        for (std::size_t i = 0; i < seg.tensors[ti].v.size(); ++i)
            CHECK(seg.tensors[ti].v[i] == seg2.tensors[ti].v[i]);

    save_checkpoint<float>(path_b, {{"segmentor", &seg2}, {"velocity", &vel2}});
    CHECK(slurp(path_a) == slurp(path_b));

    CHECK_THROWS_AS(params_from_checkpoint<float>(entries, "missing", "r"), validation_error);
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}

TEST_CASE("checkpoint loader rejects malformed files") {
    const std::string path = temp_path("bad");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE" << std::string(16, '\0');
    }
    CHECK_THROWS_AS(load_checkpoint(path), io_error);
    CHECK_THROWS_AS(load_checkpoint(path + ".does_not_exist"), io_error);
    std::filesystem::remove(path);
}
