#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "puncta/io.hpp"

using namespace puncta;

namespace {

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("mct1 round trip preserves shape and f32 values") {
    Grid<double> g(3, 4);
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] = 0.125 * static_cast<double>(i) - 1.0;
    const auto p = tmp_path("puncta_test_a.mct1");
    write_mct1(p.string(), g);
    const auto back = read_mct1_grid<double>(p.string());
    REQUIRE(back.h == 3);
    REQUIRE(back.w == 4);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(back.v[i] == static_cast<double>(static_cast<float>(g.v[i])));
    std::filesystem::remove(p);
}

TEST_CASE("mct1 header layout is exact") {
    Grid<float> g(1, 2);
    g.v = {1.0f, -1.0f};
    const auto p = tmp_path("puncta_test_b.mct1");
    write_mct1(p.string(), g);
    const std::string raw = slurp(p);
    REQUIRE(raw.size() == 4 + 4 + 8 + 8);
    CHECK(raw.substr(0, 4) == "MCT1");
    // ndim=2 little-endian
    CHECK(static_cast<unsigned char>(raw[4]) == 2);
    CHECK(static_cast<unsigned char>(raw[5]) == 0);
    // dims 1, 2
    CHECK(static_cast<unsigned char>(raw[8]) == 1);
    CHECK(static_cast<unsigned char>(raw[12]) == 2);
    // 1.0f = 0x3f800000 little-endian
    CHECK(static_cast<unsigned char>(raw[16]) == 0x00);
    CHECK(static_cast<unsigned char>(raw[19]) == 0x3f);
    // -1.0f = 0xbf800000
    CHECK(static_cast<unsigned char>(raw[23]) == 0xbf);
    std::filesystem::remove(p);
}

TEST_CASE("mct1 rejects bad magic and truncation") {
    const auto p = tmp_path("puncta_test_c.mct1");
    {
        std::ofstream os(p, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_AS(read_mct1(p.string()), io_error);
    {
        std::ofstream os(p, std::ios::binary);
        os << "MCT1";
        detail::write_u32le(os, 2);
        detail::write_u32le(os, 4);
        detail::write_u32le(os, 4);
        detail::write_f32le(os, 1.0f); // 15 values missing
    }
    CHECK_THROWS_AS(read_mct1(p.string()), io_error);
    CHECK_THROWS_AS(read_mct1("/nonexistent/nowhere.mct1"), io_error);
    std::filesystem::remove(p);
}

TEST_CASE("pgm mask round trip") {
    MaskGrid m(3, 5);
    m.at(0, 0) = 1;
    m.at(2, 4) = 1;
    m.at(1, 2) = 1;
    const auto p = tmp_path("puncta_test_d.pgm");
    write_pgm_mask(p.string(), m);
    const auto back = read_pgm_mask(p.string());
    REQUIRE(back.h == 3);
    REQUIRE(back.w == 5);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(back.v[i] == m.v[i]);
    const std::string raw = slurp(p);
    CHECK(raw.rfind("P5", 0) == 0);
    std::filesystem::remove(p);
}

TEST_CASE("pgm parser handles comments and 16-bit data") {
    const auto p = tmp_path("puncta_test_e.pgm");
    {
        std::ofstream os(p, std::ios::binary);
        os << "P5 # binary pgm\n# full line comment\n 2 # width\n2\n65535\n";
        // big-endian 16-bit samples: 0, 65535, 32767, 32768
        const unsigned char bytes[] = {0x00, 0x00, 0xff, 0xff, 0x7f, 0xff, 0x80, 0x00};
        os.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    }
    const PgmImage img = read_pgm(p.string());
    REQUIRE(img.w == 2);
    REQUIRE(img.h == 2);
    REQUIRE(img.maxval == 65535);
    CHECK(img.v[0] == 0);
    CHECK(img.v[1] == 65535);
    CHECK(img.v[2] == 32767);
    CHECK(img.v[3] == 32768);
    const MaskGrid m = read_pgm_mask(p.string());
    CHECK(m.v[0] == 0);
    CHECK(m.v[1] == 1);
    CHECK(m.v[2] == 0); // 32767 < (65536)/2
    CHECK(m.v[3] == 1); // 32768 >= midpoint
    const auto patch = read_pgm_patch<double>(p.string());
    CHECK(patch.v[0] == -1.0);
    CHECK(patch.v[1] == 1.0);
    std::filesystem::remove(p);
}

TEST_CASE("pgm rejects malformed headers") {
    const auto p = tmp_path("puncta_test_f.pgm");
    {
        std::ofstream os(p, std::ios::binary);
        os << "P2\n2 2\n255\n0 0 0 0\n"; // ascii variant unsupported
    }
    CHECK_THROWS_AS(read_pgm(p.string()), io_error);
    {
        std::ofstream os(p, std::ios::binary);
        os << "P5\n2 2\n255\n";
        os.put(0); // truncated body
    }
    CHECK_THROWS_AS(read_pgm(p.string()), io_error);
    std::filesystem::remove(p);
}

TEST_CASE("g17 round-trips doubles") {
    for (const double v : {0.09053149415704413, 0.8052230726911125, 128.15533098670937, 1e-300,
                           -0.0, 1.0 / 3.0}) {
        CHECK(std::stod(g17(v)) == v);
    }
}

TEST_CASE("fnv1a64 matches reference values") {
    // standard FNV-1a test vectors
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}
