#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "shelab/errors.hpp"
#include "shelab/grid_noise.hpp"
#include "shelab/she_core.hpp"
#include "shelab/stats.hpp"

using namespace shelab;

namespace {

double max_rel_gap(Field const& a, Field const& b, int lo, int hi, int shift = 0)
{
    double worst = 0.0;
    for (int j = lo; j <= hi; ++j) {
        double const va = a.value(j);
        double const vb = b.value(j + shift);
        double const scale = std::max(std::abs(va), std::abs(vb));
        if (scale > 0.0) {
            worst = std::max(worst, std::abs(va - vb) / scale);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("make_grid computes counts and rejects bad extents")
{
    auto const g = make_grid(0, 1, -5, 5, 0.01, 0.1, 6);
    CHECK(g.n_t == 100);
    CHECK(g.n_x == 101);
    CHECK(g.x(50) == doctest::Approx(0.0));
    CHECK_THROWS_AS(make_grid(0, 1, -5, 5, 0.013, 0.1, 6), ConfigError);
    CHECK_THROWS_AS(make_grid(0, 0.01, 0, 0.1, 0.01, 0.1, 6), ConfigError);
    CHECK_THROWS_AS(make_grid(1, 0, -5, 5, 0.01, 0.1, 6), ConfigError);
    CHECK_THROWS_AS(make_grid(0, 1, -5, 5, 0.01, 0.1, 2), ConfigError);
}

TEST_CASE("nearest_site rounds half to even")
{
    auto const g = make_grid(0, 1, 0, 1, 0.01, 0.1, 6);
    CHECK(g.nearest_site(0.25) == 2);
    CHECK(g.nearest_site(0.35) == 4);
    CHECK(g.nearest_site(0.31) == 3);
    CHECK_THROWS_AS(g.nearest_site(2.0), RangeError);
}

TEST_CASE("sample_noise is deterministic and cell addressable")
{
    auto const g = make_grid(0, 1, -5, 5, 0.01, 0.1, 6);
    auto const a = sample_noise(g, 42);
    auto const b = sample_noise(g, 42);
    auto const c = sample_noise(g, 43);
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
    CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
    for (int n : {0, 17, 99}) {
        for (int j : {0, 1, 50, 100}) {
            CHECK(a(n, j) == cell_value(42, n, j));
        }
    }
}

TEST_CASE("noise cells look standard Gaussian")
{
    auto const g = make_grid(0, 1, -5, 5, 0.01, 0.1, 6);
    auto const w = sample_noise(g, 7);
    double const n = static_cast<double>(g.n_t) * g.n_x;
    auto const m = stats::moments(w.values());
    CHECK(std::abs(m.mean) <= 4.0 / std::sqrt(n));
    CHECK(std::abs(m.variance - 1.0) <= 4.0 * std::sqrt(2.0 / n));
    // neighbouring cells sharing a Philox block are uncorrelated
    std::vector<double> prod;
    for (int r = 0; r < g.n_t; ++r) {
        for (int j = 0; j + 1 < g.n_x; j += 2) {
            prod.push_back(w(r, j) * w(r, j + 1));
        }
    }
    CHECK(std::abs(stats::mean(prod)) <= 4.0 / std::sqrt(static_cast<double>(prod.size())));
}

TEST_CASE("shift and reflection act as a group on indices")
{
    auto const g = make_grid(0, 0.2, -1, 1, 0.01, 0.1, 6);
    auto const w = sample_noise(g, 3);
    auto const same = shift_noise(w, 0, 0);
    CHECK(std::equal(w.values().begin(), w.values().end(), same.values().begin()));

    auto const s = shift_noise(w, 3, -4);
    CHECK(s(0, 10) == w(3, 6));
    CHECK(s(15, 2) == cell_value(3, 18, -2));
    auto const back = shift_noise(s, -3, 4);
    CHECK(std::equal(w.values().begin(), w.values().end(), back.values().begin()));

    auto const two = shift_noise(shift_noise(w, 1, 2), 5, -7);
    auto const direct = shift_noise(w, 6, -5);
    CHECK(std::equal(two.values().begin(), two.values().end(), direct.values().begin()));

    CHECK_THROWS_AS(shift_noise(w, 1, 0, ShiftMode::strict), RangeError);

    for (Axis axis : {Axis::time, Axis::space}) {
        auto const r = reflect_noise(w, axis);
        auto const rr = reflect_noise(r, axis);
        CHECK(std::equal(w.values().begin(), w.values().end(), rr.values().begin()));
    }
    auto const rs = reflect_noise(w, Axis::space);
    CHECK(rs(4, 0) == w(4, g.n_x - 1));
    auto const rt = reflect_noise(w, Axis::time);
    CHECK(rt(0, 5) == w(g.n_t - 1, 5));
}

TEST_CASE("noise file round trip is bit exact with the fixed layout")
{
    auto const g = make_grid(-1, 0, -2, 2, 0.05, 0.1, 6);
    auto const w = sample_noise(g, 0xfeedbeefULL);
    auto const path = std::filesystem::temp_directory_path() / "shelab_noise_roundtrip.bin";
    write_noise(w, path);
    CHECK(std::filesystem::file_size(path) == 54 + 8ull * g.n_t * g.n_x);
    {
        std::ifstream in(path, std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        CHECK(std::string(magic, 4) == "SHL1");
    }
    auto const r = read_noise(path);
    CHECK(r.seed() == w.seed());
    CHECK(r.grid().n_t == g.n_t);
    CHECK(r.grid().n_x == g.n_x);
    CHECK(r.grid().t0 == g.t0);
    CHECK(std::equal(w.values().begin(), w.values().end(), r.values().begin()));
    CHECK_FALSE(r.keyed());
    CHECK_THROWS_AS(shift_noise(r, 1, 0), RangeError);
    // reflection of an unkeyed field still works by copying
    auto const rr = reflect_noise(reflect_noise(r, Axis::space), Axis::space);
    CHECK(std::equal(r.values().begin(), r.values().end(), rr.values().begin()));
    std::filesystem::remove(path);
}

TEST_CASE("Green's function is shift covariant on the grid")
{
    // R = 1 so supports stay clear of the absorbing boundary
    auto const g = make_grid(0, 0.002, -1, 1, 0.0001, 0.1, 6);
    REQUIRE(make_heat_kernel(g).radius == 1);
    auto const w = sample_noise(g, 11);
    int const kt = 3;
    int const kx = 2;
    auto const shifted = shift_noise(w, kt, kx);
    auto const lhs = green(shifted, 2, 8, 9);
    auto const rhs = green(w, 2 + kt, 8 + kx, 9 + kt);
    CHECK(max_rel_gap(lhs, rhs, 0, g.n_x - 1 - kx, kx) <= 1e-12);
}

TEST_CASE("spatial reflection covariance and time reflection duality")
{
    auto const g = make_grid(0, 0.02, -1, 1, 0.001, 0.1, 6);
    auto const w = sample_noise(g, 12);
    int const last = g.n_x - 1;

    auto const rs = reflect_noise(w, Axis::space);
    auto const a = green(rs, 3, 5, 17);
    auto const b = green(w, 3, last - 5, 17);
    double worst = 0.0;
    for (int y = 0; y <= last; ++y) {
        worst = std::max(worst, std::abs(a.value(y) - b.value(last - y)) / b.value(last - y));
    }
    CHECK(worst <= 1e-12);

    // heat-smoothed forward Green's function on time-reflected noise equals the
    // adjoint (backward) propagation on the original noise
    auto const rt = reflect_noise(w, Axis::time);
    int const s = 4;
    int const t = 15;
    int const x = 9;
    auto const lhs = heat_step(green(rt, s, x, t));
    auto const start = heat_step(Field::delta(g, g.n_t - s, x)).with_time_index(g.n_t - s);
    auto const rhs = propagate_adjoint(w, g.n_t - s, start, g.n_t - t);
    CHECK(max_rel_gap(lhs, rhs, 0, last) <= 1e-12);
}

TEST_CASE("coarsened noise is block-aggregated standard Gaussian noise")
{
    auto const fine = make_grid(0.0, 4.0, -5.0, 5.0, 0.0025, 0.05);
    auto const coarse = make_grid(0.0, 4.0, -5.0, 4.9, 0.01, 0.1);
    auto const w = sample_noise(fine, 99);
    auto const c = coarsen_noise(w, coarse);
    CHECK_FALSE(c.keyed());
    double s = 0.0;
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 2; ++b) {
            s += w(4 * 3 + a, 2 * 7 + b);
        }
    }
    CHECK(c(3, 7) == doctest::Approx(s / std::sqrt(8.0)).epsilon(1e-14));
    auto const m = stats::moments(c.values());
    CHECK(std::abs(m.mean) < 4.0 * std::sqrt(1.0 / c.values().size()));
    CHECK(m.variance == doctest::Approx(1.0).epsilon(0.02));

    CHECK_THROWS_AS(coarsen_noise(w, make_grid(0.0, 4.0, -5.0, 5.0, 0.008, 0.1)), ConfigError);
    CHECK_THROWS_AS(coarsen_noise(w, make_grid(0.0, 4.0, -5.0, 5.1, 0.01, 0.1)), ConfigError);
}
