#include <cmath>

#include "doctest.h"
#include "shelab/errors.hpp"
#include "shelab/oracle.hpp"
#include "shelab/rng.hpp"
#include "shelab/she_core.hpp"
#include "shelab/stats.hpp"

using namespace shelab;

namespace {

NoiseField noise_of(oracle::TinyInstance const& inst)
{
    return NoiseField(inst.grid, 0, inst.noise);
}

double rel(double a, double b)
{
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("single step equals kernel weight times multiplier over dx")
{
    auto inst = oracle::random_instance(1);
    inst.grid = make_grid(0, 0.001, -0.4, 0.4, 0.001, 0.1, 6);
    inst.noise.assign(static_cast<std::size_t>(inst.grid.n_x), 0.3);
    inst.s_idx = 0;
    inst.t_idx = 1;
    inst.x_site = 4;
    inst.y_site = 5;
    double const expected =
        oracle::kernel_weight(inst.grid, 1) * oracle::multiplier(inst, 0, 5) / inst.grid.dx;
    CHECK(oracle::enumerate_partition(inst) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("oracle matches the solver on random tiny instances")
{
    int agree = 0;
    for (int i = 0; i < 100; ++i) {
        auto const inst = oracle::random_instance(derive_seed(7, i));
        auto const z = green(noise_of(inst), inst.s_idx, inst.x_site, inst.t_idx);
        double const expected = oracle::enumerate_partition(inst);
        if (expected == 0.0) {
            agree += z.values()[static_cast<std::size_t>(inst.y_site)] == 0.0;
            continue;
        }
        agree += rel(z.value(inst.y_site), expected) <= 1e-12;
    }
    CHECK(agree == 100);
}

TEST_CASE("point-to-line oracle is the sum over endpoints")
{
    auto const inst = oracle::random_instance(12345);
    auto const z = green(noise_of(inst), inst.s_idx, inst.x_site, inst.t_idx);
    CHECK(rel(std::exp(z.log_mass()), oracle::enumerate_point_to_line(inst)) <= 1e-12);
}

TEST_CASE("oracle respects Chapman-Kolmogorov across split windows")
{
    oracle::TinyInstance inst;
    inst.grid = make_grid(0, 0.004, -0.4, 0.4, 0.001, 0.1, 6);
    KeyedStream rng(4, 4);
    inst.noise.resize(static_cast<std::size_t>(inst.grid.n_t) * inst.grid.n_x);
    for (double& w : inst.noise) {
        w = rng.gaussian();
    }
    inst.s_idx = 0;
    inst.t_idx = 4;
    inst.x_site = 3;
    inst.y_site = 6;
    double const full = oracle::enumerate_partition(inst);
    double split = 0.0;
    for (int z = 0; z < inst.grid.n_x; ++z) {
        auto first = inst;
        first.t_idx = 2;
        first.y_site = z;
        auto second = inst;
        second.s_idx = 2;
        second.x_site = z;
        split += oracle::enumerate_partition(first) * oracle::enumerate_partition(second)
                 * inst.grid.dx;
    }
    CHECK(rel(full, split) <= 1e-13);
}

TEST_CASE("instance limits are enforced")
{
    auto inst = oracle::random_instance(3);
    inst.grid = make_grid(0, 0.005, -0.4, 0.4, 0.001, 0.1, 6);
    inst.noise.assign(static_cast<std::size_t>(inst.grid.n_t) * inst.grid.n_x, 0.0);
    inst.s_idx = 0;
    inst.t_idx = 5;
    CHECK_THROWS_AS(oracle::enumerate_partition(inst), ConfigError);
}

TEST_CASE("exact mean field: one step, symmetry, Monte Carlo agreement")
{
    auto const g = make_grid(0, 0.2, -2, 2, 0.01, 0.1, 6);
    int const x0 = g.nearest_site(0.0);
    auto const one = oracle::exact_mean_field(g, 0, x0, 1);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(one[static_cast<std::size_t>(j)] * g.dx
              == doctest::Approx(oracle::kernel_weight(g, j - x0)).epsilon(1e-14));
    }
    auto const many = oracle::exact_mean_field(g, 0, x0, 20);
    for (int d = 1; d <= 15; ++d) {
        CHECK(many[static_cast<std::size_t>(x0 + d)]
              == doctest::Approx(many[static_cast<std::size_t>(x0 - d)]).epsilon(1e-13));
    }
    // the solver's noise-free flow is the same field
    auto const flow = discrete_heat_kernel(g, 0, x0, 20);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(flow.value(j) == doctest::Approx(many[static_cast<std::size_t>(j)]).epsilon(1e-12));
    }

    std::vector<std::vector<double>> samples(static_cast<std::size_t>(g.n_x));
    for (int r = 0; r < 4000; ++r) {
        auto const z = green(sample_noise(g, derive_seed(2, r)), 0, x0, 20);
        for (int j = 0; j < g.n_x; ++j) {
            samples[static_cast<std::size_t>(j)].push_back(z.value(j));
        }
    }
    for (int j = x0 - 10; j <= x0 + 10; ++j) {
        auto const m = stats::moments(samples[static_cast<std::size_t>(j)]);
        CHECK(std::abs(m.mean - many[static_cast<std::size_t>(j)]) <= 3.0 * m.mean_se);
    }
}
