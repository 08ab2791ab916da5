#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "shelab/errors.hpp"
#include "shelab/oracle.hpp"
#include "shelab/rng.hpp"
#include "shelab/she_core.hpp"
#include "shelab/stats.hpp"

using namespace shelab;

namespace {

NoiseField zero_noise(GridSpec const& g)
{
    return NoiseField(g, 0, std::vector<double>(static_cast<std::size_t>(g.n_t) * g.n_x, 0.0));
}

double rel(double a, double b)
{
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("heat kernel is symmetric, positive and of unit sum")
{
    auto const g = make_grid(0, 1, -5, 5, 0.01, 0.1, 6);
    auto const k = make_heat_kernel(g);
    CHECK(k.radius == 6);
    double total = 0.0;
    for (int m = -k.radius; m <= k.radius; ++m) {
        CHECK(k[m] > 0.0);
        CHECK(k[m] == k[-m]);
        total += k[m];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("heat_step on a delta and on a constant")
{
    auto const g = make_grid(0, 1, -5, 5, 0.01, 0.1, 6);
    auto const k = make_heat_kernel(g);
    int const j0 = 50;
    auto const out = heat_step(Field::delta(g, 0, j0));
    double mass = 0.0;
    for (int j = 0; j < g.n_x; ++j) {
        int const m = j - j0;
        double const expected = std::abs(m) <= k.radius ? k[m] / g.dx : 0.0;
        CHECK(out.value(j) == doctest::Approx(expected).epsilon(1e-14));
        mass += out.value(j) * g.dx;
    }
    CHECK(std::abs(mass - 1.0) <= 1e-14);

    auto const flat = heat_step(Field::from_function(g, 0, [](double) { return 3.0; }));
    for (int j = k.radius; j < g.n_x - k.radius; ++j) {
        CHECK(std::abs(flat.value(j) - 3.0) <= 3e-14);
    }
}

TEST_CASE("two heat steps match the analytic Gaussian of variance 2 dt")
{
    auto const g = make_grid(0, 0.01, -1, 1, 0.0025, 0.05, 6);
    int const j0 = g.nearest_site(0.0);
    auto const two = heat_step(heat_step(Field::delta(g, 0, j0)));
    double const sigma = std::sqrt(2.0 * g.dt);
    double worst = 0.0;
    for (int j = 0; j < g.n_x; ++j) {
        double const y = g.x(j);
        if (std::abs(y) > 4.0 * sigma) {
            continue;  // truncated tails of the two factors
        }
        worst = std::max(worst, rel(two.value(j), gaussian_density(2.0 * g.dt, y)));
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("noise_step uses the mean-one exponential multiplier")
{
    auto const g = make_grid(0, 0.05, -1, 1, 0.01, 0.1, 6);
    auto const w = zero_noise(g);
    auto const f = Field::from_function(g, 0, [](double x) { return 1.0 + x * x; });
    auto const out = noise_step(f, w, 2);
    CHECK(out.time_index() == 3);
    double const factor = std::exp(-g.dt / (2.0 * g.dx));
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(out.value(j) == doctest::Approx(f.value(j) * factor).epsilon(1e-14));
    }
    // E exp(a w - a^2/2) = 1 by quadrature against the Gaussian density
    double const a = std::sqrt(g.dt / g.dx);
    double total = 0.0;
    double const h = 1e-3;
    for (double u = -14.0; u <= 14.0; u += h) {
        total += std::exp(a * u - 0.5 * a * a) * std::exp(-0.5 * u * u) * h;
    }
    CHECK(total / std::sqrt(2.0 * std::numbers::pi) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(noise_step(f, w, g.n_t), RangeError);
}

TEST_CASE("propagate: identity, positivity, and agreement with path enumeration")
{
    auto const g = make_grid(0, 1, -3, 3, 0.01, 0.1, 6);
    auto const w = sample_noise(g, 5);
    auto const f = Field::delta(g, 10, 30);
    auto const same = propagate(w, 10, f, 10);
    CHECK(std::equal(same.values().begin(), same.values().end(), f.values().begin()));

    auto const later = propagate(w, 10, f, 60);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(later.values()[static_cast<std::size_t>(j)] > 0.0);
    }
    CHECK_THROWS_AS(propagate(w, 20, f, 10), RangeError);
    CHECK_THROWS_AS(propagate(w, 0, f, g.n_t + 1), RangeError);

    auto const tiny = make_grid(0, 0.003, -0.2, 0.2, 0.001, 0.1, 6);
    auto const tw = sample_noise(tiny, 99);
    for (int x = 0; x < tiny.n_x; ++x) {
        auto const z = green(tw, 0, x, 3);
        for (int y = 0; y < tiny.n_x; ++y) {
            auto const inst = oracle::from_noise(tw, 0, x, 3, y);
            CHECK(rel(z.value(y), oracle::enumerate_partition(inst)) <= 1e-12);
        }
    }
}

TEST_CASE("superposition and cocycle identities")
{
    auto const g = make_grid(0, 0.5, -4, 4, 0.01, 0.1, 6);
    auto const w = sample_noise(g, 21);
    auto const f = Field::from_function(g, 0, [](double x) { return std::exp(-x * x); });
    auto const h = Field::from_function(g, 0, [](double x) { return x > 1.0 ? 2.0 : 0.0; });
    auto const fh = Field::from_function(
        g, 0, [](double x) { return 0.3 * std::exp(-x * x) + 1.7 * (x > 1.0 ? 2.0 : 0.0); });
    auto const pf = propagate(w, 0, f, 40);
    auto const ph = propagate(w, 0, h, 40);
    auto const pfh = propagate(w, 0, fh, 40);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(rel(pfh.value(j), 0.3 * pf.value(j) + 1.7 * ph.value(j)) <= 1e-12);
    }
    auto const mid = propagate(w, 0, f, 17);
    auto const composed = propagate(w, 17, mid, 40);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(rel(composed.value(j), pf.value(j)) <= 1e-13);
    }
}

TEST_CASE("green: initial delta, mass martingale, total positivity")
{
    auto const g = make_grid(0, 0.5, -4, 4, 0.01, 0.1, 6);
    int const x0 = g.nearest_site(0.0);
    auto const w = sample_noise(g, 1);
    auto const z0 = green(w, 7, x0, 7);
    CHECK(z0.value(x0) == doctest::Approx(1.0 / g.dx));
    CHECK(z0.value(x0 + 1) == 0.0);

    std::vector<double> masses;
    for (int r = 0; r < 2000; ++r) {
        auto const z = green(sample_noise(g, derive_seed(77, r)), 0, x0, 50);
        masses.push_back(std::exp(z.log_mass()));
    }
    auto const m = stats::moments(masses);
    CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.mean_se);

    KeyedStream rng(2024, 0);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        auto const noise = sample_noise(g, derive_seed(5, trial));
        int const s = static_cast<int>(rng.uniform() * 10);
        int const t = s + 20 + static_cast<int>(rng.uniform() * 20);
        int const x1 = 20 + static_cast<int>(rng.uniform() * 20);
        int const x2 = x1 + 1 + static_cast<int>(rng.uniform() * 15);
        int const y1 = 20 + static_cast<int>(rng.uniform() * 20);
        int const y2 = y1 + 1 + static_cast<int>(rng.uniform() * 15);
        auto const za = green(noise, s, x1, t);
        auto const zb = green(noise, s, x2, t);
        // det [Z(t, y_b | s, x_a)] in log form: log Z11 + log Z22 > log Z12 + log Z21
        double const lhs = za.log_value(y1) + zb.log_value(y2);
        double const rhs = za.log_value(y2) + zb.log_value(y1);
        CHECK(lhs > rhs);
        ++checked;
    }
    CHECK(checked == 60);
}

TEST_CASE("comparison principle and integral sandwich per realization")
{
    auto const g = make_grid(0, 0.4, -3, 3, 0.01, 0.1, 6);
    auto const w = sample_noise(g, 8);
    int const s = 0;
    int const t = 40;
    // adjoint fields give w -> Z(t, y | s, w) for fixed y
    auto const at_y1 = propagate_adjoint(w, t, Field::delta(g, t, 25), s);
    auto const at_y2 = propagate_adjoint(w, t, Field::delta(g, t, 37), s);
    for (int v = 10; v < 50; v += 3) {
        for (int u = v + 1; u < 52; u += 4) {
            // Z(t,y2|s,v)/Z(t,y1|s,v) < Z(t,y2|s,u)/Z(t,y1|s,u)
            double const lv = at_y2.log_value(v) - at_y1.log_value(v);
            double const lu = at_y2.log_value(u) - at_y1.log_value(u);
            CHECK(lv < lu + 1e-12);
        }
    }
    // integral sandwich with f(w) = 1 + sin(w)^2 around split point z
    auto const f = [&](int j) { return 1.0 + std::sin(g.x(j)) * std::sin(g.x(j)); };
    for (int z = 15; z < 45; z += 5) {
        double below_2 = 0, below_1 = 0, above_2 = 0, above_1 = 0;
        for (int j = 0; j < g.n_x; ++j) {
            double const a2 = at_y2.values()[static_cast<std::size_t>(j)] * f(j);
            double const a1 = at_y1.values()[static_cast<std::size_t>(j)] * f(j);
            if (j < z) {
                below_2 += a2;
                below_1 += a1;
            } else if (j > z) {
                above_2 += a2;
                above_1 += a1;
            }
        }
        double const mid = std::log(at_y2.values()[static_cast<std::size_t>(z)])
                           - std::log(at_y1.values()[static_cast<std::size_t>(z)]);
        CHECK(std::log(below_2 / below_1) < mid);
        CHECK(mid < std::log(above_2 / above_1));
    }
}

TEST_CASE("renormalized Green's function")
{
    auto const g = make_grid(0, 0.5, -4, 4, 0.01, 0.1, 6);
    int const x0 = g.nearest_site(0.0);
    auto const w = sample_noise(g, 4);
    auto const one = renormalized_green(w, 5, x0, 5);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(one.value(j) == doctest::Approx(1.0));
    }
    auto const later = renormalized_green(w, 0, x0, 50);
    double worst = 0.0;
    for (int j = 0; j < g.n_x; ++j) {
        worst = std::max(worst, std::abs(later.log_value(j)));
    }
    CHECK(worst < 10.0);

    // one step: mean one sitewise
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(g.n_x));
    for (int r = 0; r < 3000; ++r) {
        auto const z = renormalized_green(sample_noise(g, derive_seed(31, r)), 0, x0, 1);
        for (int j = x0 - 6; j <= x0 + 6; ++j) {
            samples[static_cast<std::size_t>(j)].push_back(z.value(j));
        }
    }
    for (int j = x0 - 6; j <= x0 + 6; ++j) {
        auto const m = stats::moments(samples[static_cast<std::size_t>(j)]);
        CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.mean_se);
    }
}

TEST_CASE("Chapman-Kolmogorov residual")
{
    auto const g = make_grid(0, 0.2, -2, 2, 0.01, 0.1, 6);
    REQUIRE(g.n_t == 20);
    REQUIRE(g.n_x == 41);
    auto const w = sample_noise(g, 13);
    CHECK(ck_residual(w, 0, 9, 20, 20, 24) <= 1e-10);
    CHECK(ck_residual(w, 3, 15, 18, 10, 30) <= 1e-10);
    CHECK(ck_residual(w, 2, 3, 17, 20, 20) <= 1e-12);
    CHECK_THROWS_AS(ck_residual(w, 5, 5, 10, 20, 20), RangeError);

    auto const tiny = make_grid(0, 0.004, -0.4, 0.4, 0.001, 0.1, 6);
    auto const tw = sample_noise(tiny, 3);
    CHECK(ck_residual(tw, 0, 2, 4, 4, 2) <= 1e-12);
}

TEST_CASE("hopf_cole heights")
{
    auto const g = make_grid(0, 1, -1, 1, 0.01, 0.1, 6);
    auto const c = Field::from_function(g, 0, [](double) { return 5.0; });
    for (double h : hopf_cole(c)) {
        CHECK(h == doctest::Approx(std::log(5.0)));
    }
    auto const a = Field::from_function(g, 0, [](double x) { return 1.0 + x * x; });
    auto const b = Field::from_function(g, 0, [](double x) { return std::exp(x); });
    auto const ab = Field::from_function(g, 0, [](double x) { return (1.0 + x * x) * std::exp(x); });
    auto const ha = hopf_cole(a);
    auto const hb = hopf_cole(b);
    auto const hab = hopf_cole(ab);
    for (std::size_t j = 0; j < ha.size(); ++j) {
        CHECK(hab[j] == doctest::Approx(ha[j] + hb[j]));
    }
    CHECK_THROWS_AS(hopf_cole(Field::delta(g, 0, 3)), DomainError);
}

TEST_CASE("slope_at_infinity")
{
    auto const g = make_grid(0, 0.5, -40, 40, 0.01, 0.1, 6);
    std::vector<double> lin(static_cast<std::size_t>(g.n_x));
    for (int j = 0; j < g.n_x; ++j) {
        lin[static_cast<std::size_t>(j)] = 0.7 * g.x(j);
    }
    auto const exact = slope_at_infinity(g, lin, Side::right, 0.25);
    CHECK(exact.slope == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(exact.stderr_ < 1e-10);
    CHECK_THROWS_AS(slope_at_infinity(g, lin, Side::left, 0.6), ConfigError);
    auto const small = make_grid(0, 1, 0, 0.8, 0.01, 0.1, 6);
    CHECK_THROWS_AS(slope_at_infinity(small, std::vector<double>(9, 0.0), Side::left, 0.5),
                    DomainError);

    // conservation of the exponential growth rate under the flow; the boundary
    // layer of the truncated domain is cropped before the fit
    auto const w = sample_noise(g, 17);
    auto const f = Field::from_function(g, 0, [](double x) { return std::exp(0.7 * x); });
    auto const h = hopf_cole(propagate(w, 0, f, g.n_t));
    int const crop = 80;
    auto const inner = make_grid(0, 0.5, g.x(crop), g.x(g.n_x - 1 - crop), g.dt, g.dx, 6);
    std::span<double const> const hs(h.data() + crop, static_cast<std::size_t>(inner.n_x));
    auto const right = slope_at_infinity(inner, hs, Side::right, 0.25);
    CHECK(std::abs(right.slope - 0.7) <= 3.0 * right.stderr_);

    auto const bounded = Field::from_function(g, 0, [](double x) { return 2.0 + std::cos(x); });
    auto const hb = hopf_cole(propagate(w, 0, bounded, g.n_t));
    std::span<double const> const hbs(hb.data() + crop, static_cast<std::size_t>(inner.n_x));
    auto const flat = slope_at_infinity(inner, hbs, Side::left, 0.25);
    CHECK(std::abs(flat.slope) <= 3.0 * flat.stderr_);
}

TEST_CASE("field CSV round trip through the profile reader")
{
    auto const g = make_grid(0, 1, -1, 1, 0.01, 0.1, 6);
    auto const f = Field::from_function(g, 0, [](double x) { return 1.0 + x * x; });
    std::ostringstream out;
    write_field_csv(out, f);
    CHECK(out.str().rfind("time,x,value,log_offset\n", 0) == 0);
    auto const path = std::filesystem::temp_directory_path() / "shelab_profile.csv";
    {
        std::ofstream p(path);
        p << "x,value\n";
        for (int j = 0; j < g.n_x; ++j) {
            p << g.x(j) + 0.01 << ',' << f.value(j) << '\n';
        }
    }
    auto const back = read_profile_csv(path, g, 0);
    for (int j = 0; j < g.n_x; ++j) {
        CHECK(back.value(j) == doctest::Approx(f.value(j)));
    }
    std::filesystem::remove(path);
}
