#include <cmath>
#include <sstream>

#include "doctest.h"
#include "shelab/busemann.hpp"
#include "shelab/errors.hpp"
#include "shelab/rng.hpp"
#include "shelab/stats.hpp"

using namespace shelab;

namespace {

GridSpec test_grid()
{
    return make_grid(-20, 2, -40, 40, 0.01, 0.1, 6);
}

double rel(double a, double b)
{
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("point-to-point estimate: antisymmetry and additivity")
{
    auto const g = test_grid();
    auto const w = sample_noise(g, 3);
    auto const win = make_window(g, 0.0, 0.5, -2.0, 2.0);
    auto const b = busemann_p2p(w, 0.5, -10.0, win);
    CHECK(b.method() == BusemannMethod::point_to_point);
    CHECK(b.from_anchor(win.s0, win.x0) == 0.0);
    KeyedStream rng(1, 2);
    auto pick_t = [&] { return win.t_lo + static_cast<int>(rng.uniform() * (win.height() + 1)); };
    auto pick_x = [&] { return win.j_lo + static_cast<int>(rng.uniform() * win.width()); };
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        int const r = pick_t(), x = pick_x(), s = pick_t(), y = pick_x(), t = pick_t(), z = pick_x();
        CHECK(b.b(s, y, s, y) == 0.0);
        CHECK(b.b(r, x, s, y) == -b.b(s, y, r, x));
        worst = std::max(worst, std::abs(b.b(r, x, s, y) + b.b(s, y, t, z) - b.b(r, x, t, z)));
    }
    CHECK(worst <= 1e-10);
    CHECK_THROWS_AS(b.from_anchor(win.t_hi + 1, win.x0), RangeError);
}

TEST_CASE("preconditions: depth gap, source inside domain, margins")
{
    auto const g = test_grid();
    auto const w = sample_noise(g, 3);
    auto const win = make_window(g, 0.0, 0.0, 0.0, 1.0);
    CHECK_THROWS_AS(busemann_p2p(w, 0.0, -0.5, win), ConfigError);
    CHECK_THROWS_AS(busemann_p2p(w, 3.0, -20.0, win), MarginError);  // source at 60
    CHECK_THROWS_AS(busemann_p2p(w, 1.5, -20.0, win), MarginError);  // no room beyond 30
    CHECK_THROWS_AS(busemann_l2p(w, 1.0, -20.0, win), MarginError);
    CHECK_NOTHROW(busemann_l2p(w, 0.5, -20.0, win));
}

TEST_CASE("busemann_propagate reproduces the direct estimate")
{
    auto const g = test_grid();
    auto const w = sample_noise(g, 11);
    auto const short_win = make_window(g, 0.0, 0.5, -1.0, 1.0);
    auto const long_win = make_window(g, 0.0, 1.0, -1.0, 1.0);
    for (auto method : {BusemannMethod::point_to_point, BusemannMethod::function_to_point}) {
        auto est = [&](Window const& win) {
            return method == BusemannMethod::point_to_point ? busemann_p2p(w, 0.3, -10.0, win)
                                                            : busemann_l2p(w, 0.3, -10.0, win);
        };
        auto const b = est(short_win);
        auto const direct = est(long_win);
        auto const one = busemann_propagate(b, w, short_win.t_hi + 1);
        auto const fifty = busemann_propagate(b, w, long_win.t_hi);
        double worst_one = 0.0;
        double worst_fifty = 0.0;
        for (int y = long_win.j_lo; y <= long_win.j_hi; ++y) {
            worst_one = std::max(worst_one, rel(one.log_value(y),
                                                direct.from_anchor(short_win.t_hi + 1, y)));
            worst_fifty = std::max(worst_fifty, std::abs(std::exp(fifty.log_value(y)
                                                                  - direct.from_anchor(long_win.t_hi, y))
                                                         - 1.0));
        }
        CHECK(worst_one <= 1e-12);
        CHECK(worst_fifty <= 1e-10);
    }
    CHECK_THROWS_AS(busemann_propagate(busemann_p2p(w, 0.3, -10.0, short_win), w, 10), RangeError);
}

TEST_CASE("function-to-point estimates: zero slope mean and agreement with point-to-point")
{
    auto const g = test_grid();
    auto const win = make_window(g, 0.0, 0.0, 0.0, 1.0);
    int const one = g.nearest_site(1.0);
    std::vector<double> flat;
    std::vector<double> gap_shallow;
    std::vector<double> gap_deep;
    for (int r = 0; r < 40; ++r) {
        auto const w = sample_noise(g, derive_seed(100, r));
        flat.push_back(busemann_l2p(w, 0.0, -10.0, win).from_anchor(win.s0, one));
        for (double depth : {-2.0, -20.0}) {
            double const gap = std::abs(busemann_l2p(w, 0.5, depth, win).from_anchor(win.s0, one)
                                        - busemann_p2p(w, 0.5, depth, win).from_anchor(win.s0, one));
            (depth == -2.0 ? gap_shallow : gap_deep).push_back(gap);
        }
    }
    auto const m = stats::moments(flat);
    CHECK(std::abs(m.mean) <= 3.0 * m.mean_se);
    CHECK(stats::mean(gap_deep) < stats::mean(gap_shallow));
}

TEST_CASE("monotonicity in lambda")
{
    auto const g = test_grid();
    auto const win = make_window(g, 0.0, 0.0, 0.0, 1.0);
    int const x = win.j_lo;
    int const y = win.j_hi;
    auto const w = sample_noise(g, 5);
    std::vector<BusemannEstimate> same{busemann_p2p(w, 0.2, -10.0, win),
                                       busemann_p2p(w, 0.2, -10.0, win)};
    CHECK(check_monotone(same, x, y).violations == 0);
    std::vector<BusemannEstimate> ladder;
    for (double lambda : {-1.0, 0.0, 1.0}) {
        ladder.push_back(busemann_p2p(w, lambda, -10.0, win));
    }
    auto const rep = check_monotone(ladder, x, y);
    CHECK(rep.pairs == 3);
    CHECK(rep.violations == 0);
    std::vector<BusemannEstimate> unordered{ladder[2], ladder[0]};
    CHECK_THROWS_AS(check_monotone(unordered, x, y), ConfigError);
    std::vector<BusemannEstimate> mixed{ladder[0], busemann_p2p(w, 0.0, -12.0, win)};
    CHECK_THROWS_AS(check_monotone(mixed, x, y), ConfigError);
}

TEST_CASE("shape diagnostic")
{
    auto const g = test_grid();
    auto const w = sample_noise(g, 9);
    auto const short_win = make_window(g, 0.0, 1.0, 0.0, 0.0);
    CHECK_THROWS_AS(shape_diagnostic(busemann_l2p(w, 0.0, -5.0, short_win), -0.05), ConfigError);
    auto const win = make_window(g, 0.0, 2.0, -1.0, 1.0);
    auto const b = busemann_l2p(w, 0.5, -5.0, win);
    auto const rep = shape_diagnostic(b, -0.05);
    CHECK(rep.points.size() == static_cast<std::size_t>((win.height() + 1) * win.width()));
    double worst = 0.0;
    for (auto const& p : rep.points) {
        double const expected = b.from_anchor(p.t, p.y) - (0.125 - 0.05) * (p.t - win.s0) * g.dt
                                - 0.5 * (g.x(p.y) - g.x(win.x0));
        CHECK(p.deviation == doctest::Approx(expected).epsilon(1e-14));
        worst = std::max(worst, std::abs(p.deviation));
    }
    CHECK(rep.max_abs_deviation == worst);
    std::ostringstream csv;
    std::ostringstream json;
    write_shape_csv(csv, rep);
    write_shape_json(json, rep);
    CHECK(csv.str().rfind("lambda,t,y,deviation\n", 0) == 0);
    CHECK(json.str().find("\"a0_used\"") != std::string::npos);
}

TEST_CASE("lyapunov estimate is negative")
{
    NoiseEnsemble ens{make_grid(0, 10, -25, 25, 0.01, 0.1, 6), 42, 8, 1};
    auto const a0 = lyapunov_estimate(ens, 10.0);
    CHECK(a0.value < 0.0);
    CHECK(a0.stderr_ > 0.0);
    CHECK_THROWS_AS(lyapunov_sample(ens.replica(0), 5.0), ConfigError);
    CHECK_THROWS_AS(ens.replica(8), RangeError);
}

TEST_CASE("dual shape: reflection and the shear offset")
{
    auto const g = make_grid(-10, 0, -50, 50, 0.01, 0.1, 6);
    auto const w = sample_noise(g, 77);
    auto const mirrored = reflect_noise(w, Axis::space);
    for (double mu : {0.5, 1.0}) {
        CHECK(rel(dual_shape(mirrored, mu, -10.0), dual_shape(w, -mu, -10.0)) <= 1e-12);
    }
    std::vector<double> diffs;
    for (int r = 0; r < 20; ++r) {
        auto const noise = sample_noise(g, derive_seed(8, r));
        diffs.push_back(dual_shape(noise, 1.0, -10.0) - dual_shape(noise, 0.0, -10.0));
    }
    CHECK(std::abs(stats::mean(diffs) - 0.5) <= 0.05);
    CHECK_THROWS_AS(dual_shape(w, 5.0, -10.0), MarginError);
}

TEST_CASE("exceptional gap")
{
    auto const g = test_grid();
    auto const w = sample_noise(g, 1);
    CHECK(exceptional_gap(w, 0.3, 0.0, -10.0) == 0.0);
    CHECK_THROWS_AS(exceptional_gap(w, 0.3, -0.1, -10.0), ConfigError);
    std::vector<double> gaps;
    for (int r = 0; r < 40; ++r) {
        gaps.push_back(exceptional_gap(sample_noise(g, derive_seed(55, r)), 0.0, 0.1, -10.0));
    }
    auto const m = stats::moments(gaps);
    CHECK(std::abs(m.mean - 0.2) <= 3.0 * m.mean_se);
}

TEST_CASE("CSV export")
{
    auto const g = test_grid();
    auto const w = sample_noise(g, 1);
    auto const win = make_window(g, 0.0, 0.0, 0.0, 0.2);
    std::ostringstream out;
    write_busemann_csv(out, busemann_p2p(w, 0.0, -5.0, win));
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "lambda,depth,s,x,t,y,b_value");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == 3);
}
