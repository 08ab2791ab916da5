#include "shelab/busemann.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "shelab/errors.hpp"
#include "shelab/parallel.hpp"
#include "shelab/rng.hpp"
#include "shelab/stats.hpp"

namespace shelab {

namespace {

// Gaussian quantile with upper tail 1e-8.
constexpr double kTiltQuantile = 5.612001244174965;

void check_window(GridSpec const& g, Window const& w)
{
    if (w.t_lo > w.t_hi || w.j_lo > w.j_hi) {
        throw ConfigError("window bounds are inverted");
    }
    if (w.t_lo < 0 || w.t_hi > g.n_t || w.j_lo < 0 || w.j_hi >= g.n_x) {
        throw RangeError("window lies outside the grid");
    }
    if (!w.contains(w.s0, w.x0)) {
        throw ConfigError("window anchor lies outside the window");
    }
}

int depth_index(GridSpec const& g, double depth_r, Window const& w)
{
    int const r_idx = g.time_index(depth_r);
    if ((w.t_lo - r_idx) * g.dt < 1.0 - 1e-9) {
        throw ConfigError("depth must lie at least 1 time unit below the window");
    }
    return r_idx;
}

BusemannEstimate estimate_from(NoiseField const& noise, double lambda, double depth_r,
                               BusemannMethod method, Window const& w, Field const& initial)
{
    std::vector<double> logs(static_cast<std::size_t>(w.height() + 1) * w.width());
    auto record = [&](Field const& f) {
        int const k = f.time_index();
        if (k < w.t_lo) {
            return;
        }
        double* row = logs.data() + static_cast<std::size_t>(k - w.t_lo) * w.width();
        for (int j = w.j_lo; j <= w.j_hi; ++j) {
            double const l = f.log_value(j);
            if (!std::isfinite(l)) {
                throw DomainError("Busemann source does not reach the window");
            }
            row[j - w.j_lo] = l;
        }
    };
    Field top = propagate(noise, initial.time_index(), initial, w.t_hi, record);
    double const anchor =
        logs[static_cast<std::size_t>(w.s0 - w.t_lo) * w.width() + (w.x0 - w.j_lo)];
    for (double& l : logs) {
        l -= anchor;
    }
    top.add_log_offset(-anchor);
    return BusemannEstimate(lambda, depth_r, method, w, std::move(logs), std::move(top));
}

Field tilt_profile(GridSpec const& g, int time_index, double lambda)
{
    std::vector<double> logs(static_cast<std::size_t>(g.n_x));
    for (int j = 0; j < g.n_x; ++j) {
        logs[static_cast<std::size_t>(j)] = lambda * g.x(j);
    }
    return Field::from_log(g, time_index, logs);
}

std::string fmt(double v)
{
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

Window make_window(GridSpec const& grid, double t_lo, double t_hi, double x_lo, double x_hi)
{
    double const ax = (x_lo <= 0.0 && 0.0 <= x_hi) ? 0.0 : x_lo;
    return make_window(grid, t_lo, t_hi, x_lo, x_hi, t_lo, ax);
}

Window make_window(GridSpec const& grid, double t_lo, double t_hi, double x_lo, double x_hi,
                   double anchor_t, double anchor_x)
{
    Window w;
    w.t_lo = grid.time_index(t_lo);
    w.t_hi = grid.time_index(t_hi);
    w.j_lo = grid.nearest_site(x_lo);
    w.j_hi = grid.nearest_site(x_hi);
    w.s0 = grid.time_index(anchor_t);
    w.x0 = grid.nearest_site(anchor_x);
    check_window(grid, w);
    return w;
}

char const* to_string(BusemannMethod method) noexcept
{
    return method == BusemannMethod::point_to_point ? "point_to_point" : "function_to_point";
}

BusemannEstimate::BusemannEstimate(double lambda, double depth_r, BusemannMethod method,
                                   Window window, std::vector<double> log_values, Field top)
    : lambda_(lambda), depth_r_(depth_r), method_(method), window_(window),
      log_values_(std::move(log_values)), top_(std::move(top))
{
    if (log_values_.size() != static_cast<std::size_t>(window_.height() + 1) * window_.width()) {
        throw ConfigError("Busemann values do not match the window");
    }
}

double BusemannEstimate::from_anchor(int t, int y) const
{
    if (!window_.contains(t, y)) {
        throw RangeError("Busemann query outside the estimation window");
    }
    return log_values_[static_cast<std::size_t>(t - window_.t_lo) * window_.width()
                       + (y - window_.j_lo)];
}

double BusemannEstimate::b(int s, int x, int t, int y) const
{
    return from_anchor(t, y) - from_anchor(s, x);
}

Interval point_margin_need(double source_x, double x_lo, double x_hi, double horizon)
{
    double const room = 4.0 * std::sqrt(horizon);
    return {std::min(source_x, x_lo) - room, std::max(source_x, x_hi) + room};
}

Interval tilt_margin_need(double lambda, double x_lo, double x_hi, double horizon)
{
    double const spread = kTiltQuantile * std::sqrt(horizon);
    return {x_lo + lambda * horizon - spread, x_hi + lambda * horizon + spread};
}

void check_point_margin(GridSpec const& g, int source_site, int j_lo, int j_hi, double horizon)
{
    auto const [lo, hi] = point_margin_need(g.x(source_site), g.x(j_lo), g.x(j_hi), horizon);
    if (lo < g.x_min - 1e-9 || hi > g.x_max + 1e-9) {
        throw MarginError("domain [" + fmt(g.x_min) + ", " + fmt(g.x_max) + "] must contain ["
                          + fmt(lo) + ", " + fmt(hi) + "] for a point source at horizon "
                          + fmt(horizon));
    }
}

void check_tilt_margin(GridSpec const& g, double lambda, int j_lo, int j_hi, double horizon)
{
    auto const [lo, hi] = tilt_margin_need(lambda, g.x(j_lo), g.x(j_hi), horizon);
    if (lo < g.x_min - 1e-9 || hi > g.x_max + 1e-9) {
        throw MarginError("domain [" + fmt(g.x_min) + ", " + fmt(g.x_max) + "] must contain ["
                          + fmt(lo) + ", " + fmt(hi) + "] for slope " + fmt(lambda)
                          + " at horizon " + fmt(horizon));
    }
}

BusemannEstimate busemann_p2p(NoiseField const& noise, double lambda, double depth_r,
                              Window const& window)
{
    GridSpec const& g = noise.grid();
    check_window(g, window);
    int const r_idx = depth_index(g, depth_r, window);
    int source = 0;
    try {
        source = g.nearest_site(-lambda * depth_r);
    } catch (RangeError const&) {
        throw MarginError("Busemann source " + fmt(-lambda * depth_r) + " lies outside the domain");
    }
    check_point_margin(g, source, window.j_lo, window.j_hi, (window.t_hi - r_idx) * g.dt);
    return estimate_from(noise, lambda, depth_r, BusemannMethod::point_to_point, window,
                         Field::delta(g, r_idx, source));
}

BusemannEstimate busemann_l2p(NoiseField const& noise, double lambda, double depth_r,
                              Window const& window)
{
    GridSpec const& g = noise.grid();
    check_window(g, window);
    int const r_idx = depth_index(g, depth_r, window);
    check_tilt_margin(g, lambda, window.j_lo, window.j_hi, (window.t_hi - r_idx) * g.dt);
    return estimate_from(noise, lambda, depth_r, BusemannMethod::function_to_point, window,
                         tilt_profile(g, r_idx, lambda));
}

Field busemann_propagate(BusemannEstimate const& b, NoiseField const& noise, int to_t)
{
    if (!(noise.grid() == b.grid())) {
        throw ConfigError("noise grid differs from the estimate's grid");
    }
    if (to_t < b.window().t_hi) {
        throw RangeError("busemann_propagate target lies below the window top");
    }
    return propagate(noise, b.window().t_hi, b.top(), to_t);
}

MonotoneReport check_monotone(std::vector<BusemannEstimate> const& estimates, int x_site,
                              int y_site)
{
    MonotoneReport report;
    for (std::size_t i = 1; i < estimates.size(); ++i) {
        if (!(estimates[i].window() == estimates[0].window())
            || estimates[i].depth_r() != estimates[0].depth_r()) {
            throw ConfigError("monotonicity check needs a common window and depth");
        }
        if (estimates[i].lambda() < estimates[i - 1].lambda()) {
            throw ConfigError("monotonicity check needs estimates ordered by lambda");
        }
    }
    if (!(x_site < y_site)) {
        throw ConfigError("monotonicity check needs x < y");
    }
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        int const s = estimates[i].window().s0;
        double const bi = estimates[i].b(s, x_site, s, y_site);
        for (std::size_t j = i + 1; j < estimates.size(); ++j) {
            double const bj = estimates[j].b(s, x_site, s, y_site);
            ++report.pairs;
            if (bi > bj) {
                ++report.violations;
                report.worst = std::max(report.worst, bi - bj);
            }
        }
    }
    return report;
}

ShapeReport shape_diagnostic(BusemannEstimate const& b, double a0)
{
    Window const& w = b.window();
    GridSpec const& g = b.grid();
    if (w.height() * g.dt < 2.0 - 1e-9) {
        throw ConfigError("shape diagnostic needs a window spanning at least 2 time units");
    }
    ShapeReport report;
    report.lambda = b.lambda();
    report.window = w;
    report.a0_used = a0;
    double const rate = 0.5 * b.lambda() * b.lambda() + a0;
    for (int t = w.t_lo; t <= w.t_hi; ++t) {
        for (int y = w.j_lo; y <= w.j_hi; ++y) {
            double const dev = b.from_anchor(t, y) - rate * (t - w.s0) * g.dt
                               - b.lambda() * (g.x(y) - g.x(w.x0));
            report.points.push_back({t, y, dev});
            report.max_abs_deviation = std::max(report.max_abs_deviation, std::abs(dev));
        }
    }
    return report;
}

NoiseField NoiseEnsemble::replica(int i) const
{
    if (i < 0 || i >= replicas) {
        throw RangeError("replica index outside the ensemble");
    }
    return sample_noise(grid, derive_seed(seed, static_cast<std::uint64_t>(i)));
}

namespace {

void check_lyapunov_horizon(double t_horizon)
{
    if (!(t_horizon >= 10.0)) {
        throw ConfigError("lyapunov horizon must be at least 10");
    }
}

double log_rho_at_origin(GridSpec const& g, double t_horizon)
{
    int const t_idx = g.time_index(g.t0 + t_horizon);
    int const origin = g.nearest_site(0.0);
    return discrete_heat_kernel(g, 0, origin, t_idx).log_value(origin);
}

double lyapunov_sample_given_rho(NoiseField const& noise, double t_horizon, double log_rho)
{
    GridSpec const& g = noise.grid();
    int const t_idx = g.time_index(g.t0 + t_horizon);
    int const origin = g.nearest_site(0.0);
    return (green(noise, 0, origin, t_idx).log_value(origin) - log_rho) / t_horizon;
}

}  // namespace

double lyapunov_sample(NoiseField const& noise, double t_horizon, double log_rho_origin)
{
    check_lyapunov_horizon(t_horizon);
    return lyapunov_sample_given_rho(noise, t_horizon, log_rho_origin);
}

double heat_log_density_at_origin(GridSpec const& grid, double t_horizon)
{
    check_lyapunov_horizon(t_horizon);
    return log_rho_at_origin(grid, t_horizon);
}

double lyapunov_sample(NoiseField const& noise, double t_horizon)
{
    check_lyapunov_horizon(t_horizon);
    return lyapunov_sample_given_rho(noise, t_horizon, log_rho_at_origin(noise.grid(), t_horizon));
}

Estimate lyapunov_estimate(NoiseEnsemble const& ensemble, double t_horizon)
{
    check_lyapunov_horizon(t_horizon);
    // The discrete heat kernel is noise-free, so it is shared by all replicas.
    double const log_rho = log_rho_at_origin(ensemble.grid, t_horizon);
    auto const samples = parallel_map(
        static_cast<std::size_t>(ensemble.replicas), ensemble.workers, [&](std::size_t i) {
            return lyapunov_sample_given_rho(ensemble.replica(static_cast<int>(i)), t_horizon,
                                             log_rho);
        });
    auto const m = stats::moments(samples);
    return {m.mean, m.mean_se};
}

double dual_shape(NoiseField const& noise, double mu, double depth_r)
{
    GridSpec const& g = noise.grid();
    if (!(depth_r < 0.0)) {
        throw ConfigError("dual shape depth must be negative");
    }
    int const r_idx = g.time_index(depth_r);
    int const zero_t = g.time_index(0.0);
    int const origin = g.nearest_site(0.0);
    check_tilt_margin(g, mu, origin, origin, -depth_r);
    Field const z = propagate(noise, r_idx, tilt_profile(g, r_idx, mu), zero_t);
    return z.log_value(origin) / (-depth_r);
}

double exceptional_gap(NoiseField const& noise, double lambda, double eps, double depth_r)
{
    if (!(eps >= 0.0)) {
        throw ConfigError("exceptional gap needs eps >= 0");
    }
    if (eps == 0.0) {
        return 0.0;
    }
    GridSpec const& g = noise.grid();
    Window const w = make_window(g, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    int const one = g.nearest_site(1.0);
    double const up = busemann_l2p(noise, lambda + eps, depth_r, w).from_anchor(w.s0, one);
    double const down = busemann_l2p(noise, lambda - eps, depth_r, w).from_anchor(w.s0, one);
    return up - down;
}

void write_busemann_csv(std::ostream& out, BusemannEstimate const& b, bool header)
{
    GridSpec const& g = b.grid();
    Window const& w = b.window();
    if (header) {
        out << "lambda,depth,s,x,t,y,b_value\n";
    }
    out << std::setprecision(17);
    for (int t = w.t_lo; t <= w.t_hi; ++t) {
        for (int y = w.j_lo; y <= w.j_hi; ++y) {
            out << b.lambda() << ',' << b.depth_r() << ',' << g.time(w.s0) << ',' << g.x(w.x0)
                << ',' << g.time(t) << ',' << g.x(y) << ',' << b.from_anchor(t, y) << '\n';
        }
    }
}

void write_shape_csv(std::ostream& out, ShapeReport const& report)
{
    out << "lambda,t,y,deviation\n" << std::setprecision(17);
    for (auto const& p : report.points) {
        out << report.lambda << ',' << p.t << ',' << p.y << ',' << p.deviation << '\n';
    }
}

void write_shape_json(std::ostream& out, ShapeReport const& report)
{
    nlohmann::ordered_json j;
    j["lambda"] = report.lambda;
    j["a0_used"] = report.a0_used;
    j["max_abs_deviation"] = report.max_abs_deviation;
    j["window"] = {{"t_lo", report.window.t_lo}, {"t_hi", report.window.t_hi},
                   {"j_lo", report.window.j_lo}, {"j_hi", report.window.j_hi},
                   {"s0", report.window.s0},     {"x0", report.window.x0}};
    j["points"] = report.points.size();
    out << j.dump(2) << '\n';
}

}  // namespace shelab
