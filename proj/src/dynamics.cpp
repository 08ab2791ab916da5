#include "shelab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "shelab/errors.hpp"
#include "shelab/parallel.hpp"
#include "shelab/rng.hpp"
#include "shelab/stats.hpp"

namespace shelab {

namespace {

// Stream family for Brownian initial data; disjoint from the noise generator's seeds.
constexpr std::uint64_t kBrownianSalt = 0x42524f574e49414eULL;

constexpr double kClassifySlack = 0.05;

int origin_site(GridSpec const& g)
{
    return g.nearest_site(0.0);
}

}  // namespace

NormalizedProfile::NormalizedProfile(GridSpec const& grid, std::vector<double> values)
    : grid_(grid), origin_(origin_site(grid)), values_(std::move(values))
{
    if (values_.size() != static_cast<std::size_t>(grid_.n_x)) {
        throw ConfigError("profile size does not match the grid");
    }
    for (double v : values_) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DomainError("normalized profiles must be strictly positive and finite");
        }
    }
    if (values_[static_cast<std::size_t>(origin_)] != 1.0) {
        throw DomainError("normalized profile must equal 1 at the origin");
    }
}

Field NormalizedProfile::to_field(int time_index) const
{
    return Field(grid_, time_index, values_);
}

NormalizedProfile normalize(Field const& field)
{
    GridSpec const& g = field.grid();
    int const o = origin_site(g);
    auto const v = field.values();
    double const at = v[static_cast<std::size_t>(o)];
    if (!(at > 0.0)) {
        throw DomainError("cannot normalize a profile that vanishes at the origin");
    }
    std::vector<double> out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        out[j] = v[j] / at;
    }
    out[static_cast<std::size_t>(o)] = 1.0;
    return NormalizedProfile(g, std::move(out));
}

NormalizedProfile normalized_from_function(GridSpec const& grid,
                                           std::function<double(double)> const& f)
{
    return normalize(Field::from_function(grid, 0, f));
}

double cicm_metric(NormalizedProfile const& f, NormalizedProfile const& g, int m_max)
{
    GridSpec const& grid = f.grid();
    if (!(grid == g.grid())) {
        throw ConfigError("metric needs profiles on the same grid");
    }
    if (m_max < 1) {
        throw ConfigError("metric truncation must be at least 1");
    }
    if (grid.x_min > -m_max + 1e-9 || grid.x_max < m_max - 1e-9) {
        throw DomainError("grid is narrower than the metric's largest window");
    }
    double total = 0.0;
    for (int m = 1; m <= m_max; ++m) {
        double sup = 0.0;
        std::vector<double> terms(static_cast<std::size_t>(grid.n_x));
        for (int j = 0; j < grid.n_x; ++j) {
            double const x = grid.x(j);
            double const a = f[j];
            double const b = g[j];
            if (std::abs(x) <= m + 1e-9) {
                sup = std::max(sup, std::abs(a - b) + std::abs(1.0 / a - 1.0 / b));
            }
            terms[static_cast<std::size_t>(j)] = std::exp(-x * x / m) * (a - b) * grid.dx;
        }
        double const weight = std::ldexp(1.0, -m);
        total += weight * std::min(1.0, sup);
        total += weight * std::min(1.0, std::abs(stats::pairwise_sum(terms)));
    }
    return total;
}

char const* to_string(SlopeKind kind) noexcept
{
    switch (kind) {
    case SlopeKind::in_f:
        return "InF";
    case SlopeKind::exceptional:
        return "Exceptional";
    default:
        return "Unclassified";
    }
}

SlopeClass classify_F_lambda(NormalizedProfile const& g, double fraction)
{
    GridSpec const& grid = g.grid();
    if (std::floor(fraction * grid.n_x) < 40) {
        throw ConfigError("slope classification needs at least 40 sites per side");
    }
    std::vector<double> h(static_cast<std::size_t>(grid.n_x));
    for (int j = 0; j < grid.n_x; ++j) {
        h[static_cast<std::size_t>(j)] = std::log(g[j]);
    }
    auto const right = slope_at_infinity(grid, h, Side::right, fraction);
    auto const left = slope_at_infinity(grid, h, Side::left, fraction);
    double const tp = 3.0 * right.stderr_ + kClassifySlack;
    double const tm = 3.0 * left.stderr_ + kClassifySlack;
    double const lp = right.slope;
    double const lm = left.slope;

    SlopeClass c;
    c.lambda_right = lp;
    c.lambda_left = lm;
    c.tolerance = std::max(tp, tm);
    if (lp > tp && std::abs(lp + lm) <= tp + tm) {
        c.kind = SlopeKind::exceptional;
    } else if (lp - std::max(0.0, -lm) > tp) {
        c.kind = SlopeKind::in_f;
        c.lambda = lp;
    } else if (std::min(0.0, -lp) - lm > tm) {
        c.kind = SlopeKind::in_f;
        c.lambda = lm;
    } else if (lp <= tp && lm >= -tm) {
        c.kind = SlopeKind::in_f;
        c.lambda = 0.0;
    }
    return c;
}

PullbackResult pullback_run(NoiseField const& noise, NormalizedProfile const& g, double lambda,
                            std::vector<double> const& depths, int m_max)
{
    GridSpec const& grid = noise.grid();
    if (!(grid == g.grid())) {
        throw ConfigError("profile and noise grids differ");
    }
    auto const cls = classify_F_lambda(g);
    if (cls.kind == SlopeKind::exceptional) {
        throw ConfigError("profile lies in the exceptional class; use pullback_trajectory");
    }
    if (cls.kind != SlopeKind::in_f || std::abs(cls.lambda - lambda) > cls.tolerance) {
        throw ConfigError("profile is not classified in the basin of the requested slope");
    }
    if (depths.empty()) {
        throw ConfigError("pullback needs at least one depth");
    }
    int const zero_t = grid.time_index(0.0);
    double const reference_depth = grid.t0;
    for (double d : depths) {
        if (!(d < 0.0) || !(d > reference_depth)) {
            throw ConfigError("pullback depths must lie strictly between the grid start and 0");
        }
    }
    // profiles are compared on the metric's windows and Gaussian weights out to
    // e^{-40}; the solution must be accurate there
    double const reach = std::sqrt(40.0 * m_max);
    int const j_lo = grid.nearest_site(std::max(grid.x_min, -reach));
    int const j_hi = grid.nearest_site(std::min(grid.x_max, reach));

    Window const w{zero_t, zero_t, j_lo, j_hi, zero_t, origin_site(grid)};
    auto const ref = busemann_l2p(noise, lambda, reference_depth, w);
    PullbackResult out{depths, {}, {}, normalize(ref.top()), reference_depth};
    for (double d : depths) {
        check_tilt_margin(grid, lambda, j_lo, j_hi, -d);
        int const r = grid.time_index(d);
        auto const sol = normalize(propagate(noise, r, g.to_field(r), zero_t));
        out.distances.push_back(cicm_metric(sol, out.reference, m_max));
        out.solutions.push_back(sol);
    }
    return out;
}

std::vector<NormalizedProfile> pullback_trajectory(NoiseField const& noise,
                                                   NormalizedProfile const& g, double depth,
                                                   std::vector<double> const& times)
{
    GridSpec const& grid = noise.grid();
    int const r = grid.time_index(depth);
    std::vector<int> wanted;
    for (double t : times) {
        int const k = grid.time_index(t);
        if (k < r) {
            throw RangeError("trajectory time lies before the start depth");
        }
        wanted.push_back(k);
    }
    std::vector<NormalizedProfile> out;
    if (wanted.empty()) {
        return out;
    }
    int const last = *std::max_element(wanted.begin(), wanted.end());
    std::vector<std::optional<NormalizedProfile>> slots(wanted.size());
    propagate(noise, r, g.to_field(r), last, [&](Field const& f) {
        for (std::size_t i = 0; i < wanted.size(); ++i) {
            if (wanted[i] == f.time_index()) {
                slots[i] = normalize(f);
            }
        }
    });
    for (auto& s : slots) {
        out.push_back(std::move(*s));
    }
    return out;
}

InvarianceReport invariance_test(NoiseEnsemble const& ensemble, double lambda, double horizon_t,
                                 int n_replicas, double probe_dx, int n_probes)
{
    GridSpec const& grid = ensemble.grid;
    if (horizon_t != 0.0 && horizon_t < 10.0 * grid.dt - 1e-12) {
        throw ConfigError("invariance horizon must be 0 or at least 10 dt");
    }
    if (n_replicas < 2 || n_replicas > ensemble.replicas) {
        throw ConfigError("invariance test needs 2 <= replicas <= ensemble size");
    }
    int const step = static_cast<int>(std::llround(probe_dx / grid.dx));
    if (step < 1 || std::abs(step * grid.dx - probe_dx) > 1e-9 || n_probes < 1) {
        throw ConfigError("probe spacing must be a positive multiple of dx");
    }
    int const t0 = 0;
    int const t1 = grid.time_index(grid.t0 + horizon_t);
    int const origin = origin_site(grid);
    int const first = origin - (n_probes / 2) * step;
    int const last = first + n_probes * step;
    if (first < 0 || last >= grid.n_x) {
        throw RangeError("probe intervals exceed the grid");
    }
    if (horizon_t > 0.0) {
        check_tilt_margin(grid, lambda, first, last, horizon_t);
    }
    auto const per_replica = parallel_map(
        static_cast<std::size_t>(n_replicas), ensemble.workers, [&](std::size_t i) {
            KeyedStream rng(derive_seed(ensemble.seed ^ kBrownianSalt, i), 0);
            std::vector<double> b(static_cast<std::size_t>(grid.n_x), 0.0);
            double const sd = std::sqrt(grid.dx);
            for (int j = origin + 1; j < grid.n_x; ++j) {
                b[static_cast<std::size_t>(j)] =
                    b[static_cast<std::size_t>(j - 1)] + lambda * grid.dx + sd * rng.gaussian();
            }
            for (int j = origin - 1; j >= 0; --j) {
                b[static_cast<std::size_t>(j)] =
                    b[static_cast<std::size_t>(j + 1)] - lambda * grid.dx + sd * rng.gaussian();
            }
            Field f = Field::from_log(grid, t0, b);
            if (t1 > t0) {
                f = propagate(ensemble.replica(static_cast<int>(i)), t0, f, t1);
            }
            auto const h = hopf_cole(f);
            std::vector<double> inc;
            for (int k = 0; k < n_probes; ++k) {
                int const a = first + k * step;
                inc.push_back(h[static_cast<std::size_t>(a + step)] - h[static_cast<std::size_t>(a)]);
            }
            return inc;
        });
    std::vector<double> all;
    for (auto const& v : per_replica) {
        all.insert(all.end(), v.begin(), v.end());
    }
    auto const m = stats::moments(all);
    auto stat = [](double measured, double target, double se) {
        return TestStatistic{measured, target, se, se > 0.0 ? (measured - target) / se : 0.0};
    };
    InvarianceReport rep;
    rep.lambda = lambda;
    rep.horizon = horizon_t;
    rep.probe_dx = probe_dx;
    rep.samples = static_cast<int>(all.size());
    rep.mean = stat(m.mean, lambda * probe_dx, m.mean_se);
    rep.variance = stat(m.variance, probe_dx, m.variance_se);
    rep.excess_kurtosis = stat(m.excess_kurtosis, 0.0, m.kurtosis_se);
    return rep;
}

double hopf_lax(std::function<double(double)> const& u0, std::span<double const> zs, double t,
                double x, double a0)
{
    if (!(t > 0.0)) {
        throw ConfigError("Hopf-Lax time must be positive");
    }
    double best = std::numeric_limits<double>::infinity();
    for (double z : zs) {
        best = std::min(best, (x - z) * (x - z) / (2.0 * t) + u0(z));
    }
    return -a0 * t + best;
}

double homogenization_half_width(std::function<double(double)> const& u0, double epsilon,
                                 MacroWindow const& window)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double const reach = std::max(std::abs(window.x_lo), std::abs(window.x_hi));
    for (double x = -reach - 10.0; x <= reach + 10.0; x += 1e-3) {
        double const v = u0(x);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double const macro = reach + std::sqrt(2.0 * window.t_hi * (hi - lo))
                         + 4.0 * std::sqrt(window.t_hi * epsilon);
    return macro / epsilon;
}

HomogenizationResult homogenize(NoiseField const& noise, std::function<double(double)> const& u0,
                                double epsilon, MacroWindow const& window, double a0)
{
    GridSpec const& grid = noise.grid();
    if (!(epsilon > 0.0 && epsilon <= 0.1)) {
        throw ConfigError("epsilon must lie in (0, 0.1]");
    }
    if (!(0.0 < window.t_lo && window.t_lo <= window.t_hi && window.x_lo <= window.x_hi)
        || window.n_times < 1) {
        throw ConfigError("invalid homogenization window");
    }
    double const need = homogenization_half_width(u0, epsilon, window);
    if (grid.x_min > -need + 1e-9 || grid.x_max < need - 1e-9) {
        throw MarginError("homogenization needs the microscopic domain to cover [-"
                          + std::to_string(need) + ", " + std::to_string(need) + "]");
    }
    int const zero_t = grid.time_index(0.0);

    std::vector<int> steps;
    HomogenizationResult out;
    out.epsilon = epsilon;
    out.a0 = a0;
    for (int i = 0; i < window.n_times; ++i) {
        double const t = window.n_times == 1
                             ? window.t_lo
                             : window.t_lo + (window.t_hi - window.t_lo) * i / (window.n_times - 1);
        int const k = zero_t + static_cast<int>(std::llround(t / epsilon / grid.dt));
        if (k > grid.n_t) {
            throw RangeError("homogenization window exceeds the noise horizon");
        }
        steps.push_back(k);
        out.times.push_back((k - zero_t) * grid.dt * epsilon);
    }
    int const j_lo = grid.nearest_site(window.x_lo / epsilon);
    int const j_hi = grid.nearest_site(window.x_hi / epsilon);
    for (int j = j_lo; j <= j_hi; ++j) {
        out.xs.push_back(grid.x(j) * epsilon);
    }
    std::vector<double> zs(static_cast<std::size_t>(grid.n_x));
    std::vector<double> init(static_cast<std::size_t>(grid.n_x));
    for (int j = 0; j < grid.n_x; ++j) {
        zs[static_cast<std::size_t>(j)] = grid.x(j) * epsilon;
        init[static_cast<std::size_t>(j)] = -u0(grid.x(j) * epsilon) / epsilon;
    }
    Field const start = Field::from_log(grid, zero_t, init);
    out.u.assign(steps.size() * out.xs.size(), 0.0);
    out.hopf_lax.assign(out.u.size(), 0.0);
    propagate(noise, zero_t, start, steps.back(), [&](Field const& f) {
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (steps[i] != f.time_index()) {
                continue;
            }
            for (int j = j_lo; j <= j_hi; ++j) {
                out.u[i * out.xs.size() + static_cast<std::size_t>(j - j_lo)] =
                    -epsilon * f.log_value(j);
            }
        }
    });
    for (std::size_t i = 0; i < steps.size(); ++i) {
        for (std::size_t k = 0; k < out.xs.size(); ++k) {
            double const hl = hopf_lax(u0, zs, out.times[i], out.xs[k], a0);
            out.hopf_lax[i * out.xs.size() + k] = hl;
            out.sup_gap = std::max(out.sup_gap, std::abs(out.u[i * out.xs.size() + k] - hl));
        }
    }
    return out;
}

std::function<double(double)> load_potential_csv(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open potential file " + path.string());
    }
    std::vector<std::pair<double, double>> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream s(line);
        double x = 0.0;
        double v = 0.0;
        if (!(s >> x >> v)) {
            continue;  // header or malformed row
        }
        pts.emplace_back(x, v);
    }
    if (pts.size() < 2) {
        throw ConfigError("potential file needs at least two samples");
    }
    std::sort(pts.begin(), pts.end());
    return [pts](double x) {
        if (x <= pts.front().first) {
            return pts.front().second;
        }
        if (x >= pts.back().first) {
            return pts.back().second;
        }
        auto const it = std::lower_bound(pts.begin(), pts.end(), std::make_pair(x, -1e300));
        auto const& [x1, v1] = *it;
        auto const& [x0, v0] = *(it - 1);
        return v0 + (v1 - v0) * (x - x0) / (x1 - x0);
    };
}

}  // namespace shelab
