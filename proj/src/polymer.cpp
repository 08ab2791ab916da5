#include "shelab/polymer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "shelab/errors.hpp"
#include "shelab/parallel.hpp"
#include "shelab/rng.hpp"
#include "shelab/stats.hpp"

namespace shelab {

namespace {

// out[z] = sum_m K[m] v[z - m] over in-domain sites; K is symmetric so this is
// also the transposed kernel.
std::vector<double> convolve(HeatKernelDiscrete const& k, std::span<double const> v)
{
    int const n = static_cast<int>(v.size());
    std::vector<double> out(v.size(), 0.0);
    for (int z = 0; z < n; ++z) {
        int const lo = std::max(0, z - k.radius);
        int const hi = std::min(n - 1, z + k.radius);
        double acc = 0.0;
        for (int u = lo; u <= hi; ++u) {
            acc += k[z - u] * v[static_cast<std::size_t>(u)];
        }
        out[static_cast<std::size_t>(z)] = acc;
    }
    return out;
}

// One backward step of a site-probability vector from column s + 1 to column s.
std::vector<double> push_down(HeatKernelDiscrete const& k, Field const& v_s,
                              std::vector<double> const& p)
{
    auto const d = convolve(k, v_s.values());
    std::vector<double> q(p.size(), 0.0);
    for (std::size_t z = 0; z < p.size(); ++z) {
        if (p[z] != 0.0 && d[z] > 0.0) {
            q[z] = p[z] / d[z];
        }
    }
    auto out = convolve(k, q);
    for (std::size_t z = 0; z < out.size(); ++z) {
        out[z] *= v_s.values()[z];
    }
    return out;
}

Marginal to_marginal(GridSpec const& g, int s, std::vector<double> p)
{
    double const total = stats::pairwise_sum(p);
    for (double& v : p) {
        v /= total * g.dx;
    }
    return {g, s, std::move(p)};
}

Field tilt_profile(GridSpec const& g, int time_index, double lambda)
{
    std::vector<double> logs(static_cast<std::size_t>(g.n_x));
    for (int j = 0; j < g.n_x; ++j) {
        logs[static_cast<std::size_t>(j)] = lambda * g.x(j);
    }
    return Field::from_log(g, time_index, logs);
}

int order_rank(TerminalSpec const& a, TerminalSpec const& b)
{
    // -1: incomparable, 0: compatible ordering a <= b
    if (a.index() != b.index()) {
        return -1;
    }
    if (auto const* da = std::get_if<DeltaAt>(&a)) {
        return da->site <= std::get<DeltaAt>(b).site ? 0 : -1;
    }
    if (auto const* ba = std::get_if<BusemannDoob>(&a)) {
        auto const& bb = std::get<BusemannDoob>(b);
        return (ba->depth_idx == bb.depth_idx && ba->lambda <= bb.lambda) ? 0 : -1;
    }
    return std::get<Density>(a) == std::get<Density>(b) ? 0 : -1;
}

}  // namespace

PolymerChain::PolymerChain(int start_t, int start_y, TerminalSpec terminal, int horizon,
                           std::vector<Field> values, double row_residual)
    : start_t_(start_t), start_y_(start_y), terminal_(std::move(terminal)), horizon_(horizon),
      values_(std::move(values)), row_residual_(row_residual)
{
    if (values_.size() != static_cast<std::size_t>(start_t_ - horizon_ + 1)) {
        throw ConfigError("value function does not cover the chain's columns");
    }
    kernel_ = make_heat_kernel(values_.front().grid());
}

Field const& PolymerChain::value(int s) const
{
    if (s < horizon_ || s > start_t_) {
        throw RangeError("column outside the chain");
    }
    return values_[static_cast<std::size_t>(s - horizon_)];
}

PolymerChain build_chain(NoiseField const& noise, int start_t, int start_y,
                         TerminalSpec const& terminal, int r_idx)
{
    GridSpec const& g = noise.grid();
    if (!(r_idx < start_t) || r_idx < 0 || start_t > g.n_t) {
        throw RangeError("chain needs 0 <= horizon < start time <= N_t");
    }
    if (start_y < 0 || start_y >= g.n_x) {
        throw RangeError("chain start site outside the grid");
    }
    Field initial = std::visit(
        [&](auto const& term) -> Field {
            using T = std::decay_t<decltype(term)>;
            if constexpr (std::is_same_v<T, DeltaAt>) {
                if (term.site < 0 || term.site >= g.n_x) {
                    throw RangeError("pinned endpoint outside the grid");
                }
                return Field::delta(g, r_idx, term.site);
            } else if constexpr (std::is_same_v<T, Density>) {
                if (term.profile.size() != static_cast<std::size_t>(g.n_x)) {
                    throw ConfigError("terminal density does not match the grid");
                }
                return Field(g, r_idx, term.profile);
            } else {
                if (term.depth_idx < 0 || term.depth_idx > r_idx) {
                    throw RangeError("Doob depth must lie at or below the chain horizon");
                }
                check_tilt_margin(g, term.lambda, start_y, start_y,
                                  (start_t - term.depth_idx) * g.dt);
                Field const f = tilt_profile(g, term.depth_idx, term.lambda);
                return propagate(noise, term.depth_idx, f, r_idx);
            }
        },
        terminal);

    std::vector<Field> values;
    values.reserve(static_cast<std::size_t>(start_t - r_idx + 1));
    propagate(noise, r_idx, initial, start_t, [&](Field const& f) { values.push_back(f); });

    auto const k = make_heat_kernel(g);
    double const a = std::sqrt(g.dt / g.dx);
    double const c = g.dt / (2.0 * g.dx);
    double residual = 0.0;
    for (int n = r_idx; n < start_t; ++n) {
        Field const& lo = values[static_cast<std::size_t>(n - r_idx)];
        Field const& hi = values[static_cast<std::size_t>(n + 1 - r_idx)];
        auto const d = convolve(k, lo.values());
        double const shift = std::exp(lo.log_offset() - hi.log_offset());
        for (int z = 0; z < g.n_x; ++z) {
            double const v = hi.values()[static_cast<std::size_t>(z)];
            if (v == 0.0) {
                continue;
            }
            double const pred = std::exp(a * noise(n, z) - c) * d[static_cast<std::size_t>(z)] * shift;
            residual = std::max(residual, std::abs(pred - v) / v);
        }
    }
    if (values.back().values()[static_cast<std::size_t>(start_y)] == 0.0) {
        throw DomainError("value function vanishes at the chain start");
    }
    return PolymerChain(start_t, start_y, terminal, r_idx, std::move(values), residual);
}

std::vector<double> transition_row(PolymerChain const& chain, int s, int z_from)
{
    GridSpec const& g = chain.grid();
    if (s <= chain.horizon() || s > chain.start_t()) {
        throw RangeError("transition column outside the chain");
    }
    if (z_from < 0 || z_from >= g.n_x) {
        throw RangeError("transition site outside the grid");
    }
    auto const& k = chain.kernel();
    auto const& v = chain.value(s - 1).values();
    std::vector<double> row(static_cast<std::size_t>(g.n_x), 0.0);
    int const lo = std::max(0, z_from - k.radius);
    int const hi = std::min(g.n_x - 1, z_from + k.radius);
    double total = 0.0;
    for (int z = lo; z <= hi; ++z) {
        row[static_cast<std::size_t>(z)] = k[z_from - z] * v[static_cast<std::size_t>(z)];
        total += row[static_cast<std::size_t>(z)];
    }
    if (!(total > 0.0)) {
        throw DomainError("transition row has no mass (unreachable site)");
    }
    for (double& p : row) {
        p /= total * g.dx;
    }
    return row;
}

Marginal marginal(PolymerChain const& chain, int s_idx)
{
    if (s_idx < chain.horizon() || s_idx > chain.start_t()) {
        throw RangeError("marginal column outside the chain");
    }
    GridSpec const& g = chain.grid();
    std::vector<double> p(static_cast<std::size_t>(g.n_x), 0.0);
    p[static_cast<std::size_t>(chain.start_y())] = 1.0;
    for (int s = chain.start_t() - 1; s >= s_idx; --s) {
        p = push_down(chain.kernel(), chain.value(s), p);
    }
    return to_marginal(g, s_idx, std::move(p));
}

std::vector<Marginal> all_marginals(PolymerChain const& chain)
{
    GridSpec const& g = chain.grid();
    std::vector<Marginal> out;
    std::vector<double> p(static_cast<std::size_t>(g.n_x), 0.0);
    p[static_cast<std::size_t>(chain.start_y())] = 1.0;
    out.push_back(to_marginal(g, chain.start_t(), p));
    for (int s = chain.start_t() - 1; s >= chain.horizon(); --s) {
        p = push_down(chain.kernel(), chain.value(s), p);
        out.push_back(to_marginal(g, s, p));
    }
    return out;
}

PathSet sample_paths(PolymerChain const& chain, int n_paths, std::uint64_t seed, unsigned workers)
{
    if (n_paths < 0) {
        throw ConfigError("number of paths must be nonnegative");
    }
    GridSpec const& g = chain.grid();
    auto const& k = chain.kernel();
    int const length = chain.start_t() - chain.horizon() + 1;
    auto const paths = parallel_map(static_cast<std::size_t>(n_paths), workers, [&](std::size_t p) {
        KeyedStream rng(seed, p);
        std::vector<int> sites(static_cast<std::size_t>(length));
        int z = chain.start_y();
        sites[0] = z;
        std::vector<double> cdf(static_cast<std::size_t>(2 * k.radius + 1));
        for (int step = 1; step < length; ++step) {
            auto const& v = chain.value(chain.start_t() - step).values();
            int const lo = std::max(0, z - k.radius);
            int const hi = std::min(g.n_x - 1, z + k.radius);
            double total = 0.0;
            for (int u = lo; u <= hi; ++u) {
                total += k[z - u] * v[static_cast<std::size_t>(u)];
                cdf[static_cast<std::size_t>(u - lo)] = total;
            }
            double const target = rng.uniform() * total;
            int pick = hi;
            for (int u = lo; u <= hi; ++u) {
                if (target < cdf[static_cast<std::size_t>(u - lo)]) {
                    pick = u;
                    break;
                }
            }
            z = pick;
            sites[static_cast<std::size_t>(step)] = z;
        }
        return sites;
    });
    PathSet set;
    set.n_paths = n_paths;
    set.length = length;
    set.start_t = chain.start_t();
    set.grid = g;
    set.sites.reserve(static_cast<std::size_t>(n_paths) * length);
    for (auto const& path : paths) {
        set.sites.insert(set.sites.end(), path.begin(), path.end());
    }
    return set;
}

Marginal empirical_marginal(PathSet const& paths, int s_idx)
{
    int const k = paths.start_t - s_idx;
    if (k < 0 || k >= paths.length || paths.n_paths == 0) {
        throw RangeError("column outside the sampled paths");
    }
    std::vector<double> counts(static_cast<std::size_t>(paths.grid.n_x), 0.0);
    for (int p = 0; p < paths.n_paths; ++p) {
        counts[static_cast<std::size_t>(paths.site(p, k))] += 1.0;
    }
    return to_marginal(paths.grid, s_idx, std::move(counts));
}

double tv_distance(Marginal const& a, Marginal const& b)
{
    if (!(a.grid == b.grid) || a.density.size() != b.density.size()) {
        throw ConfigError("total variation needs densities on the same grid");
    }
    std::vector<double> diff(a.density.size());
    for (std::size_t i = 0; i < diff.size(); ++i) {
        diff[i] = std::abs(a.density[i] - b.density[i]);
    }
    return std::clamp(0.5 * stats::pairwise_sum(diff) * a.grid.dx, 0.0, 1.0);
}

Estimate lln_slope(PathSet const& paths)
{
    if (paths.n_paths < 2 || paths.length < 2) {
        throw ConfigError("slope estimate needs at least two paths of positive length");
    }
    GridSpec const& g = paths.grid;
    double const elapsed = -(paths.length - 1) * g.dt;
    std::vector<double> slopes(static_cast<std::size_t>(paths.n_paths));
    for (int p = 0; p < paths.n_paths; ++p) {
        slopes[static_cast<std::size_t>(p)] =
            (g.x(paths.site(p, paths.length - 1)) - g.x(paths.site(p, 0))) / elapsed;
    }
    auto const m = stats::moments(slopes);
    return {m.mean, m.mean_se};
}

double ldp_event_probability(PolymerChain const& chain, double mu, double band)
{
    return ldp_event_probability(chain, marginal(chain, chain.horizon()), mu, band);
}

double ldp_event_probability(PolymerChain const& chain, Marginal const& at_horizon, double mu,
                             double band)
{
    if (!(band > 0.0)) {
        throw ConfigError("LDP band must be positive");
    }
    GridSpec const& g = chain.grid();
    if (at_horizon.time_index != chain.horizon() || !(at_horizon.grid == g)) {
        throw ConfigError("LDP marginal must be the chain's horizon column");
    }
    double const h = (chain.start_t() - chain.horizon()) * g.dt;
    double const y = g.x(chain.start_y());
    double const lo = y + h * (mu - band);
    double const hi = y + h * (mu + band);
    if (lo < g.x_min || hi > g.x_max) {
        throw ConfigError("LDP event lies outside the domain");
    }
    std::vector<double> mass;
    for (int j = 0; j < g.n_x; ++j) {
        if (g.x(j) >= lo - 1e-9 && g.x(j) <= hi + 1e-9) {
            mass.push_back(at_horizon.density[static_cast<std::size_t>(j)] * g.dx);
        }
    }
    return stats::pairwise_sum(mass);
}

Estimate ldp_rate(NoiseEnsemble const& ensemble, double lambda, double mu, double depth_r,
                  double band)
{
    GridSpec const& g = ensemble.grid;
    int const start_t = g.time_index(0.0);
    int const r_idx = g.time_index(depth_r);
    int const origin = g.nearest_site(0.0);
    auto const rates = parallel_map(
        static_cast<std::size_t>(ensemble.replicas), ensemble.workers, [&](std::size_t i) {
            auto const noise = ensemble.replica(static_cast<int>(i));
            auto const chain = build_chain(noise, start_t, origin, BusemannDoob{lambda, 0}, r_idx);
            double const p = ldp_event_probability(chain, mu, band);
            if (!(p > 0.0)) {
                throw DomainError("LDP event has zero probability");
            }
            return -std::log(p) / (-depth_r);
        });
    auto const m = stats::moments(rates);
    return {m.mean, m.mean_se};
}

DominanceReport check_dominance(PolymerChain const& chain_a, PolymerChain const& chain_b)
{
    if (!(chain_a.grid() == chain_b.grid()) || chain_a.start_t() != chain_b.start_t()
        || chain_a.horizon() != chain_b.horizon()) {
        throw ConfigError("dominance check needs a common grid, start time and horizon");
    }
    if (chain_a.start_y() > chain_b.start_y()
        || order_rank(chain_a.terminal(), chain_b.terminal()) < 0) {
        throw ConfigError("dominance check needs ordered start points and terminals");
    }
    GridSpec const& g = chain_a.grid();
    DominanceReport report;
    std::vector<double> pa(static_cast<std::size_t>(g.n_x), 0.0);
    std::vector<double> pb(pa.size(), 0.0);
    pa[static_cast<std::size_t>(chain_a.start_y())] = 1.0;
    pb[static_cast<std::size_t>(chain_b.start_y())] = 1.0;
    for (int s = chain_a.start_t();; --s) {
        double const ta = stats::pairwise_sum(pa);
        double const tb = stats::pairwise_sum(pb);
        double ca = 0.0;
        double cb = 0.0;
        for (std::size_t z = 0; z < pa.size(); ++z) {
            ca += pa[z] / ta;
            cb += pb[z] / tb;
            double const gap = cb - ca;
            if (gap > report.worst_violation) {
                report.worst_violation = gap;
                report.worst_column = s;
            }
        }
        ++report.columns;
        if (s == chain_a.horizon()) {
            break;
        }
        pa = push_down(chain_a.kernel(), chain_a.value(s - 1), pa);
        pb = push_down(chain_b.kernel(), chain_b.value(s - 1), pb);
    }
    return report;
}

void write_paths_csv(std::ostream& out, PathSet const& paths)
{
    out << "path_id,time,x\n" << std::setprecision(17);
    for (int p = 0; p < paths.n_paths; ++p) {
        for (int k = 0; k < paths.length; ++k) {
            out << p << ',' << paths.grid.time(paths.start_t - k) << ','
                << paths.grid.x(paths.site(p, k)) << '\n';
        }
    }
}

void write_marginal_csv(std::ostream& out, Marginal const& m, bool header)
{
    if (header) {
        out << "time,x,density\n";
    }
    out << std::setprecision(17);
    for (int j = 0; j < m.grid.n_x; ++j) {
        out << m.grid.time(m.time_index) << ',' << m.grid.x(j) << ','
            << m.density[static_cast<std::size_t>(j)] << '\n';
    }
}

}  // namespace shelab
