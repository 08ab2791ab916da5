#include "shelab/she_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "shelab/errors.hpp"
#include "shelab/stats.hpp"

namespace shelab {
namespace {

constexpr double kLn2 = std::numbers::ln2;

struct Support
{
    int lo = 0;
    int hi = -1;
    bool empty() const noexcept { return hi < lo; }
};

Support find_support(std::span<double const> v) noexcept
{
    Support s;
    int const n = static_cast<int>(v.size());
    while (s.lo < n && v[s.lo] == 0.0) {
        ++s.lo;
    }
    s.hi = n - 1;
    while (s.hi >= s.lo && v[s.hi] == 0.0) {
        --s.hi;
    }
    return s;
}

// Mass fraction of `in` that a heat step moves outside the domain.
double leak_fraction(HeatKernelDiscrete const& k, std::span<double const> in, Support sup)
{
    int const n = static_cast<int>(in.size());
    int const r = k.radius;
    if (sup.lo >= r && sup.hi < n - r) {
        return 0.0;
    }
    double dropped = 0.0;
    for (int i = sup.lo; i <= sup.hi; ++i) {
        int const dl = i;
        int const dr = n - 1 - i;
        if (dl >= r && dr >= r) {
            continue;
        }
        double tail = 0.0;
        for (int m = r; m > 0; --m) {
            if (m > dl) {
                tail += k[-m];
            }
            if (m > dr) {
                tail += k[m];
            }
        }
        dropped += in[i] * tail;
    }
    double total = 0.0;
    for (int i = sup.lo; i <= sup.hi; ++i) {
        total += in[i];
    }
    return total > 0.0 ? dropped / total : 0.0;
}

void apply_heat(HeatKernelDiscrete const& k, std::span<double const> in, std::span<double> out,
                LeakMonitor* leak)
{
    std::fill(out.begin(), out.end(), 0.0);
    Support const sup = find_support(in);
    if (sup.empty()) {
        return;
    }
    if (leak != nullptr) {
        leak->record(leak_fraction(k, in, sup));
    }
    int const n = static_cast<int>(in.size());
    int const r = k.radius;
    int const j_lo = std::max(0, sup.lo - r);
    int const j_hi = std::min(n - 1, sup.hi + r);
    double const* w = k.weights.data() + r;
    for (int j = j_lo; j <= j_hi; ++j) {
        // sum over m in [-r, r] with j - m in [lo, hi], in increasing m
        int const m_lo = std::max(-r, j - sup.hi);
        int const m_hi = std::min(r, j - sup.lo);
        double acc = 0.0;
        for (int m = m_lo; m <= m_hi; ++m) {
            acc += w[m] * in[j - m];
        }
        out[j] = acc;
    }
}

void apply_noise(NoiseField const& noise, int n, std::span<double> v)
{
    GridSpec const& g = noise.grid();
    double const amp = std::sqrt(g.dt / g.dx);
    double const ito = 0.5 * g.dt / g.dx;
    auto const row = noise.row(n);
    Support const sup = find_support(v);
    for (int j = sup.lo; j <= sup.hi; ++j) {
        v[j] *= std::exp(amp * row[j] - ito);
    }
}

void check_step_range(GridSpec const& g, int s_idx, int t_idx)
{
    if (s_idx < 0 || t_idx > g.n_t) {
        throw RangeError("time index outside the grid");
    }
    if (s_idx > t_idx) {
        throw RangeError("propagation requires s_idx <= t_idx");
    }
}

void check_site(GridSpec const& g, int j)
{
    if (j < 0 || j >= g.n_x) {
        throw RangeError("site index outside the grid");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Field

Field::Field(GridSpec const& grid, int time_index, std::vector<double> values, double log_offset)
    : grid_(grid), time_index_(time_index), values_(std::move(values)), log_offset_(log_offset)
{
    if (values_.size() != static_cast<std::size_t>(grid_.n_x)) {
        throw ConfigError("field size does not match the grid");
    }
    bool positive = false;
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw DomainError("field values must be finite and nonnegative");
        }
        positive = positive || v > 0.0;
    }
    if (!positive) {
        throw DomainError("field must have at least one positive value");
    }
    normalize();
}

Field Field::delta(GridSpec const& grid, int time_index, int site)
{
    check_site(grid, site);
    std::vector<double> v(static_cast<std::size_t>(grid.n_x), 0.0);
    v[static_cast<std::size_t>(site)] = 1.0 / grid.dx;
    return Field(grid, time_index, std::move(v));
}

Field Field::from_log(GridSpec const& grid, int time_index, std::span<double const> log_values)
{
    if (log_values.size() != static_cast<std::size_t>(grid.n_x)) {
        throw ConfigError("log profile size does not match the grid");
    }
    double top = -std::numeric_limits<double>::infinity();
    for (double l : log_values) {
        if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
            throw DomainError("log profile has non-finite values");
        }
        top = std::max(top, l);
    }
    if (!std::isfinite(top)) {
        throw DomainError("log profile is identically -inf");
    }
    std::vector<double> v(log_values.size());
    std::transform(log_values.begin(), log_values.end(), v.begin(),
                   [top](double l) { return std::exp(l - top); });
    return Field(grid, time_index, std::move(v), top);
}

Field Field::from_function(GridSpec const& grid, int time_index,
                           std::function<double(double)> const& f)
{
    std::vector<double> v(static_cast<std::size_t>(grid.n_x));
    for (int j = 0; j < grid.n_x; ++j) {
        v[static_cast<std::size_t>(j)] = f(grid.x(j));
    }
    return Field(grid, time_index, std::move(v));
}

double Field::value(int j) const
{
    return values_.at(static_cast<std::size_t>(j)) * std::exp(log_offset_);
}

double Field::log_value(int j) const
{
    return std::log(values_.at(static_cast<std::size_t>(j))) + log_offset_;
}

void Field::normalize() noexcept
{
    double const top = *std::max_element(values_.begin(), values_.end());
    if (top >= 0.5 && top < 2.0) {
        return;
    }
    int e = 0;
    std::frexp(top, &e);
    for (double& v : values_) {
        v = std::ldexp(v, -e);
    }
    log_offset_ += e * kLn2;
}

Field Field::with_time_index(int k) const
{
    Field out = *this;
    out.time_index_ = k;
    return out;
}

double Field::log_mass() const
{
    return std::log(stats::pairwise_sum(values_) * grid_.dx) + log_offset_;
}

// ---------------------------------------------------------------------------
// Kernels and steps

HeatKernelDiscrete make_heat_kernel(GridSpec const& grid)
{
    HeatKernelDiscrete k;
    k.dt = grid.dt;
    k.radius = static_cast<int>(std::ceil(grid.kernel_radius_sigmas * std::sqrt(grid.dt) / grid.dx - 1e-9));
    k.weights.resize(static_cast<std::size_t>(2 * k.radius + 1));
    for (int m = -k.radius; m <= k.radius; ++m) {
        double const y = m * grid.dx;
        k.weights[static_cast<std::size_t>(m + k.radius)] = std::exp(-y * y / (2.0 * grid.dt));
    }
    double const total = stats::pairwise_sum(k.weights);
    for (double& w : k.weights) {
        w /= total;
    }
    // enforce exact symmetry after the division
    for (int m = 1; m <= k.radius; ++m) {
        k.weights[static_cast<std::size_t>(k.radius - m)] =
            k.weights[static_cast<std::size_t>(k.radius + m)];
    }
    return k;
}

void LeakMonitor::record(double fraction) noexcept
{
    max_fraction = std::max(max_fraction, fraction);
    if (fraction > threshold) {
        ++steps_over_threshold;
    }
}

Field heat_step(Field const& field, LeakMonitor* leak)
{
    auto const k = make_heat_kernel(field.grid());
    std::vector<double> out(field.values().size());
    apply_heat(k, field.values(), out, leak);
    return Field(field.grid(), field.time_index(), std::move(out), field.log_offset());
}

Field noise_step(Field const& field, NoiseField const& noise, int n)
{
    if (n < 0 || n >= noise.grid().n_t) {
        throw RangeError("noise row outside the grid");
    }
    Field out = field;
    apply_noise(noise, n, out.mutable_values());
    out.set_time_index(n + 1);
    out.normalize();
    return out;
}

Field propagate(NoiseField const& noise, int s_idx, Field const& profile, int t_idx,
                FieldObserver const& observer, LeakMonitor* leak)
{
    GridSpec const& g = noise.grid();
    check_step_range(g, s_idx, t_idx);
    Field cur = profile.with_time_index(s_idx);
    if (observer) {
        observer(cur);
    }
    auto const k = make_heat_kernel(g);
    std::vector<double> scratch(static_cast<std::size_t>(g.n_x));
    for (int n = s_idx; n < t_idx; ++n) {
        apply_heat(k, cur.values(), scratch, leak);
        cur.mutable_values().swap(scratch);
        apply_noise(noise, n, cur.mutable_values());
        if (*std::max_element(cur.values().begin(), cur.values().end()) == 0.0) {
            throw DomainError("propagated profile vanished (all mass left the domain)");
        }
        cur.normalize();
        cur.set_time_index(n + 1);
        if (observer) {
            observer(cur);
        }
    }
    return cur;
}

Field propagate_adjoint(NoiseField const& noise, int t_idx, Field const& profile, int s_idx,
                        FieldObserver const& observer, LeakMonitor* leak)
{
    GridSpec const& g = noise.grid();
    check_step_range(g, s_idx, t_idx);
    Field cur = profile.with_time_index(t_idx);
    if (observer) {
        observer(cur);
    }
    auto const k = make_heat_kernel(g);
    std::vector<double> scratch(static_cast<std::size_t>(g.n_x));
    for (int n = t_idx - 1; n >= s_idx; --n) {
        apply_noise(noise, n, cur.mutable_values());
        apply_heat(k, cur.values(), scratch, leak);
        cur.mutable_values().swap(scratch);
        if (*std::max_element(cur.values().begin(), cur.values().end()) == 0.0) {
            throw DomainError("propagated profile vanished (all mass left the domain)");
        }
        cur.normalize();
        cur.set_time_index(n);
        if (observer) {
            observer(cur);
        }
    }
    return cur;
}

Field green(NoiseField const& noise, int s_idx, int x_j, int t_idx)
{
    return propagate(noise, s_idx, Field::delta(noise.grid(), s_idx, x_j), t_idx);
}

Field discrete_heat_kernel(GridSpec const& grid, int s_idx, int x_j, int t_idx)
{
    check_step_range(grid, s_idx, t_idx);
    auto const k = make_heat_kernel(grid);
    Field cur = Field::delta(grid, s_idx, x_j);
    std::vector<double> scratch(static_cast<std::size_t>(grid.n_x));
    for (int n = s_idx; n < t_idx; ++n) {
        apply_heat(k, cur.values(), scratch, nullptr);
        cur.mutable_values().swap(scratch);
        cur.normalize();
        cur.set_time_index(n + 1);
    }
    return cur;
}

double gaussian_density(double t, double y) noexcept
{
    return std::exp(-y * y / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

Field renormalized_green(NoiseField const& noise, int s_idx, int x_j, int t_idx)
{
    GridSpec const& g = noise.grid();
    Field const z = green(noise, s_idx, x_j, t_idx);
    if (s_idx == t_idx) {
        return Field(g, t_idx, std::vector<double>(static_cast<std::size_t>(g.n_x), 1.0));
    }
    Field const rho = discrete_heat_kernel(g, s_idx, x_j, t_idx);
    double const elapsed = (t_idx - s_idx) * g.dt;
    std::vector<double> logs(static_cast<std::size_t>(g.n_x));
    for (int j = 0; j < g.n_x; ++j) {
        double const zv = z.values()[static_cast<std::size_t>(j)];
        if (zv == 0.0) {
            logs[static_cast<std::size_t>(j)] = -std::numeric_limits<double>::infinity();
            continue;
        }
        double const rv = rho.values()[static_cast<std::size_t>(j)];
        double const log_rho = rv > 0.0 ? std::log(rv) + rho.log_offset()
                                        : std::log(gaussian_density(elapsed, g.x(j) - g.x(x_j)));
        logs[static_cast<std::size_t>(j)] = std::log(zv) + z.log_offset() - log_rho;
    }
    return Field::from_log(g, t_idx, logs);
}

double ck_residual(NoiseField const& noise, int s_idx, int r_idx, int t_idx, int x_j, int y_j)
{
    GridSpec const& g = noise.grid();
    if (!(s_idx < r_idx && r_idx < t_idx)) {
        throw RangeError("ck_residual requires s < r < t");
    }
    check_step_range(g, s_idx, t_idx);
    check_site(g, x_j);
    check_site(g, y_j);
    Field const direct = green(noise, s_idx, x_j, t_idx);
    Field const left = green(noise, s_idx, x_j, r_idx);  // z -> Z(r, z | s, x)
    Field const right = propagate_adjoint(noise, t_idx, Field::delta(g, t_idx, y_j), r_idx);
    std::vector<double> terms(static_cast<std::size_t>(g.n_x));
    for (int z = 0; z < g.n_x; ++z) {
        terms[static_cast<std::size_t>(z)] =
            right.values()[static_cast<std::size_t>(z)] * left.values()[static_cast<std::size_t>(z)];
    }
    double const composed_log =
        std::log(stats::pairwise_sum(terms) * g.dx) + right.log_offset() + left.log_offset();
    double const direct_log = direct.log_value(y_j);
    return std::abs(std::expm1(composed_log - direct_log));
}

std::vector<double> hopf_cole(Field const& field)
{
    std::vector<double> h(field.values().size());
    for (std::size_t j = 0; j < h.size(); ++j) {
        double const v = field.values()[j];
        if (!(v > 0.0)) {
            throw DomainError("hopf_cole of a field with a zero site");
        }
        h[j] = std::log(v) + field.log_offset();
    }
    return h;
}

SlopeEstimate slope_at_infinity(GridSpec const& grid, std::span<double const> h, Side side,
                                double fraction)
{
    if (!(fraction > 0.0 && fraction <= 0.5)) {
        throw ConfigError("slope window fraction must lie in (0, 0.5]");
    }
    if (h.size() != static_cast<std::size_t>(grid.n_x)) {
        throw ConfigError("height profile size does not match the grid");
    }
    auto const count = static_cast<int>(std::floor(fraction * grid.n_x));
    if (count < 5) {
        throw DomainError("slope window has fewer than 5 points");
    }
    int const first = side == Side::left ? 0 : grid.n_x - count;
    std::vector<double> xs;
    std::vector<double> ys;
    for (int j = first; j < first + count; ++j) {
        double const v = h[static_cast<std::size_t>(j)];
        if (!std::isfinite(v)) {
            throw DomainError("non-finite height in slope window");
        }
        xs.push_back(grid.x(j));
        ys.push_back(v);
    }
    // heights are spatially correlated, so the error bar is heteroskedasticity-
    // and autocorrelation-consistent rather than the iid formula
    auto const lag = static_cast<std::size_t>(std::sqrt(static_cast<double>(count)));
    auto const fit = stats::linear_fit(xs, ys, lag);
    return {fit.slope, fit.slope_se};
}

void write_field_csv(std::ostream& out, Field const& field, bool header)
{
    GridSpec const& g = field.grid();
    std::ostringstream buf;
    buf.precision(17);
    if (header) {
        buf << "time,x,value,log_offset\n";
    }
    double const t = g.time(field.time_index());
    for (int j = 0; j < g.n_x; ++j) {
        buf << t << ',' << g.x(j) << ',' << field.values()[static_cast<std::size_t>(j)] << ','
            << field.log_offset() << '\n';
    }
    out << buf.str();
}

Field read_profile_csv(std::filesystem::path const& path, GridSpec const& grid, int time_index)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open profile " + path.string());
    }
    std::vector<std::pair<double, double>> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        double x = 0.0;
        double v = 0.0;
        if (!(fields >> x >> v)) {
            continue;  // header or malformed line
        }
        samples.emplace_back(x, v);
    }
    if (samples.empty()) {
        throw ConfigError("profile " + path.string() + " has no samples");
    }
    std::sort(samples.begin(), samples.end());
    std::vector<double> values(static_cast<std::size_t>(grid.n_x));
    for (int j = 0; j < grid.n_x; ++j) {
        double const x = grid.x(j);
        auto it = std::lower_bound(samples.begin(), samples.end(), std::make_pair(x, -1e300));
        double best = it == samples.end() ? std::prev(it)->second : it->second;
        if (it != samples.begin() && it != samples.end()
            && std::abs(std::prev(it)->first - x) <= std::abs(it->first - x)) {
            best = std::prev(it)->second;
        }
        values[static_cast<std::size_t>(j)] = best;
    }
    return Field(grid, time_index, std::move(values));
}

}  // namespace shelab
