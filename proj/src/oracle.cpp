#include "shelab/oracle.hpp"

#include <cmath>
#include <string>

#include "shelab/errors.hpp"
#include "shelab/rng.hpp"

namespace shelab::oracle {
namespace {

int radius_of(GridSpec const& grid)
{
    return static_cast<int>(std::ceil(grid.kernel_radius_sigmas * std::sqrt(grid.dt) / grid.dx - 1e-9));
}

}  // namespace

void validate(TinyInstance const& inst)
{
    GridSpec const& g = inst.grid;
    if (g.n_t > kMaxSteps || g.n_x > kMaxSites) {
        throw ConfigError("tiny instance exceeds " + std::to_string(kMaxSteps) + " steps x "
                          + std::to_string(kMaxSites) + " sites");
    }
    if (inst.noise.size() != static_cast<std::size_t>(g.n_t) * g.n_x) {
        throw ConfigError("tiny instance noise size mismatch");
    }
    if (inst.s_idx < 0 || inst.s_idx > inst.t_idx || inst.t_idx > g.n_t) {
        throw RangeError("tiny instance time indices out of order");
    }
    if (inst.x_site < 0 || inst.x_site >= g.n_x || inst.y_site < 0 || inst.y_site >= g.n_x) {
        throw RangeError("tiny instance site out of range");
    }
}

TinyInstance random_instance(std::uint64_t seed)
{
    KeyedStream rng(seed, 0);
    auto pick = [&rng](int lo, int hi) {
        return lo + static_cast<int>(std::floor(rng.uniform() * (hi - lo + 1)));
    };
    static constexpr double kSteps[] = {0.0001, 0.0004, 0.001, 0.0025};
    int const n_t = pick(1, kMaxSteps);
    int const n_x = pick(3, kMaxSites);
    double const dx = 0.1;
    double const dt = kSteps[pick(0, 3)];
    TinyInstance inst;
    inst.grid = make_grid(0.0, n_t * dt, -0.1 * (n_x / 2), -0.1 * (n_x / 2) + (n_x - 1) * dx, dt,
                          dx, 6.0);
    inst.noise.resize(static_cast<std::size_t>(n_t) * n_x);
    for (double& w : inst.noise) {
        w = rng.gaussian();
    }
    inst.s_idx = pick(0, n_t - 1);
    inst.t_idx = pick(inst.s_idx + 1, n_t);
    inst.x_site = pick(0, n_x - 1);
    inst.y_site = pick(0, n_x - 1);
    return inst;
}

TinyInstance from_noise(NoiseField const& noise, int s_idx, int x_site, int t_idx, int y_site)
{
    TinyInstance inst;
    inst.grid = noise.grid();
    inst.noise.assign(noise.values().begin(), noise.values().end());
    inst.s_idx = s_idx;
    inst.t_idx = t_idx;
    inst.x_site = x_site;
    inst.y_site = y_site;
    validate(inst);
    return inst;
}

double kernel_weight(GridSpec const& grid, int m)
{
    int const r = radius_of(grid);
    if (std::abs(m) > r) {
        return 0.0;
    }
    double total = 0.0;
    for (int i = -r; i <= r; ++i) {
        total += std::exp(-(i * grid.dx) * (i * grid.dx) / (2.0 * grid.dt));
    }
    return std::exp(-(m * grid.dx) * (m * grid.dx) / (2.0 * grid.dt)) / total;
}

double multiplier(TinyInstance const& inst, int n, int j)
{
    GridSpec const& g = inst.grid;
    double const w = inst.noise[static_cast<std::size_t>(n) * g.n_x + j];
    return std::exp(std::sqrt(g.dt / g.dx) * w - g.dt / (2.0 * g.dx));
}

void for_each_path(TinyInstance const& inst,
                   std::function<void(std::span<int const>, double)> const& visit)
{
    validate(inst);
    GridSpec const& g = inst.grid;
    int const steps = inst.t_idx - inst.s_idx;
    std::vector<int> path(static_cast<std::size_t>(steps + 1));
    path[0] = inst.x_site;
    // odometer over the sites visited after each step
    long long total = 1;
    for (int i = 0; i < steps; ++i) {
        total *= g.n_x;
    }
    for (long long code = 0; code < total; ++code) {
        long long c = code;
        double weight = 1.0 / g.dx;
        for (int i = 1; i <= steps; ++i) {
            path[static_cast<std::size_t>(i)] = static_cast<int>(c % g.n_x);
            c /= g.n_x;
            int const from = path[static_cast<std::size_t>(i - 1)];
            int const to = path[static_cast<std::size_t>(i)];
            weight *= kernel_weight(g, to - from) * multiplier(inst, inst.s_idx + i - 1, to);
        }
        visit(path, weight);
    }
}

double enumerate_partition(TinyInstance const& inst)
{
    double total = 0.0;
    for_each_path(inst, [&](std::span<int const> path, double weight) {
        if (path.back() == inst.y_site) {
            total += weight;
        }
    });
    return total;
}

double enumerate_point_to_line(TinyInstance const& inst)
{
    double total = 0.0;
    for (int y = 0; y < inst.grid.n_x; ++y) {
        TinyInstance copy = inst;
        copy.y_site = y;
        total += enumerate_partition(copy);
    }
    return total * inst.grid.dx;
}

std::vector<double> exact_mean_field(GridSpec const& grid, int s_idx, int x_j, int t_idx)
{
    if (s_idx > t_idx || s_idx < 0 || t_idx > grid.n_t) {
        throw RangeError("exact_mean_field time indices out of order");
    }
    if (x_j < 0 || x_j >= grid.n_x) {
        throw RangeError("exact_mean_field site out of range");
    }
    auto const n = static_cast<std::size_t>(grid.n_x);
    std::vector<double> dense(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dense[i * n + j] = kernel_weight(grid, static_cast<int>(i) - static_cast<int>(j));
        }
    }
    std::vector<double> v(n, 0.0);
    v[static_cast<std::size_t>(x_j)] = 1.0 / grid.dx;
    std::vector<double> next(n);
    for (int step = s_idx; step < t_idx; ++step) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += dense[i * n + j] * v[j];
            }
            next[i] = acc;
        }
        v.swap(next);
    }
    return v;
}

}  // namespace shelab::oracle
