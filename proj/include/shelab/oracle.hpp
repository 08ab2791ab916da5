#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "shelab/grid_noise.hpp"

namespace shelab::oracle {

/*!
 * Small instance for brute-force path enumeration: at most 4 steps and 9
 * sites. Kernel weights and noise multipliers are recomputed here from their
 * defining formulas and never borrowed from the solver.
 */
struct TinyInstance
{
    GridSpec grid;
    std::vector<double> noise;  // n_t x n_x, row-major
    int s_idx = 0;
    int t_idx = 0;
    int x_site = 0;
    int y_site = 0;
};

inline constexpr int kMaxSteps = 4;
inline constexpr int kMaxSites = 9;

//! Throws ConfigError when the instance exceeds the enumeration limits.
void validate(TinyInstance const& inst);

//! Random instance with a kernel radius that fits inside the domain.
TinyInstance random_instance(std::uint64_t seed);

//! Copies the noise grid and values out of a noise field.
TinyInstance from_noise(NoiseField const& noise, int s_idx, int x_site, int t_idx, int y_site);

//! Sampled and renormalized heat kernel weight k(m), independently computed.
double kernel_weight(GridSpec const& grid, int m);

//! Multiplier of step n (n -> n + 1) at site j.
double multiplier(TinyInstance const& inst, int n, int j);

/*!
 * Sum over site paths z_s = x, ..., z_t = y of prod_n k(z_{n+1} - z_n) * multiplier(n, z_{n+1}),
 * times the delta normalization 1/dx.
 */
double enumerate_partition(TinyInstance const& inst);

//! Free endpoint: sum over y of the point-to-point oracle, times dx.
double enumerate_point_to_line(TinyInstance const& inst);

//! Calls visit(path, weight) for every path from (s, x_site) to time t, any endpoint.
void for_each_path(TinyInstance const& inst,
                   std::function<void(std::span<int const>, double)> const& visit);

//! Noise-free (t - s)-fold discrete heat image of the delta at x_j by dense matrix powers.
std::vector<double> exact_mean_field(GridSpec const& grid, int s_idx, int x_j, int t_idx);

}  // namespace shelab::oracle
