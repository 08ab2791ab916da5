#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace shelab {

/*!
 * Uniform space-time grid.
 *
 * Time indices run over [0, n_t] (n_t steps of size dt); site indices over
 * [0, n_x). Noise row n covers the step from time index n to n + 1.
 */
struct GridSpec
{
    double t0 = 0.0;
    double t1 = 0.0;
    double x_min = 0.0;
    double x_max = 0.0;
    double dt = 0.0;
    double dx = 0.0;
    double kernel_radius_sigmas = 6.0;
    int n_t = 0;  // number of time steps
    int n_x = 0;  // number of sites

    double time(int k) const noexcept { return t0 + k * dt; }
    double x(int j) const noexcept { return x_min + j * dx; }

    //! Nearest site, ties to the even site index. Throws RangeError off-grid.
    int nearest_site(double x) const;
    //! Time index of t; t must lie on the grid within rounding.
    int time_index(double t) const;

    bool operator==(GridSpec const&) const = default;
};

//! Validated grid; throws ConfigError on non-multiple extents or n_x < 3.
GridSpec make_grid(double t0, double t1, double x_min, double x_max, double dt, double dx,
                   double kernel_radius_sigmas = 6.0);

//! Gaussian value of the absolute cell key (a, b) under `seed`.
double cell_value(std::uint64_t seed, std::int64_t a, std::int64_t b) noexcept;

/*!
 * Affine map from grid indices to absolute cell keys.
 *
 * key_time = time_sign * n + time_offset, key_space = space_sign * j + space_offset.
 */
struct CellKeyMap
{
    int time_sign = 1;
    int space_sign = 1;
    std::int64_t time_offset = 0;
    std::int64_t space_offset = 0;

    bool operator==(CellKeyMap const&) const = default;
};

/*!
 * Discretized white noise: one standard Gaussian per grid cell.
 *
 * Immutable after construction. Cell (n, j) equals
 * cell_value(seed, key_map.time(n), key_map.space(j)) whenever the field is
 * keyed; fields read from disk carry no key map.
 */
class NoiseField
{
  public:
    NoiseField(GridSpec grid, std::uint64_t seed, CellKeyMap map);
    NoiseField(GridSpec grid, std::uint64_t seed, std::vector<double> values);

    GridSpec const& grid() const noexcept { return grid_; }
    std::uint64_t seed() const noexcept { return seed_; }
    bool keyed() const noexcept { return keyed_; }
    CellKeyMap const& key_map() const noexcept { return map_; }

    double operator()(int n, int j) const noexcept
    {
        return values_[static_cast<std::size_t>(n) * grid_.n_x + j];
    }
    std::span<double const> row(int n) const noexcept
    {
        return {values_.data() + static_cast<std::size_t>(n) * grid_.n_x,
                static_cast<std::size_t>(grid_.n_x)};
    }
    std::span<double const> values() const noexcept { return values_; }

  private:
    GridSpec grid_;
    std::uint64_t seed_;
    CellKeyMap map_;
    bool keyed_;
    std::vector<double> values_;
};

NoiseField sample_noise(GridSpec const& grid, std::uint64_t seed);

enum class ShiftMode
{
    rekey,   // cells leaving the grid are regenerated from their shifted keys
    strict,  // every shifted index must stay inside the grid
};

//! w'[n][j] = w[n + k_t][j + k_x].
NoiseField shift_noise(NoiseField const& noise, int k_t, int k_x,
                       ShiftMode mode = ShiftMode::rekey);

enum class Axis
{
    time,
    space,
};

//! Index reversal along one axis.
NoiseField reflect_noise(NoiseField const& noise, Axis axis);

/*!
 * Block-aggregated noise on a coarser grid: each coarse cell is the sum of the
 * fine cells it covers divided by the square root of their count, so the result
 * is again one standard Gaussian per cell and resolutions share one noise.
 * The coarse steps must be integer multiples of the fine steps and the coarse
 * cells must tile a subset of the fine grid; throws ConfigError otherwise.
 */
NoiseField coarsen_noise(NoiseField const& fine, GridSpec const& coarse);

// Binary persistence, little-endian, header fields packed without padding.
void write_noise(NoiseField const& noise, std::filesystem::path const& path);
NoiseField read_noise(std::filesystem::path const& path);

}  // namespace shelab
