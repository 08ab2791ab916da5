#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "shelab/grid_noise.hpp"

namespace shelab {

/*!
 * Spatial profile at one grid time.
 *
 * Represents exp(log_offset) * values[j]. All values are nonnegative and at
 * least one is positive; after normalize() the maximum lies in [0.5, 2).
 */
class Field
{
  public:
    Field(GridSpec const& grid, int time_index, std::vector<double> values,
          double log_offset = 0.0);

    //! 1/dx at `site`, zero elsewhere.
    static Field delta(GridSpec const& grid, int time_index, int site);
    //! Values exp(log_values[j]); -inf entries become zeros.
    static Field from_log(GridSpec const& grid, int time_index, std::span<double const> log_values);
    static Field from_function(GridSpec const& grid, int time_index,
                               std::function<double(double)> const& f);

    GridSpec const& grid() const noexcept { return grid_; }
    int time_index() const noexcept { return time_index_; }
    std::span<double const> values() const noexcept { return values_; }
    double log_offset() const noexcept { return log_offset_; }

    double value(int j) const;
    double log_value(int j) const;

    //! Scales values by a power of two so that max lies in [0.5, 2); exact.
    void normalize() noexcept;

    Field with_time_index(int k) const;
    //! Total represented mass sum_j value(j) * dx, as a logarithm.
    double log_mass() const;

    // Raw access for the solver kernels.
    std::vector<double>& mutable_values() noexcept { return values_; }
    void set_time_index(int k) noexcept { time_index_ = k; }
    void add_log_offset(double d) noexcept { log_offset_ += d; }

  private:
    GridSpec grid_;
    int time_index_;
    std::vector<double> values_;
    double log_offset_;
};

//! Sampled Gaussian of variance dt, truncated at radius R sites and renormalized to unit sum.
struct HeatKernelDiscrete
{
    double dt = 0.0;
    int radius = 0;
    std::vector<double> weights;  // weights[m + radius], |m| <= radius

    double operator[](int m) const noexcept { return weights[static_cast<std::size_t>(m + radius)]; }
};

HeatKernelDiscrete make_heat_kernel(GridSpec const& grid);

//! Records dropped boundary mass per heat step.
struct LeakMonitor
{
    double threshold = 1e-8;
    double max_fraction = 0.0;
    long steps_over_threshold = 0;

    void record(double fraction) noexcept;
};

//! Convolution with the discrete heat kernel; mass leaving [x_min, x_max] is dropped.
Field heat_step(Field const& field, LeakMonitor* leak = nullptr);

//! Pointwise multiplication by exp(sqrt(dt/dx) w[n][j] - dt/(2 dx)); advances to time n + 1.
Field noise_step(Field const& field, NoiseField const& noise, int n);

using FieldObserver = std::function<void(Field const&)>;

/*!
 * Solution operator Z(t, . | s, profile): heat step then noise step for each
 * step in (s_idx, t_idx]. The observer, if given, sees every intermediate
 * time including s_idx and t_idx.
 */
Field propagate(NoiseField const& noise, int s_idx, Field const& profile, int t_idx,
                FieldObserver const& observer = {}, LeakMonitor* leak = nullptr);

/*!
 * Transposed solution operator: for n = t-1 down to s, multiply by the noise
 * factor of row n then apply the heat kernel. propagate_adjoint of delta_y
 * from t back to s gives z -> Z(t, y | s, z).
 */
Field propagate_adjoint(NoiseField const& noise, int t_idx, Field const& profile, int s_idx,
                        FieldObserver const& observer = {}, LeakMonitor* leak = nullptr);

//! Green's function Z(t, . | s, x_j).
Field green(NoiseField const& noise, int s_idx, int x_j, int t_idx);

//! n-fold discrete heat kernel image of the delta at x_j (the noise-free flow).
Field discrete_heat_kernel(GridSpec const& grid, int s_idx, int x_j, int t_idx);

//! Z / rho with rho the discrete heat kernel of total time t - s; analytic rho outside its support.
Field renormalized_green(NoiseField const& noise, int s_idx, int x_j, int t_idx);

//! |Z(t,y|s,x) - sum_z Z(t,y|r,z) Z(r,z|s,x) dx| / Z(t,y|s,x).
double ck_residual(NoiseField const& noise, int s_idx, int r_idx, int t_idx, int x_j, int y_j);

//! Heat kernel density of variance t at displacement y.
double gaussian_density(double t, double y) noexcept;

//! h[j] = log of the represented value. Throws DomainError on a zero site.
std::vector<double> hopf_cole(Field const& field);

enum class Side
{
    left,
    right,
};

struct SlopeEstimate
{
    double slope = 0.0;
    double stderr_ = 0.0;
};

//! Least-squares slope of h over the outer `fraction` of sites on one side.
SlopeEstimate slope_at_infinity(GridSpec const& grid, std::span<double const> h, Side side,
                                double fraction);

// CSV interfaces.
void write_field_csv(std::ostream& out, Field const& field, bool header = true);
//! Reads (x, value) samples; every grid site takes the value of its nearest sample.
Field read_profile_csv(std::filesystem::path const& path, GridSpec const& grid, int time_index);

}  // namespace shelab
