#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "shelab/busemann.hpp"
#include "shelab/grid_noise.hpp"
#include "shelab/she_core.hpp"

namespace shelab {

//! Strictly positive profile with value exactly 1 at the site nearest x = 0.
class NormalizedProfile
{
  public:
    NormalizedProfile(GridSpec const& grid, std::vector<double> values);

    GridSpec const& grid() const noexcept { return grid_; }
    int origin() const noexcept { return origin_; }
    std::span<double const> values() const noexcept { return values_; }
    double operator[](int j) const noexcept { return values_[static_cast<std::size_t>(j)]; }

    //! The profile as a field at the given time index.
    Field to_field(int time_index) const;

  private:
    GridSpec grid_;
    int origin_;
    std::vector<double> values_;
};

//! Divides by the value at the origin site. Throws DomainError on zeros.
NormalizedProfile normalize(Field const& field);

//! Normalized profile of a positive function sampled on the grid.
NormalizedProfile normalized_from_function(GridSpec const& grid,
                                           std::function<double(double)> const& f);

/*!
 * Truncated complete metric on positive continuous functions:
 * sum_{m <= m_max} 2^-m (1 ^ sup_{|x| <= m} [|f - g| + |1/f - 1/g|])
 * + sum_{m <= m_max} 2^-m (1 ^ |int e^{-y^2/m} (f - g) dy|), with grid quadrature.
 */
double cicm_metric(NormalizedProfile const& f, NormalizedProfile const& g, int m_max = 8);

enum class SlopeKind
{
    in_f,
    exceptional,
    unclassified,
};

char const* to_string(SlopeKind kind) noexcept;

struct SlopeClass
{
    std::optional<double> lambda_right;
    std::optional<double> lambda_left;
    SlopeKind kind = SlopeKind::unclassified;
    double lambda = 0.0;     // basin slope when kind == in_f
    double tolerance = 0.0;  // decision tolerance used (3 stderr + 0.05, worst side)
};

/*!
 * Estimates the asymptotic slopes of log g on each side and applies the basin
 * decision table: lambda_+ > max(0, -lambda_-) gives lambda_+, lambda_- <
 * min(0, -lambda_+) gives lambda_-, lambda_+ <= 0 <= lambda_- gives 0, and
 * lambda_+ = -lambda_- > 0 is exceptional.
 */
SlopeClass classify_F_lambda(NormalizedProfile const& g, double fraction = 0.25);

struct PullbackResult
{
    std::vector<double> depths;
    std::vector<double> distances;               // to the reference, per depth
    std::vector<NormalizedProfile> solutions;    // time-0 normalized solutions, per depth
    NormalizedProfile reference;                 // exp(b^lambda(0,0,0,.)) from the deepest grid time
    double reference_depth = 0.0;
};

/*!
 * Propagates g from each depth to time 0 and measures the metric distance to
 * the function-to-point Busemann profile started at the grid's first time.
 * Refuses profiles whose classification differs from InF(lambda).
 */
PullbackResult pullback_run(NoiseField const& noise, NormalizedProfile const& g, double lambda,
                            std::vector<double> const& depths, int m_max = 8);

//! Diagnostic mode with no basin requirement: normalized solutions at the requested times.
std::vector<NormalizedProfile> pullback_trajectory(NoiseField const& noise,
                                                   NormalizedProfile const& g, double depth,
                                                   std::vector<double> const& times);

struct TestStatistic
{
    double measured = 0.0;
    double target = 0.0;
    double stderr_ = 0.0;
    double z = 0.0;
};

struct InvarianceReport
{
    double lambda = 0.0;
    double horizon = 0.0;
    double probe_dx = 0.0;
    int samples = 0;
    TestStatistic mean;
    TestStatistic variance;
    TestStatistic excess_kurtosis;
};

/*!
 * Starts every replica from exp(B) with B a discrete Brownian path of drift
 * lambda pinned at the origin, propagates for horizon_t, and tests the
 * increments of log of the normalized solution over n_probes disjoint
 * intervals of length probe_dx centred on the origin.
 */
InvarianceReport invariance_test(NoiseEnsemble const& ensemble, double lambda, double horizon_t,
                                 int n_replicas, double probe_dx = 1.0, int n_probes = 8);

//! Macroscopic window for homogenization: times [t_lo, t_hi], positions [x_lo, x_hi].
struct MacroWindow
{
    double t_lo = 0.5;
    double t_hi = 1.0;
    double x_lo = -1.0;
    double x_hi = 1.0;
    int n_times = 6;
};

struct HomogenizationResult
{
    double epsilon = 0.0;
    double a0 = 0.0;
    std::vector<double> times;  // macroscopic
    std::vector<double> xs;     // macroscopic
    std::vector<double> u;      // times x xs, row-major
    std::vector<double> hopf_lax;
    double sup_gap = 0.0;
};

//! Hopf-Lax value -a0 t + min over grid z of ((x - z)^2 / (2t) + U(z)).
double hopf_lax(std::function<double(double)> const& u0, std::span<double const> zs, double t,
                double x, double a0);

/*!
 * u_eps(t, x) = -eps log Z(t/eps, x/eps | 0, exp(-U(eps .)/eps)) compared with
 * the Hopf-Lax solution with the scheme constant a0. The noise grid is the
 * microscopic grid starting at time 0.
 */
HomogenizationResult homogenize(NoiseField const& noise, std::function<double(double)> const& u0,
                                double epsilon, MacroWindow const& window, double a0);

//! Microscopic grid half-width needed for homogenize (margin rule).
double homogenization_half_width(std::function<double(double)> const& u0, double epsilon,
                                 MacroWindow const& window);

//! Linear interpolation of (x, value) CSV samples, constant beyond the ends.
std::function<double(double)> load_potential_csv(std::filesystem::path const& path);

}  // namespace shelab
