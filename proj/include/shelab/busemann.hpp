#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "shelab/grid_noise.hpp"
#include "shelab/she_core.hpp"

namespace shelab {

/*!
 * Space-time index box [t_lo, t_hi] x [j_lo, j_hi] with an anchor point
 * (s0, x0) inside it. All Busemann values are reported relative to the anchor.
 */
struct Window
{
    int t_lo = 0;
    int t_hi = 0;
    int j_lo = 0;
    int j_hi = 0;
    int s0 = 0;
    int x0 = 0;

    int height() const noexcept { return t_hi - t_lo; }
    int width() const noexcept { return j_hi - j_lo + 1; }
    bool contains(int t, int j) const noexcept
    {
        return t >= t_lo && t <= t_hi && j >= j_lo && j <= j_hi;
    }
    bool operator==(Window const&) const = default;
};

//! Window from physical coordinates; the anchor defaults to (t_lo, position nearest 0 or x_lo).
Window make_window(GridSpec const& grid, double t_lo, double t_hi, double x_lo, double x_hi);
Window make_window(GridSpec const& grid, double t_lo, double t_hi, double x_lo, double x_hi,
                   double anchor_t, double anchor_x);

enum class BusemannMethod
{
    point_to_point,
    function_to_point,
};

char const* to_string(BusemannMethod method) noexcept;

/*!
 * Finite-depth Busemann estimate on a window.
 *
 * Stores L(t, y) = log Z(t, y | r, source) - log Z(s0, x0 | r, source) for
 * every (t, y) in the window, so b(s, x, t, y) = L(t, y) - L(s, x) is exactly
 * antisymmetric and additive. The full-domain profile at the top row is kept
 * for forward propagation.
 */
class BusemannEstimate
{
  public:
    BusemannEstimate(double lambda, double depth_r, BusemannMethod method, Window window,
                     std::vector<double> log_values, Field top);

    double lambda() const noexcept { return lambda_; }
    double depth_r() const noexcept { return depth_r_; }
    BusemannMethod method() const noexcept { return method_; }
    Window const& window() const noexcept { return window_; }
    GridSpec const& grid() const noexcept { return top_.grid(); }

    //! b(s0, x0, t, y).
    double from_anchor(int t, int y) const;
    //! b(s, x, t, y) = b(s0, x0, t, y) - b(s0, x0, s, x).
    double b(int s, int x, int t, int y) const;
    //! exp(b(s0, x0, t_hi, .)) over the whole domain.
    Field const& top() const noexcept { return top_; }

  private:
    double lambda_;
    double depth_r_;
    BusemannMethod method_;
    Window window_;
    std::vector<double> log_values_;  // row-major over (t - t_lo, y - j_lo)
    Field top_;
};

/*!
 * Domain-margin rules. Point sources need 4 sqrt(H) of room on both sides of
 * the source-window hull; tilted exponential profiles must place the
 * heat-smoothed tilt centre y + lambda H at least z sqrt(H) inside the domain
 * with Gaussian tail mass <= 1e-8 beyond each edge.
 */
struct Interval
{
    double lo = 0.0;
    double hi = 0.0;

    Interval hull(Interval const& other) const noexcept
    {
        return {lo < other.lo ? lo : other.lo, hi > other.hi ? hi : other.hi};
    }
};

//! Physical x-range the point-source rule requires.
Interval point_margin_need(double source_x, double x_lo, double x_hi, double horizon);
//! Physical x-range the tilted-profile rule requires.
Interval tilt_margin_need(double lambda, double x_lo, double x_hi, double horizon);

void check_point_margin(GridSpec const& grid, int source_site, int j_lo, int j_hi, double horizon);
void check_tilt_margin(GridSpec const& grid, double lambda, int j_lo, int j_hi, double horizon);

//! log Z(t, y | r, z_r) - log Z(s, x | r, z_r) with z_r the site nearest -lambda r.
BusemannEstimate busemann_p2p(NoiseField const& noise, double lambda, double depth_r,
                              Window const& window);

//! Same with the profile exp(lambda z) at time r in place of a point source.
BusemannEstimate busemann_l2p(NoiseField const& noise, double lambda, double depth_r,
                              Window const& window);

//! Propagates exp(b(s0, x0, t_hi, .)) to to_t; equals exp(b(s0, x0, to_t, .)).
Field busemann_propagate(BusemannEstimate const& b, NoiseField const& noise, int to_t);

struct MonotoneReport
{
    int pairs = 0;
    int violations = 0;
    double worst = 0.0;  // largest b(lambda_i) - b(lambda_j) over i < j, or 0
};

/*!
 * Counts pairs lambda_i < lambda_j with b^{lambda_i}(s0, x, s0, y) exceeding
 * b^{lambda_j}(s0, x, s0, y). Estimates must be ordered by lambda and share
 * window and depth.
 */
MonotoneReport check_monotone(std::vector<BusemannEstimate> const& estimates, int x_site,
                              int y_site);

struct ShapePoint
{
    int t = 0;
    int y = 0;
    double deviation = 0.0;
};

struct ShapeReport
{
    double lambda = 0.0;
    Window window;
    double a0_used = 0.0;
    double max_abs_deviation = 0.0;
    std::vector<ShapePoint> points;
};

//! Deviation b(s0, x0, t, y) - (lambda^2/2 + a0)(t - s0) - lambda (y - x0) over the window.
ShapeReport shape_diagnostic(BusemannEstimate const& b, double a0);

//! Independent noise replicas derived from one seed.
struct NoiseEnsemble
{
    GridSpec grid;
    std::uint64_t seed = 0;
    int replicas = 0;
    unsigned workers = 1;

    NoiseField replica(int i) const;
};

struct Estimate
{
    double value = 0.0;
    double stderr_ = 0.0;
};

//! log of Z(t0 + h, 0 | t0, 0) / rho(h, 0) for one realization, divided by h.
double lyapunov_sample(NoiseField const& noise, double t_horizon);

//! Same with log rho(h, 0) supplied, since the heat kernel does not depend on the noise.
double lyapunov_sample(NoiseField const& noise, double t_horizon, double log_rho_origin);
//! log of the discrete heat kernel from (t0, 0) to (t0 + h, 0) on the grid.
double heat_log_density_at_origin(GridSpec const& grid, double t_horizon);

//! Replica mean of lyapunov_sample with its standard error.
Estimate lyapunov_estimate(NoiseEnsemble const& ensemble, double t_horizon);

//! (1/|r|) log sum_w Z(0, 0 | r, w) exp(mu w) dx.
double dual_shape(NoiseField const& noise, double mu, double depth_r);

//! b^{lambda+eps}(0,0,0,1) - b^{lambda-eps}(0,0,0,1) with function-to-point estimates.
double exceptional_gap(NoiseField const& noise, double lambda, double eps, double depth_r);

// Exports.
void write_busemann_csv(std::ostream& out, BusemannEstimate const& b, bool header = true);
void write_shape_csv(std::ostream& out, ShapeReport const& report);
void write_shape_json(std::ostream& out, ShapeReport const& report);

}  // namespace shelab
