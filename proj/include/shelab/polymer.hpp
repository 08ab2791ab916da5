#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "shelab/busemann.hpp"
#include "shelab/grid_noise.hpp"
#include "shelab/she_core.hpp"

namespace shelab {

//! Pinned endpoint at `site` on the horizon column.
struct DeltaAt
{
    int site = 0;
    bool operator==(DeltaAt const&) const = default;
};

//! Free endpoint weighted by a nonnegative profile on the horizon column.
struct Density
{
    std::vector<double> profile;
    bool operator==(Density const&) const = default;
};

//! Busemann-Doob transform with slope lambda: the value function is the
//! function-to-point field propagated from exp(lambda z) at time index depth_idx.
struct BusemannDoob
{
    double lambda = 0.0;
    int depth_idx = 0;
    bool operator==(BusemannDoob const&) const = default;
};

using TerminalSpec = std::variant<DeltaAt, Density, BusemannDoob>;

//! Exact density over one column, normalized to sum * dx = 1.
struct Marginal
{
    GridSpec grid;
    int time_index = 0;
    std::vector<double> density;
};

/*!
 * Backward polymer chain from (start_t, start_y) down to the horizon column.
 *
 * V(s, .) is the value function (partition function to the terminal) for
 * s in [horizon, start_t]. A path at (s + 1, z') steps to (s, z) with
 * probability K(z' - z) V(s, z) / sum_u K(z' - u) V(s, u); the noise factor of
 * the step is common to all targets and cancels.
 */
class PolymerChain
{
  public:
    PolymerChain(int start_t, int start_y, TerminalSpec terminal, int horizon,
                 std::vector<Field> values, double row_residual);

    int start_t() const noexcept { return start_t_; }
    int start_y() const noexcept { return start_y_; }
    int horizon() const noexcept { return horizon_; }
    TerminalSpec const& terminal() const noexcept { return terminal_; }
    GridSpec const& grid() const noexcept { return values_.front().grid(); }
    HeatKernelDiscrete const& kernel() const noexcept { return kernel_; }

    //! V(s, .) for horizon <= s <= start_t.
    Field const& value(int s) const;

    /*!
     * Largest relative gap between V(s+1, z') and the one-step propagation of
     * V(s, .) evaluated at z', over all columns. Measures how exactly the
     * transition rows are normalized by the stored value function.
     */
    double row_normalization_residual() const noexcept { return row_residual_; }

  private:
    int start_t_;
    int start_y_;
    TerminalSpec terminal_;
    int horizon_;
    std::vector<Field> values_;  // values_[s - horizon]
    HeatKernelDiscrete kernel_;
    double row_residual_;
};

PolymerChain build_chain(NoiseField const& noise, int start_t, int start_y,
                         TerminalSpec const& terminal, int r_idx);

//! Transition density z -> pi(s - 1, z | s, z') (sums to 1 after dx weighting).
std::vector<double> transition_row(PolymerChain const& chain, int s, int z_from);

//! Exact marginal of X_s, obtained by pushing the start delta through the rows.
Marginal marginal(PolymerChain const& chain, int s_idx);

//! Marginals of every column from start_t down to the horizon (index 0 = start).
std::vector<Marginal> all_marginals(PolymerChain const& chain);

//! Sampled backward trajectories, row-major: path p visits sites[p * length + k]
//! at time index start_t - k.
struct PathSet
{
    int n_paths = 0;
    int length = 0;
    int start_t = 0;
    GridSpec grid;
    std::vector<int> sites;

    int site(int path, int k) const noexcept
    {
        return sites[static_cast<std::size_t>(path) * length + k];
    }
};

PathSet sample_paths(PolymerChain const& chain, int n_paths, std::uint64_t seed,
                     unsigned workers = 1);

//! Empirical column histogram of sampled paths, as a density.
Marginal empirical_marginal(PathSet const& paths, int s_idx);

//! Half L1 distance between densities on the same grid; lies in [0, 1].
double tv_distance(Marginal const& a, Marginal const& b);

//! Mean and standard error of (x_end - x_start) / (t_end - t_start) at the deepest column.
Estimate lln_slope(PathSet const& paths);

//! Exact probability that X_r / r lies in [-mu - band, -mu + band] under the chain.
double ldp_event_probability(PolymerChain const& chain, double mu, double band);
//! Same with the horizon marginal already computed, to evaluate several events cheaply.
double ldp_event_probability(PolymerChain const& chain, Marginal const& at_horizon, double mu,
                             double band);

/*!
 * Replica mean of -(1/|r|) log P(X_r / r in [-mu - band, -mu + band]) for the
 * Doob chain of slope lambda from (0, 0), with the value function seeded at
 * the deepest grid time.
 */
Estimate ldp_rate(NoiseEnsemble const& ensemble, double lambda, double mu, double depth_r,
                  double band);

struct DominanceReport
{
    int columns = 0;
    double worst_violation = 0.0;  // max over columns and z of CDF_b(z) - CDF_a(z), or 0
    int worst_column = -1;
};

/*!
 * Checks that chain_a is stochastically below chain_b in every column. The
 * chains must share grid, start time and horizon and be ordered either by start
 * site (same terminal) or by Doob slope (same start).
 */
DominanceReport check_dominance(PolymerChain const& chain_a, PolymerChain const& chain_b);

// Exports.
void write_paths_csv(std::ostream& out, PathSet const& paths);
void write_marginal_csv(std::ostream& out, Marginal const& m, bool header = true);

}  // namespace shelab
