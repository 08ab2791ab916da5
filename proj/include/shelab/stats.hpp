#pragma once

#include <span>
#include <vector>

namespace shelab::stats {

//! Fixed-order pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<double const> values);

double mean(std::span<double const> values);

//! Unbiased sample variance.
double variance(std::span<double const> values);

double median(std::vector<double> values);

struct Moments
{
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;       // unbiased
    double mean_se = 0.0;        // sqrt(variance / n)
    double variance_se = 0.0;    // sqrt((m4 - var^2) / n), plug-in
    double excess_kurtosis = 0.0;
    double kurtosis_se = 0.0;    // sqrt(24 / n)
};

Moments moments(std::span<double const> values);

struct LinearFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

//! Ordinary least squares of y on x. Needs at least three points.
//! With hac_lag > 0 the slope standard error is the Newey-West estimate with
//! Bartlett weights up to that lag, for serially correlated residuals.
LinearFit linear_fit(std::span<double const> x, std::span<double const> y,
                     std::size_t hac_lag = 0);

}  // namespace shelab::stats
