#include "shelab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shelab::stats {

double pairwise_sum(std::span<double const> values)
{
    if (values.size() <= 8) {
        double acc = 0.0;
        for (double v : values) {
            acc += v;
        }
        return acc;
    }
    std::size_t const half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double mean(std::span<double const> values)
{
    if (values.empty()) {
        throw std::invalid_argument("mean of empty sample");
    }
    return pairwise_sum(values) / static_cast<double>(values.size());
}

double variance(std::span<double const> values)
{
    if (values.size() < 2) {
        throw std::invalid_argument("variance needs at least two values");
    }
    double const m = mean(values);
    std::vector<double> sq(values.size());
    std::transform(values.begin(), values.end(), sq.begin(),
                   [m](double v) { return (v - m) * (v - m); });
    return pairwise_sum(sq) / static_cast<double>(values.size() - 1);
}

double median(std::vector<double> values)
{
    if (values.empty()) {
        throw std::invalid_argument("median of empty sample");
    }
    std::sort(values.begin(), values.end());
    std::size_t const n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Moments moments(std::span<double const> values)
{
    Moments out;
    out.count = values.size();
    out.mean = mean(values);
    auto const n = static_cast<double>(values.size());
    std::vector<double> c2(values.size());
    std::vector<double> c4(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double const d = values[i] - out.mean;
        c2[i] = d * d;
        c4[i] = c2[i] * c2[i];
    }
    double const m2 = pairwise_sum(c2) / n;
    double const m4 = pairwise_sum(c4) / n;
    out.variance = values.size() > 1 ? m2 * n / (n - 1.0) : 0.0;
    out.mean_se = std::sqrt(out.variance / n);
    out.variance_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    out.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    out.kurtosis_se = std::sqrt(24.0 / n);
    return out;
}

LinearFit linear_fit(std::span<double const> x, std::span<double const> y, std::size_t hac_lag)
{
    if (x.size() != y.size() || x.size() < 3) {
        throw std::invalid_argument("linear_fit needs matching samples of size >= 3");
    }
    double const mx = mean(x);
    double const my = mean(y);
    std::vector<double> sxx(x.size());
    std::vector<double> sxy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx[i] = (x[i] - mx) * (x[i] - mx);
        sxy[i] = (x[i] - mx) * (y[i] - my);
    }
    double const denom = pairwise_sum(sxx);
    if (!(denom > 0.0)) {
        throw std::invalid_argument("linear_fit with degenerate abscissae");
    }
    LinearFit fit;
    fit.slope = pairwise_sum(sxy) / denom;
    fit.intercept = my - fit.slope * mx;
    std::vector<double> res(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double const r = y[i] - fit.intercept - fit.slope * x[i];
        res[i] = r * r;
    }
    double const sigma2 = pairwise_sum(res) / static_cast<double>(x.size() - 2);
    fit.slope_se = std::sqrt(sigma2 / denom);
    if (hac_lag == 0) {
        return fit;
    }
    std::vector<double> score(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        score[i] = (x[i] - mx) * (y[i] - fit.intercept - fit.slope * x[i]);
    }
    double const lag_count = static_cast<double>(hac_lag + 1);
    double meat = 0.0;
    for (std::size_t k = 0; k <= hac_lag && k < x.size(); ++k) {
        std::vector<double> prod(x.size() - k);
        for (std::size_t i = 0; i + k < x.size(); ++i) {
            prod[i] = score[i] * score[i + k];
        }
        double const wk = k == 0 ? 1.0 : 2.0 * (1.0 - static_cast<double>(k) / lag_count);
        meat += wk * pairwise_sum(prod);
    }
    double const scale = static_cast<double>(x.size()) / static_cast<double>(x.size() - 2);
    fit.slope_se = std::sqrt(std::max(meat, 0.0) * scale) / denom;
    return fit;
}

}  // namespace shelab::stats
