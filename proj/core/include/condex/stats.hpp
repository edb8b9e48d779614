#pragma once

#include <functional>
#include <span>
#include <vector>

namespace condex::stats {

inline constexpr double kLog2Pi = 1.8378770664093454836;

double normal_cdf(double z);
double normal_logpdf(double x, double mean, double sd);

double laplace_cdf(double x);
double laplace_quantile(double p);

/// Kolmogorov-Smirnov statistic sup |F_n - F| of a sample against a continuous CDF.
double ks_statistic(std::span<const double> sample, const std::function<double(double)>& cdf);
/// Asymptotic one-sample critical value at the 1% level, 1.6276 / sqrt(n).
double ks_critical_1pct(std::size_t n);

double mean(std::span<const double> x);
/// Unbiased sample variance; zero when fewer than two values.
double variance(std::span<const double> x);
/// Linear-interpolation (type 7) empirical quantile of an unsorted sample.
double quantile(std::span<const double> x, double p);
double quantile_sorted(std::span<const double> sorted, double p);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// log(sum(exp(x))) without overflow.
double log_sum_exp(std::span<const double> x);

}  // namespace condex::stats
