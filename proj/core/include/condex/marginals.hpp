#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace condex::marginals {

/// Semiparametric CDF for one site: rank-interpolated empirical body below the
/// threshold, generalized Pareto tail above it.
class MarginalModel {
 public:
  /// Validates and builds a model. `body` holds the observations below the
  /// threshold (any order); `sample_size` is the size of the full fitting sample.
  MarginalModel(double threshold, double exceed_prob, double gpd_scale, double gpd_shape,
                std::vector<double> body, std::size_t sample_size);

  double threshold() const noexcept { return threshold_; }
  double exceed_prob() const noexcept { return exceed_prob_; }
  double gpd_scale() const noexcept { return gpd_scale_; }
  double gpd_shape() const noexcept { return gpd_shape_; }
  const std::vector<double>& sorted_body() const noexcept { return body_; }
  std::size_t sample_size() const noexcept { return sample_size_; }

  double cdf(double y) const;
  /// Upper-tail probability; accurate for y far into the tail.
  double survival(double y) const;
  /// Inverse of cdf() on the body, exact inverse on the tail.
  double quantile(double p) const;

 private:
  void build_knots();

  double threshold_;
  double exceed_prob_;
  double gpd_scale_;
  double gpd_shape_;
  std::vector<double> body_;
  std::size_t sample_size_;
  // Piecewise-linear body CDF: strictly increasing (value, probability) knots,
  // ending at (threshold, 1 - exceed_prob).
  std::vector<double> knot_x_;
  std::vector<double> knot_p_;
};

struct GpdFit {
  double scale = 0.0;
  double shape = 0.0;
  double negative_log_likelihood = 0.0;
  int iterations = 0;
};

/// Maximum-likelihood generalized Pareto fit to threshold excesses (all > 0).
GpdFit fit_gpd_excesses(std::span<const double> excesses);

/// Fits the semiparametric marginal at the empirical `quantile` of `sample`.
/// Throws DataError("too_few_exceedances") for fewer than 50 points or 20
/// exceedances, NumericalError("gpd_not_converged") if the likelihood search fails.
MarginalModel fit_gpd(std::span<const double> sample, double quantile);

/// Data scale to standard Laplace scale.
double to_laplace(double y, const MarginalModel& m);
/// Standard Laplace scale to data scale.
double from_laplace(double x, const MarginalModel& m);

/// Empirical conditional exceedance probability
/// #{F_a(a) > q and F_b(b) > q} / #{F_a(a) > q} with average-rank margins.
double chi_q(std::span<const double> a, std::span<const double> b, double q);

/// Whole-field transform: per-row (site) marginal fit and Laplace transform of
/// the observed entries. Unobserved entries are left untouched.
struct FieldTransform {
  std::vector<MarginalModel> models;
  Eigen::MatrixXd laplace;
};
FieldTransform transform_field(const Eigen::MatrixXd& values, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& observed,
                               double quantile);

}  // namespace condex::marginals
