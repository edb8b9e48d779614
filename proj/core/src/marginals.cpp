#include "condex/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "condex/error.hpp"
#include "condex/log.hpp"
#include "condex/optimize.hpp"
#include "condex/stats.hpp"

namespace condex::marginals {
namespace {

constexpr std::size_t kMinSample = 50;
constexpr std::size_t kMinExceedances = 20;
constexpr double kShapeEps = 1e-9;

double gpd_negative_log_likelihood(std::span<const double> z, double log_scale, double shape) {
  const double scale = std::exp(log_scale);
  const double n = static_cast<double>(z.size());
  if (std::abs(shape) < kShapeEps) {
    double s = 0.0;
    for (double v : z) s += v;
    return n * log_scale + s / scale;
  }
  double s = 0.0;
  for (double v : z) {
    const double t = shape * v / scale;
    if (t <= -1.0) return std::numeric_limits<double>::infinity();
    s += std::log1p(t);
  }
  return n * log_scale + (1.0 + 1.0 / shape) * s;
}

// 1 - q rounded to 15 significant digits, so decimal inputs such as 0.95 give
// exactly 0.05 rather than 0.050000000000000044.
double complement_probability(double q) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", 1.0 - q);
  return std::strtod(buf, nullptr);
}

}  // namespace

MarginalModel::MarginalModel(double threshold, double exceed_prob, double gpd_scale, double gpd_shape,
                             std::vector<double> body, std::size_t sample_size)
    : threshold_(threshold),
      exceed_prob_(exceed_prob),
      gpd_scale_(gpd_scale),
      gpd_shape_(gpd_shape),
      body_(std::move(body)),
      sample_size_(sample_size) {
  if (!(exceed_prob_ > 0.0 && exceed_prob_ < 1.0))
    throw DataError("invalid_marginal", "exceedance probability must lie in (0,1)");
  if (!(gpd_scale_ > 0.0) || !std::isfinite(gpd_scale_))
    throw DataError("invalid_marginal", "GPD scale must be positive");
  if (!std::isfinite(gpd_shape_) || !std::isfinite(threshold_))
    throw DataError("invalid_marginal", "non-finite marginal parameter");
  std::sort(body_.begin(), body_.end());
  if (!body_.empty() && body_.back() > threshold_)
    throw DataError("invalid_marginal", "body observations must not exceed the threshold");
  if (sample_size_ < body_.size()) throw DataError("invalid_marginal", "sample size smaller than body size");
  build_knots();
}

void MarginalModel::build_knots() {
  const double top = 1.0 - exceed_prob_;
  const double denom = static_cast<double>(sample_size_) + 1.0;
  knot_x_.clear();
  knot_p_.clear();
  for (std::size_t i = 0; i < body_.size(); ++i) {
    // Right-continuous at ties: a repeated value takes its largest rank.
    if (i + 1 < body_.size() && body_[i + 1] == body_[i]) continue;
    if (body_[i] >= threshold_) break;
    const double p = static_cast<double>(i + 1) / denom;
    if (p >= top) break;
    knot_x_.push_back(body_[i]);
    knot_p_.push_back(p);
  }
  knot_x_.push_back(threshold_);
  knot_p_.push_back(top);
}

double MarginalModel::survival(double y) const {
  if (y < threshold_) return 1.0 - cdf(y);
  const double z = (y - threshold_) / gpd_scale_;
  if (std::abs(gpd_shape_) < kShapeEps) return exceed_prob_ * std::exp(-z);
  const double t = 1.0 + gpd_shape_ * z;
  if (t <= 0.0) return 0.0;
  return exceed_prob_ * std::exp(-std::log(t) / gpd_shape_);
}

double MarginalModel::cdf(double y) const {
  if (y >= threshold_) return 1.0 - survival(y);
  if (y <= knot_x_.front()) return knot_p_.front();
  const auto it = std::upper_bound(knot_x_.begin(), knot_x_.end(), y);
  const auto hi = static_cast<std::size_t>(it - knot_x_.begin());
  const auto lo = hi - 1;
  const double w = (y - knot_x_[lo]) / (knot_x_[hi] - knot_x_[lo]);
  return knot_p_[lo] + w * (knot_p_[hi] - knot_p_[lo]);
}

double MarginalModel::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("quantile: p must lie in (0,1)");
  const double top = 1.0 - exceed_prob_;
  if (p >= top) {
    const double s = 1.0 - p;
    const double t = std::log(exceed_prob_ / s);
    if (std::abs(gpd_shape_) < kShapeEps) return threshold_ + gpd_scale_ * t;
    return threshold_ + gpd_scale_ / gpd_shape_ * std::expm1(gpd_shape_ * t);
  }
  if (p <= knot_p_.front()) return knot_x_.front();
  const auto it = std::upper_bound(knot_p_.begin(), knot_p_.end(), p);
  const auto hi = static_cast<std::size_t>(it - knot_p_.begin());
  const auto lo = hi - 1;
  const double w = (p - knot_p_[lo]) / (knot_p_[hi] - knot_p_[lo]);
  return knot_x_[lo] + w * (knot_x_[hi] - knot_x_[lo]);
}

GpdFit fit_gpd_excesses(std::span<const double> excesses) {
  const double m = stats::mean(excesses);
  const double v = stats::variance(excesses);
  // Method-of-moments start.
  double shape0 = 0.5 * (1.0 - m * m / v);
  double scale0 = 0.5 * m * (m * m / v + 1.0);
  shape0 = std::clamp(shape0, -0.45, 0.45);
  if (!(scale0 > 0.0)) scale0 = m;
  const double zmax = *std::max_element(excesses.begin(), excesses.end());
  if (shape0 < 0.0 && 1.0 + shape0 * zmax / scale0 <= 0.0) shape0 = -0.9 * scale0 / zmax;

  const optim::Objective nll = [&](const Eigen::VectorXd& p) {
    return gpd_negative_log_likelihood(excesses, p[0], p[1]);
  };
  optim::NelderMeadOptions options;
  options.initial_step = 0.1;
  options.tolerance = 1e-12;
  options.max_iterations = 4000;
  const auto r = optim::nelder_mead(nll, Eigen::Vector2d(std::log(scale0), shape0), options);
  if (!r.converged || !std::isfinite(r.value)) {
    std::ostringstream os;
    os << "GPD maximum-likelihood search failed: " << r.status << " after " << r.iterations << " iterations";
    throw NumericalError("gpd_not_converged", os.str());
  }
  return {std::exp(r.x[0]), r.x[1], r.value, r.iterations};
}

MarginalModel fit_gpd(std::span<const double> sample, double quantile) {
  if (!(quantile > 0.5 && quantile < 1.0))
    throw DataError("invalid_quantile", "marginal threshold quantile must lie in (0.5, 1)");
  if (sample.size() < kMinSample)
    throw DataError("too_few_exceedances", "marginal fit needs at least 50 observations, got " +
                                               std::to_string(sample.size()));
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double v = stats::quantile_sorted(sorted, quantile);

  std::vector<double> excesses;
  std::vector<double> body;
  for (double y : sorted) {
    if (y > v)
      excesses.push_back(y - v);
    else if (y < v)
      body.push_back(y);
  }
  if (excesses.size() < kMinExceedances)
    throw DataError("too_few_exceedances", "marginal fit needs at least 20 exceedances of the threshold, got " +
                                               std::to_string(excesses.size()));

  const auto gpd = fit_gpd_excesses(excesses);
  if (gpd.shape <= -0.5 || gpd.shape >= 0.5) {
    std::ostringstream os;
    os << "fitted GPD shape " << gpd.shape << " lies outside (-0.5, 0.5)";
    log::warn(os.str());
  }
  return MarginalModel(v, complement_probability(quantile), gpd.scale, gpd.shape, std::move(body), sample.size());
}

double to_laplace(double y, const MarginalModel& m) {
  if (y >= m.threshold()) {
    const double z = (y - m.threshold()) / m.gpd_scale();
    const double xi = m.gpd_shape();
    double log_ratio;  // log(lambda_v / survival)
    if (std::abs(xi) < kShapeEps) {
      log_ratio = z;
    } else {
      const double t = xi * z;
      if (t <= -1.0)
        throw DataError("laplace_clamp", "value lies beyond the upper endpoint of the fitted GPD tail");
      log_ratio = std::log1p(t) / xi;
    }
    // x = -log(2 S) with S = lambda_v exp(-log_ratio).
    return -std::log(2.0 * m.exceed_prob()) + log_ratio;
  }
  const double p = m.cdf(y);
  if (!(p > 0.0 && p < 1.0)) throw DataError("laplace_clamp", "marginal CDF reached 0 or 1");
  return p <= 0.5 ? std::log(2.0 * p) : -std::log(2.0 * (1.0 - p));
}

double from_laplace(double x, const MarginalModel& m) {
  if (!std::isfinite(x)) throw DataError("laplace_overflow", "non-finite Laplace value");
  const double x_threshold = -std::log(2.0 * m.exceed_prob());
  if (x >= x_threshold) {
    const double t = x - x_threshold;  // log(lambda_v / survival)
    const double xi = m.gpd_shape();
    if (std::abs(xi) < kShapeEps) return m.threshold() + m.gpd_scale() * t;
    return m.threshold() + m.gpd_scale() / xi * std::expm1(xi * t);
  }
  const double p = x <= 0.0 ? 0.5 * std::exp(x) : 1.0 - 0.5 * std::exp(-x);
  return m.quantile(p);
}

double chi_q(std::span<const double> a, std::span<const double> b, double q) {
  if (a.size() != b.size()) throw DataError("length_mismatch", "chi_q: series lengths differ");
  if (a.size() < 20) throw DataError("too_few_observations", "chi_q needs at least 20 paired observations");
  if (!(q > 0.0 && q < 1.0)) throw DataError("invalid_quantile", "chi_q: q must lie in (0,1)");
  const auto ra = stats::average_ranks(a);
  const auto rb = stats::average_ranks(b);
  const double n = static_cast<double>(a.size());
  std::size_t conditioning = 0;
  std::size_t joint = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ra[i] / n > q) {
      ++conditioning;
      if (rb[i] / n > q) ++joint;
    }
  }
  if (conditioning == 0) throw DataError("no_exceedances", "chi_q: no conditioning exceedances at this level");
  return static_cast<double>(joint) / static_cast<double>(conditioning);
}

FieldTransform transform_field(const Eigen::MatrixXd& values,
                               const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& observed,
                               double quantile) {
  FieldTransform out;
  out.laplace = Eigen::MatrixXd::Constant(values.rows(), values.cols(), std::numeric_limits<double>::quiet_NaN());
  out.models.reserve(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    std::vector<double> sample;
    for (Eigen::Index t = 0; t < values.cols(); ++t)
      if (observed(i, t)) sample.push_back(values(i, t));
    try {
      out.models.push_back(fit_gpd(sample, quantile));
    } catch (const Error& e) {
      throw DataError(e.kind(), "site row " + std::to_string(i) + ": " + e.what());
    }
    for (Eigen::Index t = 0; t < values.cols(); ++t)
      if (observed(i, t)) out.laplace(i, t) = to_laplace(values(i, t), out.models.back());
  }
  return out;
}

}  // namespace condex::marginals
