#include "condex/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

#include "condex/error.hpp"
#include "condex/log.hpp"
#include "condex/marginals.hpp"
#include "condex/stats.hpp"

namespace condex::diagnostics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void push_lse(double v, double& mx, double& sum) {
  if (v == -kInf) return;
  if (v > mx) {
    sum = (mx == -kInf ? 0.0 : sum * std::exp(mx - v)) + 1.0;
    mx = v;
  } else {
    sum += std::exp(v - mx);
  }
}

double log_mean(double mx, double sum, int n) {
  if (mx == -kInf) return -kInf;
  return mx + std::log(sum) - std::log(static_cast<double>(n));
}

}  // namespace

PredictiveAccumulator::PredictiveAccumulator(Eigen::VectorXd y) : y_(std::move(y)) {
  const auto n = y_.size();
  max_lp_ = max_inv_ = max_pit_ = Eigen::VectorXd::Constant(n, -kInf);
  sum_lp_ = sum_inv_ = sum_pit_ = mean_ = m2_ = Eigen::VectorXd::Zero(n);
}

void PredictiveAccumulator::add(const Eigen::VectorXd& eta, double sigma2) {
  if (eta.size() != y_.size()) throw DataError("dimension_mismatch", "predictor length differs from the observations");
  const double sd = std::sqrt(sigma2);
  ++draws_;
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    const double z = (y_[i] - eta[i]) / sd;
    const double lp = stats::normal_logpdf(y_[i], eta[i], sd);
    push_lse(lp, max_lp_[i], sum_lp_[i]);
    push_lse(-lp, max_inv_[i], sum_inv_[i]);
    push_lse(std::log(stats::normal_cdf(z)) - lp, max_pit_[i], sum_pit_[i]);
    const double delta = lp - mean_[i];
    mean_[i] += delta / draws_;
    m2_[i] += delta * (lp - mean_[i]);
  }
}

Waic PredictiveAccumulator::waic() const {
  if (draws_ < 2) throw NumericalError("too_few_draws", "WAIC needs at least two posterior draws");
  Waic w;
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    w.lppd += log_mean(max_lp_[i], sum_lp_[i], draws_);
    w.p_eff += m2_[i] / (draws_ - 1);
  }
  w.waic = -2.0 * (w.lppd - w.p_eff);
  return w;
}

CpoPit PredictiveAccumulator::cpo_pit() const {
  if (draws_ < 1) throw NumericalError("too_few_draws", "CPO needs at least one posterior draw");
  CpoPit out;
  const auto n = y_.size();
  out.cpo.resize(n);
  out.pit.resize(n);
  out.reliable.assign(static_cast<std::size_t>(n), true);
  double sum_cpo = 0.0, sum_log = 0.0;
  int used = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_inv = log_mean(max_inv_[i], sum_inv_[i], draws_);
    const double log_cpo = -log_inv;
    out.cpo[i] = std::exp(log_cpo);
    out.pit[i] = std::clamp(std::exp(log_mean(max_pit_[i], sum_pit_[i], draws_) - log_inv), 0.0, 1.0);
    const bool ok = std::isfinite(log_cpo) && out.cpo[i] > 0.0;
    out.reliable[static_cast<std::size_t>(i)] = ok;
    if (!ok) continue;
    sum_cpo += out.cpo[i];
    sum_log += log_cpo;
    ++used;
  }
  if (used > 0) {
    out.mean_cpo = sum_cpo / used;
    out.mean_log_cpo = sum_log / used;
  }
  return out;
}

PointwisePosterior pointwise_posterior(const inference::GridPoint& g, const model::AssembledModel& m,
                                       const std::vector<int>& rows) {
  if (!g.latent.factor) throw NumericalError("missing_factor", "grid point carries no posterior factor");
  const SparseMatrix sigma = g.latent.factor->selected_inverse();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> a = m.a;
  const Eigen::VectorXd full = m.offset(g.params) + m.a * g.latent.mean;
  Eigen::MatrixXd av;
  Eigen::LLT<Eigen::MatrixXd> s_llt;
  if (g.latent.kriging) {
    av = m.a * g.latent.kriging->qinv_bt();
    s_llt.compute(g.latent.kriging->constraint_covariance());
  }
  PointwisePosterior out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.mean.resize(n);
  out.var.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int r = rows[static_cast<std::size_t>(k)];
    out.mean[k] = full[r];
    double v = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator p(a, r); p; ++p)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator q(a, r); q; ++q)
        v += p.value() * q.value() * sigma.coeff(p.col(), q.col());
    if (g.latent.kriging) {
      const Eigen::VectorXd c = av.row(r).transpose();
      v -= c.dot(s_llt.solve(c));
    }
    out.var[k] = std::max(v, 0.0);
  }
  return out;
}

CpoPit loo_predictive(const inference::PosteriorFit& fit, const std::vector<int>& rows) {
  const auto& m = *fit.model;
  const auto n = static_cast<Eigen::Index>(rows.size());
  double total = 0.0;
  for (const auto& g : fit.grid) total += g.weight;
  if (!(total > 0.0)) throw NumericalError("empty_grid", "posterior grid carries no weight");
  Eigen::VectorXd max_inv = Eigen::VectorXd::Constant(n, -kInf), sum_inv = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd max_pit = Eigen::VectorXd::Constant(n, -kInf), sum_pit = Eigen::VectorXd::Zero(n);
  std::vector<bool> reliable(static_cast<std::size_t>(n), true);
  for (const auto& g : fit.grid) {
    if (!(g.weight > 0.0)) continue;
    const double lw = std::log(g.weight / total);
    const auto post = pointwise_posterior(g, m, rows);
    for (Eigen::Index k = 0; k < n; ++k) {
      const int r = rows[static_cast<std::size_t>(k)];
      const double y = m.response[r];
      const double s2 = g.params.sigma2 / m.weight[r];
      double v = post.var[k];
      // Posterior variance of eta_i is below the noise variance whenever row i is in the data.
      if (v >= s2 * (1.0 - 1e-12)) {
        v = s2 * (1.0 - 1e-12);
        reliable[static_cast<std::size_t>(k)] = false;
      }
      const double tau2 = v * s2 / (s2 - v);
      const double mu = post.mean[k] + tau2 / s2 * (post.mean[k] - y);
      const double sd = std::sqrt(tau2 + s2);
      const double lp = stats::normal_logpdf(y, mu, sd);
      push_lse(lw - lp, max_inv[k], sum_inv[k]);
      push_lse(lw + std::log(stats::normal_cdf((y - mu) / sd)) - lp, max_pit[k], sum_pit[k]);
    }
  }
  CpoPit out;
  out.rows = rows;
  out.cpo.resize(n);
  out.pit.resize(n);
  out.reliable = reliable;
  double sum_cpo = 0.0, sum_log = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double log_inv = max_inv[k] + std::log(sum_inv[k]);
    const double log_cpo = -log_inv;
    out.cpo[k] = std::exp(log_cpo);
    out.pit[k] = std::clamp(std::exp(max_pit[k] + std::log(sum_pit[k]) - log_inv), 0.0, 1.0);
    const bool ok = reliable[static_cast<std::size_t>(k)] && std::isfinite(log_cpo) && out.cpo[k] > 0.0;
    out.reliable[static_cast<std::size_t>(k)] = ok;
    if (!ok) continue;
    sum_cpo += out.cpo[k];
    sum_log += log_cpo;
    ++used;
  }
  if (used > 0) {
    out.mean_cpo = sum_cpo / used;
    out.mean_log_cpo = sum_log / used;
  }
  return out;
}

Predictive predictive_diagnostics(const inference::PosteriorFit& fit, int draws, std::uint64_t seed) {
  if (draws < 2) throw ConfigError("invalid_value", "predictive diagnostics need at least two draws");
  if (draws < 500) log::warn("fewer than 500 posterior draws for WAIC; estimates will be noisy");
  const auto& m = *fit.model;
  std::vector<int> rows;
  for (int r = 0; r < m.rows(); ++r)
    if (m.weight[r] > 0.0) rows.push_back(r);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) y[static_cast<Eigen::Index>(k)] = m.response[rows[k]];
  PredictiveAccumulator acc(y);
  Eigen::VectorXd eta(y.size());
  inference::for_each_posterior_draw(fit, draws, seed, [&](const inference::PosteriorDraw& d) {
    const Eigen::VectorXd full = m.offset(d.theta) + m.a * d.w;
    for (std::size_t k = 0; k < rows.size(); ++k) eta[static_cast<Eigen::Index>(k)] = full[rows[k]];
    acc.add(eta, d.theta.sigma2);
  });
  Predictive p;
  p.waic = acc.waic();
  p.cpo = loo_predictive(fit, rows);
  return p;
}

Waic waic(const inference::PosteriorFit& fit, int draws, std::uint64_t seed) {
  return predictive_diagnostics(fit, draws, seed).waic;
}

CpoPit cpo_pit(const inference::PosteriorFit& fit, int draws, std::uint64_t seed) {
  return predictive_diagnostics(fit, draws, seed).cpo;
}

double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed) {
  if (predicted.size() != observed.size() || predicted.size() == 0)
    throw DataError("dimension_mismatch", "rmse needs two non-empty vectors of equal length");
  return std::sqrt((predicted - observed).squaredNorm() / static_cast<double>(predicted.size()));
}

CvResult rmse_cv(const model::AssembledModel& m, const inference::Priors& priors, const inference::FitConfig& config,
                 const std::vector<bool>& holdout) {
  if (static_cast<int>(holdout.size()) != m.rows()) throw DataError("dimension_mismatch", "holdout mask has the wrong length");
  CvResult out;
  Eigen::VectorXd w = m.weight;
  for (int r = 0; r < m.rows(); ++r)
    if (holdout[r] && m.weight[r] > 0.0) {
      out.rows.push_back(r);
      w[r] = 0.0;
    }
  if (out.rows.empty()) throw ConfigError("empty_holdout", "holdout contains no observed entries");
  const auto refit = inference::fit(m.with_weights(w), priors, config);
  Eigen::VectorXd pred = Eigen::VectorXd::Zero(m.rows());
  for (const auto& g : refit.grid) pred += g.weight * (m.offset(g.params) + m.a * g.latent.mean);
  const auto n = static_cast<Eigen::Index>(out.rows.size());
  out.predicted.resize(n);
  out.observed.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.predicted[k] = pred[out.rows[k]];
    out.observed[k] = m.response[out.rows[k]];
  }
  out.rmse = rmse(out.predicted, out.observed);
  return out;
}

std::vector<bool> quadrant_holdout(const model::AssembledModel& m) {
  std::vector<bool> h(static_cast<std::size_t>(m.rows()), false);
  const Point c = m.sites[m.s0];
  for (int j = 0; j < m.n; ++j)
    for (int t = 0; t < m.ell; ++t)
      for (int i = 0; i < m.d; ++i)
        if (m.sites[i].x > c.x && m.sites[i].y < c.y) h[m.row_index(j, t, i)] = true;
  return h;
}

std::vector<bool> episode_fold_holdout(const model::AssembledModel& m, int folds, int fold, std::uint64_t seed) {
  if (folds < 2 || fold < 0 || fold >= folds) throw ConfigError("invalid_value", "fold index must lie in [0, folds)");
  std::vector<int> order(m.n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = m.n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  std::vector<bool> h(static_cast<std::size_t>(m.rows()), false);
  for (int k = 0; k < m.n; ++k) {
    if (k % folds != fold) continue;
    const int j = order[k];
    for (int t = 0; t < m.ell; ++t)
      for (int i = 0; i < m.d; ++i) h[m.row_index(j, t, i)] = true;
  }
  return h;
}

std::vector<std::vector<int>> ring_regions(std::span<const double> site_distance, int s0, int rings) {
  if (rings < 1) throw ConfigError("invalid_value", "at least one ring is required");
  const int d = static_cast<int>(site_distance.size());
  if (s0 < 0 || s0 >= d) throw DataError("invalid_site", "conditioning site out of range");
  const double hmax = *std::max_element(site_distance.begin(), site_distance.end());
  std::vector<std::vector<int>> regions(static_cast<std::size_t>(rings) + 1);
  regions[0].push_back(s0);
  for (int i = 0; i < d; ++i) {
    if (i == s0) continue;
    const double h = site_distance[i];
    int k = static_cast<int>(std::ceil(h / hmax * rings));
    k = std::clamp(k, 1, rings);
    regions[k].push_back(i);
  }
  return regions;
}

namespace {

void check_regions(const std::vector<std::vector<int>>& regions, int d) {
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (regions[r].empty()) throw DataError("empty_region", "region " + std::to_string(r) + " contains no sites");
    for (int i : regions[r])
      if (i < 0 || i >= d) throw DataError("invalid_site", "region references a site out of range");
  }
}

void check_q(double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("invalid_quantile", "q must lie in (0,1)");
}

}  // namespace

std::vector<double> region_exceedance(const simulate::Simulator& sim, const std::vector<std::vector<int>>& regions,
                                      double q, int n_sim, std::uint64_t seed) {
  check_q(q);
  check_regions(regions, sim.model().d);
  if (n_sim < 1) throw ConfigError("invalid_value", "n_sim must be positive");
  const double ql = stats::laplace_quantile(q);
  std::vector<double> acc(regions.size(), 0.0);
  for (int k = 0; k < n_sim; ++k) {
    const auto e = sim.draw(seed, k, ql);
    for (std::size_t r = 0; r < regions.size(); ++r) {
      int c = 0;
      for (int i : regions[r]) c += e.values(i, 0) > ql;
      acc[r] += static_cast<double>(c) / static_cast<double>(regions[r].size());
    }
  }
  for (double& a : acc) a /= n_sim;
  return acc;
}

std::vector<double> region_exceedance_empirical(const episodes::EpisodeSet& eps,
                                                const std::vector<std::vector<int>>& regions, double q) {
  check_q(q);
  check_regions(regions, eps.sites);
  const double ql = stats::laplace_quantile(q);
  std::vector<double> acc(regions.size(), 0.0);
  int used = 0;
  for (const auto& e : eps.episodes) {
    if (!(e.x > ql)) continue;
    ++used;
    for (std::size_t r = 0; r < regions.size(); ++r) {
      int c = 0, seen = 0;
      for (int i : regions[r]) {
        const bool obs = i == eps.s0 || e.observed(i, 0);
        if (!obs) continue;
        ++seen;
        c += (i == eps.s0 ? e.x : e.values(i, 0)) > ql;
      }
      if (seen > 0) acc[r] += static_cast<double>(c) / seen;
    }
  }
  if (used == 0) throw DataError("no_exceedances", "no episode exceeds the requested quantile");
  for (double& a : acc) a /= used;
  return acc;
}

std::vector<ChiPoint> model_chi_q(const simulate::Simulator& sim, std::span<const int> sites, std::span<const double> qs,
                                  int n_sim, std::uint64_t seed) {
  if (n_sim < 1) throw ConfigError("invalid_value", "n_sim must be positive");
  const auto& m = sim.model();
  for (int s : sites)
    if (s < 0 || s >= m.d) throw DataError("invalid_site", "chi site out of range");
  std::vector<ChiPoint> out;
  for (double q : qs) {
    check_q(q);
    const double ql = stats::laplace_quantile(q);
    std::vector<int> count(sites.size(), 0);
    for (int k = 0; k < n_sim; ++k) {
      const auto e = sim.draw(seed, k, ql);
      for (std::size_t i = 0; i < sites.size(); ++i) count[i] += e.values(sites[i], 0) > ql;
    }
    for (std::size_t i = 0; i < sites.size(); ++i)
      out.push_back({sites[i], m.site_distance[sites[i]], q, static_cast<double>(count[i]) / n_sim});
  }
  return out;
}

std::vector<ChiPoint> empirical_chi_q(const episodes::LaplaceField& field, std::span<const double> site_distance, int s0,
                                      std::span<const double> qs) {
  const auto d = field.values.rows();
  if (s0 < 0 || s0 >= d) throw DataError("invalid_site", "conditioning site out of range");
  std::vector<ChiPoint> out;
  for (double q : qs)
    for (Eigen::Index s = 0; s < d; ++s) {
      std::vector<double> a, b;
      for (Eigen::Index t = 0; t < field.values.cols(); ++t)
        if (field.observed(s0, t) && field.observed(s, t)) {
          a.push_back(field.values(s0, t));
          b.push_back(field.values(s, t));
        }
      try {
        out.push_back({static_cast<int>(s), site_distance[s], q, marginals::chi_q(a, b, q)});
      } catch (const DataError&) {
        // Too few pairs or no exceedances at this level: the site has no estimate.
      }
    }
  return out;
}

std::vector<ChiBin> bin_chi(const std::vector<ChiPoint>& points, int bins) {
  if (bins < 1) throw ConfigError("invalid_value", "at least one distance bin is required");
  double hmax = 0.0;
  std::vector<double> levels;
  for (const auto& p : points) {
    hmax = std::max(hmax, p.distance);
    if (std::find(levels.begin(), levels.end(), p.q) == levels.end()) levels.push_back(p.q);
  }
  std::vector<ChiBin> out;
  if (!(hmax > 0.0)) return out;
  for (double q : levels)
    for (int b = 0; b < bins; ++b) {
      ChiBin bin{hmax * b / bins, hmax * (b + 1) / bins, q, std::numeric_limits<double>::quiet_NaN(), 0};
      double sum = 0.0;
      for (const auto& p : points) {
        if (p.q != q || !(p.distance > 0.0)) continue;
        const int k = std::clamp(static_cast<int>(std::ceil(p.distance / hmax * bins)) - 1, 0, bins - 1);
        if (k != b) continue;
        sum += p.chi;
        ++bin.pairs;
      }
      if (bin.pairs > 0) bin.chi = sum / bin.pairs;
      out.push_back(bin);
    }
  return out;
}

}  // namespace condex::diagnostics
