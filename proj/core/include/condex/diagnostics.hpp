#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "condex/episodes.hpp"
#include "condex/inference.hpp"
#include "condex/simulate.hpp"

namespace condex::diagnostics {

/// WAIC = -2 (lppd - p_eff); smaller is better.
struct Waic {
  double waic = 0.0;
  double lppd = 0.0;
  double p_eff = 0.0;
};

struct CpoPit {
  /// Observation rows of the assembled model, in order.
  std::vector<int> rows;
  Eigen::VectorXd cpo;
  Eigen::VectorXd pit;
  /// False where a pointwise density underflowed; such rows are left out of the means.
  std::vector<bool> reliable;
  double mean_cpo = 0.0;
  double mean_log_cpo = 0.0;
};

/// Streaming accumulator of pointwise Gaussian predictive quantities over
/// posterior draws (eta, sigma2) for fixed observations y.
class PredictiveAccumulator {
 public:
  explicit PredictiveAccumulator(Eigen::VectorXd y);

  void add(const Eigen::VectorXd& eta, double sigma2);
  int draws() const noexcept { return draws_; }
  Waic waic() const;
  /// cpo/pit for every accumulated observation (rows left empty).
  CpoPit cpo_pit() const;

 private:
  Eigen::VectorXd y_;
  int draws_ = 0;
  // Running log-sum-exp of log p, -log p and log Phi - log p, plus Welford moments of log p.
  Eigen::VectorXd max_lp_, sum_lp_, max_inv_, sum_inv_, max_pit_, sum_pit_, mean_, m2_;
};

struct Predictive {
  Waic waic;
  CpoPit cpo;
};

/// Posterior mean and variance of the linear predictor at the given rows, one grid point.
struct PointwisePosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};
PointwisePosterior pointwise_posterior(const inference::GridPoint& g, const model::AssembledModel& m,
                                       const std::vector<int>& rows);

/// Leave-one-out predictive density and CDF at each row: per grid point the
/// expectation of 1/p(v_i | eta_i) over the Gaussian eta_i is taken in closed
/// form, then combined over the grid with harmonic weighting.
CpoPit loo_predictive(const inference::PosteriorFit& fit, const std::vector<int>& rows);

/// WAIC from `draws` posterior samples; CPO/PIT from loo_predictive. Rows with positive weight only.
Predictive predictive_diagnostics(const inference::PosteriorFit& fit, int draws, std::uint64_t seed);
Waic waic(const inference::PosteriorFit& fit, int draws, std::uint64_t seed);
CpoPit cpo_pit(const inference::PosteriorFit& fit, int draws, std::uint64_t seed);

struct CvResult {
  double rmse = 0.0;
  std::vector<int> rows;
  Eigen::VectorXd predicted;
  Eigen::VectorXd observed;
};

double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed);

/// Refits with the held-out rows masked and scores their posterior predictive means.
CvResult rmse_cv(const model::AssembledModel& m, const inference::Priors& priors, const inference::FitConfig& config,
                 const std::vector<bool>& holdout);

/// Rows of sites strictly east and south of the conditioning site.
std::vector<bool> quadrant_holdout(const model::AssembledModel& m);
/// Rows of the episodes assigned to `fold` by a seeded random k-fold split.
std::vector<bool> episode_fold_holdout(const model::AssembledModel& m, int folds, int fold, std::uint64_t seed);

/// Region 0 holds the conditioning site alone; regions 1..rings are equal-width
/// distance rings over (0, max distance].
std::vector<std::vector<int>> ring_regions(std::span<const double> site_distance, int s0, int rings);

/// Mean fraction of region sites above the Laplace q-quantile at time offset 0,
/// over simulated episodes whose conditioning value exceeds it.
std::vector<double> region_exceedance(const simulate::Simulator& sim, const std::vector<std::vector<int>>& regions,
                                      double q, int n_sim, std::uint64_t seed);
/// Empirical counterpart over the episodes with x_j above the quantile.
std::vector<double> region_exceedance_empirical(const episodes::EpisodeSet& eps,
                                                const std::vector<std::vector<int>>& regions, double q);

struct ChiPoint {
  int site = 0;
  double distance = 0.0;
  double q = 0.0;
  double chi = 0.0;
};

/// Model chi_q(s0, s) at time offset 0 from n_sim simulated episodes per level.
std::vector<ChiPoint> model_chi_q(const simulate::Simulator& sim, std::span<const int> sites, std::span<const double> qs,
                                  int n_sim, std::uint64_t seed);

/// Empirical chi_q(s0, s) from the full Laplace field, per site.
std::vector<ChiPoint> empirical_chi_q(const episodes::LaplaceField& field, std::span<const double> site_distance, int s0,
                                      std::span<const double> qs);

struct ChiBin {
  double lower = 0.0;
  double upper = 0.0;
  double q = 0.0;
  double chi = 0.0;
  int pairs = 0;
};

/// Averages chi over equal-width distance bins on (0, max distance]; empty bins hold NaN.
std::vector<ChiBin> bin_chi(const std::vector<ChiPoint>& points, int bins);

}  // namespace condex::diagnostics
