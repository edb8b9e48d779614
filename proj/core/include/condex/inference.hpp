#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "condex/gmrf.hpp"
#include "condex/model.hpp"
#include "condex/random.hpp"

namespace condex::inference {

enum class PriorKind { sd, range, ar1, noise_sd };

/// Pr(value > r) = p, except ar1 where the statement is Pr(|rho| > r) = p.
struct PcPrior {
  double r = 1.0;
  double p = 0.5;
};

/// Rate of the exponential on the distance scale: sd -> log(1/p)/r,
/// range -> -r log(1 - p) on 1/range, ar1 -> log(1/p)/d(r) with
/// d(rho) = sqrt(-log(1 - rho^2)).
double pc_rate(PriorKind kind, double r, double p);
double pc_prior_logdensity(PriorKind kind, double value, double r, double p);

/// log-normal with the normal mean -log 2 and variance 1 (median 0.5).
double beta_prior_logdensity(double beta, double log_mean = -0.69314718055994531, double log_sd = 1.0);

struct Priors {
  PcPrior noise_sd{0.1, 0.5};
  PcPrior residual_sd{1.0, 0.5};
  PcPrior residual_range{100.0, 0.5};
  PcPrior time_correlation{0.5, 0.5};
  /// Range-type prior on the parametric alpha decay scale lambda.
  PcPrior alpha_range{100.0, 0.5};
  double beta_log_mean = -0.69314718055994531;
  double beta_log_sd = 1.0;
};

/// Log prior density of the internal hyperparameter vector, Jacobians included.
double log_prior(const model::HyperLayout& layout, const Priors& priors, const Eigen::VectorXd& theta);

/// Gaussian conditional of the latent field given the data at one theta.
struct LatentConditional {
  /// Posterior mean, constrained when a constraint is registered.
  Eigen::VectorXd mean;
  /// Factor of Q + A^T W A / sigma2.
  std::shared_ptr<const gmrf::CholeskyFactor> factor;
  /// Constraint kriging on the posterior precision, when registered.
  std::shared_ptr<const gmrf::Kriging> kriging;
  double log_marginal = 0.0;

  /// One draw from the (constrained) conditional.
  Eigen::VectorXd sample(Rng& rng) const;
};

/// Gaussian-response latent model y = A w + e, e_i ~ N(0, sigma2 / weight_i)
/// for rows with weight_i > 0, w ~ N(0, Q^-1), optionally conditioned on B w = 0.
/// The log marginal likelihood log p(y) is exact.
struct GaussianSystem {
  SparseMatrix q;
  SparseMatrix a;
  Eigen::VectorXd y;
  Eigen::VectorXd weight;
  double sigma2 = 1.0;
  /// Optional constraint rows B (zero rows means unconstrained).
  Eigen::MatrixXd constraint;
};

LatentConditional solve_gaussian(const GaussianSystem& system);

/// log p(v | theta) for an assembled model.
double log_marginal_likelihood(const model::AssembledModel& m, const model::HyperParams& theta);

/// W | v, theta, with kriging on the constraint rows under condition_s0.
LatentConditional latent_posterior(const model::AssembledModel& m, const model::HyperParams& theta);

/// Reusable evaluator: keeps the posterior factor's symbolic analysis
/// between calls with unchanged sparsity.
class Evaluator {
 public:
  explicit Evaluator(std::shared_ptr<const model::AssembledModel> m);

  const model::AssembledModel& model() const noexcept { return *model_; }
  /// Latent prior precision Q(theta), block diagonal over (alpha, gamma, Z_1..Z_n).
  SparseMatrix prior_precision(const model::HyperParams& theta) const;
  LatentConditional conditional(const model::HyperParams& theta, bool keep_factor = true);

 private:
  std::shared_ptr<const model::AssembledModel> model_;
  std::shared_ptr<gmrf::CholeskyFactor> cache_;
};

struct FitConfig {
  /// Starting values; fields of non-estimated hyperparameters are used as fixed values.
  std::optional<model::HyperParams> start;
  double hessian_step = 1e-3;
  double value_tolerance = 1e-6;
  int max_iterations = 200;
  /// Monte-Carlo draws for the hyperparameter summaries.
  int summary_draws = 20000;
  std::uint64_t seed = 20240601;
  /// Worker threads for grid points (0 = hardware concurrency).
  int threads = 0;
};

struct GridPoint {
  Eigen::VectorXd theta;
  model::HyperParams params;
  double log_posterior = 0.0;
  double weight = 0.0;
  LatentConditional latent;
};

struct HyperSummary {
  std::string name;
  double mode = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct PosteriorFit {
  std::shared_ptr<const model::AssembledModel> model;
  Priors priors;
  Eigen::VectorXd theta_mode;
  model::HyperParams mode;
  /// Curvature of the negative log posterior at the mode (internal scale).
  Eigen::MatrixXd neg_hessian;
  double log_marginal_at_mode = 0.0;
  double log_posterior_at_mode = 0.0;
  std::vector<GridPoint> grid;
  std::vector<HyperSummary> summary;
  int iterations = 0;
  std::vector<double> trace;

  /// Hyperparameters at their posterior means (mode values for fixed ones).
  model::HyperParams posterior_mean_params() const;
  /// Grid-weighted latent mean.
  Eigen::VectorXd latent_mean() const;
};

PosteriorFit fit(const model::AssembledModel& m, const Priors& priors, const FitConfig& config = {});

/// Default starting point derived from the data and the site geometry.
model::HyperParams default_start(const model::AssembledModel& m);

struct PosteriorDraw {
  int grid_index = 0;
  model::HyperParams theta;
  Eigen::VectorXd w;
};

/// Draw s uses its own stream Rng(seed).split(s).
std::vector<PosteriorDraw> posterior_sample(const PosteriorFit& fit, int count, std::uint64_t seed);

/// Streaming variant; avoids holding all draws in memory.
template <class F>
void for_each_posterior_draw(const PosteriorFit& fit, int count, std::uint64_t seed, F&& visit);

PosteriorDraw posterior_draw(const PosteriorFit& fit, std::uint64_t seed, int index);

template <class F>
void for_each_posterior_draw(const PosteriorFit& fit, int count, std::uint64_t seed, F&& visit) {
  for (int s = 0; s < count; ++s) visit(posterior_draw(fit, seed, s));
}

}  // namespace condex::inference
