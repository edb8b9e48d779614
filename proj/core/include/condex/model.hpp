#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "condex/episodes.hpp"
#include "condex/gmrf.hpp"
#include "condex/mesh.hpp"

namespace condex::model {

enum class AlphaForm { one, parametric, spline };
enum class BetaMode { fixed_zero, estimated };
enum class Residual { subtract_s0, condition_s0, none };

const char* to_string(AlphaForm v) noexcept;
const char* to_string(BetaMode v) noexcept;
const char* to_string(Residual v) noexcept;
AlphaForm parse_alpha_form(const std::string& s);
BetaMode parse_beta_mode(const std::string& s);
Residual parse_residual(const std::string& s);

struct ModelSpec {
  AlphaForm alpha = AlphaForm::spline;
  bool gamma = true;
  BetaMode beta = BetaMode::fixed_zero;
  Residual residual = Residual::subtract_s0;
  /// Time steps per episode; AR(1) residual in time when > 1.
  int ell = 1;
  double threshold_quantile = 0.95;
  /// Restrict beta to [0, 1) through a logit transform.
  bool beta_below_one = false;
  /// Exponent of the residual SPDE (1.5 gives nu = 0.5 in 2D).
  double zeta = 1.5;

  // Spline priors for alpha and gamma: 1D SPDE at fixed hyperparameters.
  int interior_knots = 14;
  int spline_degree = 2;
  double spline_range = 100.0;
  double spline_sd = 0.5;
  double spline_zeta = 2.0;
  /// AR(1) coefficient linking spline coefficients of consecutive time lags.
  double spline_rho = 0.8;

  /// Throws ConfigError on inconsistent combinations.
  void validate() const;
};

/// Spatial variants 0-6: 0 x + Z0; 1 x a + Z0; 2 x + g + Z0; 3 x a + g + Z0;
/// 4 x a + g + x^b Z0; 5 x a + x^b Z0; 6 x a + g.
ModelSpec table_model(int number);

/// exp(-(dist / lambda)^kappa_a).
double parametric_alpha(double dist, double lambda, double kappa_a);

enum class Hyper { noise_variance, residual_sd, residual_range, time_correlation, beta, alpha_range, alpha_shape };

const char* name(Hyper h) noexcept;

struct HyperParams {
  double sigma2 = 0.01;
  double sigma_z = 1.0;
  double range_z = 100.0;
  double rho_time = 0.0;
  double beta = 0.0;
  double lambda = 100.0;
  double kappa_a = 1.0;

  double get(Hyper h) const;
  void set(Hyper h, double value);
};

/// Which hyperparameters a spec estimates and how they map to the
/// unconstrained scale (log, log-odds of (1+rho)/2, logit).
class HyperLayout {
 public:
  HyperLayout() = default;
  HyperLayout(std::vector<Hyper> kinds, bool beta_below_one);

  const std::vector<Hyper>& kinds() const noexcept { return kinds_; }
  int size() const noexcept { return static_cast<int>(kinds_.size()); }
  bool beta_below_one() const noexcept { return beta_below_one_; }

  Eigen::VectorXd to_internal(const HyperParams& p) const;
  HyperParams from_internal(const Eigen::VectorXd& theta, const HyperParams& base = {}) const;
  /// log |d value / d internal| for one coordinate.
  double log_jacobian(Hyper h, double value) const;

 private:
  std::vector<Hyper> kinds_;
  bool beta_below_one_ = false;
};

struct LatentLayout {
  int alpha_offset = 0, alpha_size = 0;
  int gamma_offset = 0, gamma_size = 0;
  int z_offset = 0;
  /// Latent size of one episode's residual block (ell * m_Z).
  int z_block = 0;
  int episodes = 0;
  int total = 0;
};

/// Latent Gaussian design of one model variant. Observation rows run over
/// episodes, then time offsets, then sites (row = j*d*ell + t*d + i).
struct AssembledModel {
  ModelSpec spec;
  HyperLayout hyper;
  LatentLayout layout;
  int n = 0, d = 0, ell = 1, s0 = 0;
  double u = 0.0;

  std::vector<Point> sites;
  /// Distance of every site to the conditioning site.
  std::vector<double> site_distance;
  std::optional<mesh::Mesh1D> mesh1d;
  std::optional<mesh::Mesh2D> mesh2d;

  SparseMatrix a;
  Eigen::VectorXd response;
  /// 1 for rows entering the Gaussian likelihood, 0 for missing and conditioning rows.
  Eigen::VectorXd weight;
  std::vector<double> x;
  std::vector<int> conditioning_rows;

  /// Spline basis at the site distances (d x m_spline) and the residual-field
  /// interpolation (d x m_Z) with the conditioning-site row (1 x m_Z).
  SparseMatrix a_spline, a_s, a_s0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> a_spline_rows, a_s_rows;

  /// Fixed spline prior (ell * m_spline square) and its log-determinant.
  SparseMatrix q_spline;
  double q_spline_logdet = 0.0;
  std::optional<gmrf::SpdeBuilder> z_builder;

  /// One row per episode on its Z block (conditioning mechanism only).
  SparseMatrix constraint;

  /// A^T diag(weight) A.
  SparseMatrix normal_matrix;

  int rows() const noexcept { return n * d * ell; }
  int row_index(int episode, int t, int site) const noexcept { return (episode * ell + t) * d + site; }

  /// Known part of the linear predictor: x_j alpha(h) for fixed or parametric alpha.
  Eigen::VectorXd offset(const HyperParams& theta) const;
  /// Space-time residual precision Q_T (x) Q_S before the x_j^(-2 beta) scaling.
  SparseMatrix residual_precision(const HyperParams& theta) const;
  /// Per-episode precision scale x_j^(-2 beta).
  double residual_scale(int episode, const HyperParams& theta) const;

  /// Replaces the likelihood weights (e.g. for hold-out) and refreshes the normal matrix.
  AssembledModel with_weights(const Eigen::VectorXd& new_weight) const;
  void refresh_normal_matrix();
};

/// 1D knot mesh spanning [0, max distance to s0].
mesh::Mesh1D distance_mesh(const ModelSpec& spec, std::span<const Point> sites, int s0);

AssembledModel assemble(const ModelSpec& spec, const episodes::EpisodeSet& episodes, std::span<const Point> sites,
                        const mesh::Mesh2D& mesh2d, const mesh::Mesh1D& mesh1d);

/// Spline prior: 1D SPDE at (range_fixed, sd_fixed) on the constrained basis,
/// AR(1)(rho) (x) Q_spline when ell > 1.
SparseMatrix spline_prior_precision(const mesh::Mesh1D& mesh1d, double range_fixed, double sd_fixed, int ell, double rho,
                                    double zeta = 2.0);

/// x_j in every row of episode j.
Eigen::VectorXd alpha_one_offset(const episodes::EpisodeSet& episodes);

/// alpha(h, t) for a latent vector (1 for the constant form).
double alpha_at(const AssembledModel& m, const Eigen::VectorXd& w, const HyperParams& theta, double h, int t = 0);
/// gamma(h, t); 0 when the model has no gamma.
double gamma_at(const AssembledModel& m, const Eigen::VectorXd& w, double h, int t = 0);
/// Residual Z0 at (site, t) of one episode.
double residual_at(const AssembledModel& m, const Eigen::VectorXd& w, int episode, int site, int t);

}  // namespace condex::model
