#include "condex/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "condex/error.hpp"
#include "condex/log.hpp"
#include "condex/optimize.hpp"
#include "condex/stats.hpp"

namespace condex::inference {

using model::Hyper;
using model::HyperParams;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_pc(double r, double p) {
  if (!(r > 0.0) || !std::isfinite(r) || !(p > 0.0 && p < 1.0))
    throw ConfigError("invalid_prior", "PC prior needs r > 0 and p in (0,1)");
}

double ar1_distance(double rho) { return std::sqrt(-std::log1p(-rho * rho)); }

// log N(0; m, S) for a small dense covariance.
double log_normal_zero(const Eigen::VectorXd& m, const Eigen::MatrixXd& s) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("rank_deficient_constraint", "constraint covariance is singular");
  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const Eigen::VectorXd z = llt.matrixL().solve(m);
  return -0.5 * (static_cast<double>(m.size()) * stats::kLog2Pi + logdet + z.squaredNorm());
}

// Shared tail of the Gaussian conditional once Q_post has been factorized.
LatentConditional finish(std::shared_ptr<const gmrf::CholeskyFactor> post, const SparseMatrix& q, double q_logdet,
                         const SparseMatrix& a, const Eigen::VectorXd& y, const Eigen::VectorXd& weight, double sigma2,
                         const Eigen::MatrixXd& b, const Eigen::MatrixXd& prior_b_cov) {
  const Eigen::VectorXd wy = weight.cwiseProduct(y) / sigma2;
  const Eigen::VectorXd rhs = a.transpose() * wy;
  Eigen::VectorXd mu = post->solve(rhs);
  const Eigen::VectorXd fitted = a * mu;

  double ll = 0.5 * (q_logdet - post->log_determinant()) - 0.5 * mu.dot(q * mu);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (weight[i] <= 0.0) continue;
    const double r = y[i] - fitted[i];
    ll += -0.5 * (stats::kLog2Pi + std::log(sigma2 / weight[i])) - 0.5 * weight[i] * r * r / sigma2;
  }

  LatentConditional out;
  if (b.rows() > 0) {
    auto kr = std::make_shared<gmrf::Kriging>(*post, b);
    ll += log_normal_zero(b * mu, kr->constraint_covariance()) - log_normal_zero(Eigen::VectorXd::Zero(b.rows()), prior_b_cov);
    mu = kr->apply(mu);
    out.kriging = std::move(kr);
  }
  out.mean = std::move(mu);
  out.factor = std::move(post);
  out.log_marginal = ll;
  return out;
}

}  // namespace

double pc_rate(PriorKind kind, double r, double p) {
  switch (kind) {
    case PriorKind::sd:
    case PriorKind::noise_sd:
      check_pc(r, p);
      return -std::log(p) / r;
    case PriorKind::range:
      check_pc(r, p);
      return -r * std::log1p(-p);
    case PriorKind::ar1:
      check_pc(r, p);
      if (!(r < 1.0)) throw ConfigError("invalid_prior", "AR(1) PC prior needs r in (0,1)");
      return -std::log(p) / ar1_distance(r);
  }
  return 0.0;
}

double pc_prior_logdensity(PriorKind kind, double value, double r, double p) {
  const double rate = pc_rate(kind, r, p);
  switch (kind) {
    case PriorKind::sd:
    case PriorKind::noise_sd:
      if (value < 0.0) return kNegInf;
      return std::log(rate) - rate * value;
    case PriorKind::range:
      if (!(value > 0.0)) return kNegInf;
      return std::log(rate) - 2.0 * std::log(value) - rate / value;
    case PriorKind::ar1: {
      if (!(std::abs(value) < 1.0)) return kNegInf;
      const double a = std::abs(value);
      if (a < 1e-8) return std::log(0.5 * rate);
      const double dist = ar1_distance(a);
      return std::log(0.5 * rate) - rate * dist + std::log(a / ((1.0 - a * a) * dist));
    }
  }
  return kNegInf;
}

double beta_prior_logdensity(double beta, double log_mean, double log_sd) {
  if (!(beta > 0.0)) return kNegInf;
  const double lb = std::log(beta);
  return stats::normal_logpdf(lb, log_mean, log_sd) - lb;
}

double log_prior(const model::HyperLayout& layout, const Priors& priors, const Eigen::VectorXd& theta) {
  const HyperParams p = layout.from_internal(theta);
  double lp = 0.0;
  for (Hyper h : layout.kinds()) {
    const double v = p.get(h);
    switch (h) {
      case Hyper::noise_variance: {
        // Prior stated on the noise sd; density of the variance times its Jacobian.
        const double sd = std::sqrt(v);
        lp += pc_prior_logdensity(PriorKind::noise_sd, sd, priors.noise_sd.r, priors.noise_sd.p) - std::log(2.0 * sd);
        break;
      }
      case Hyper::residual_sd:
        lp += pc_prior_logdensity(PriorKind::sd, v, priors.residual_sd.r, priors.residual_sd.p);
        break;
      case Hyper::residual_range:
        lp += pc_prior_logdensity(PriorKind::range, v, priors.residual_range.r, priors.residual_range.p);
        break;
      case Hyper::time_correlation:
        lp += pc_prior_logdensity(PriorKind::ar1, v, priors.time_correlation.r, priors.time_correlation.p);
        break;
      case Hyper::beta:
        lp += beta_prior_logdensity(v, priors.beta_log_mean, priors.beta_log_sd);
        break;
      case Hyper::alpha_range:
        lp += pc_prior_logdensity(PriorKind::range, v, priors.alpha_range.r, priors.alpha_range.p);
        break;
      case Hyper::alpha_shape:
        lp += -std::log(2.0);
        break;
    }
    lp += layout.log_jacobian(h, v);
  }
  return lp;
}

Eigen::VectorXd LatentConditional::sample(Rng& rng) const {
  const Eigen::VectorXd e = factor->sample_transform(rng.normal_vector(factor->size()));
  if (kriging) return mean + kriging->apply(e);
  return mean + e;
}

LatentConditional solve_gaussian(const GaussianSystem& s) {
  if (s.a.cols() != s.q.rows() || s.a.rows() != s.y.size() || s.weight.size() != s.y.size())
    throw DataError("dimension_mismatch", "Gaussian system dimensions disagree");
  if (!(s.sigma2 > 0.0)) throw ConfigError("invalid_hyper", "noise variance must be positive");
  gmrf::CholeskyFactor prior(s.q);
  const SparseMatrix normal = SparseMatrix(s.a.transpose()) * (s.weight.asDiagonal() * s.a);
  const SparseMatrix qpost = s.q + normal / s.sigma2;
  auto post = std::make_shared<gmrf::CholeskyFactor>(qpost);
  Eigen::MatrixXd prior_cov;
  if (s.constraint.rows() > 0) prior_cov = s.constraint * prior.solve(Eigen::MatrixXd(s.constraint.transpose()));
  return finish(post, s.q, prior.log_determinant(), s.a, s.y, s.weight, s.sigma2, s.constraint, prior_cov);
}

Evaluator::Evaluator(std::shared_ptr<const model::AssembledModel> m) : model_(std::move(m)) {}

SparseMatrix Evaluator::prior_precision(const HyperParams& theta) const {
  const auto& m = *model_;
  const auto& L = m.layout;
  std::vector<Triplet> t;
  auto put = [&t](const SparseMatrix& q, int offset, double scale) {
    for (Eigen::Index c = 0; c < q.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(q, c); it; ++it)
        t.emplace_back(offset + static_cast<int>(it.row()), offset + static_cast<int>(c), scale * it.value());
  };
  if (L.alpha_size > 0) put(m.q_spline, L.alpha_offset, 1.0);
  if (L.gamma_size > 0) put(m.q_spline, L.gamma_offset, 1.0);
  if (L.z_block > 0) {
    const SparseMatrix qst = m.residual_precision(theta);
    t.reserve(t.size() + static_cast<std::size_t>(qst.nonZeros()) * m.n);
    for (int j = 0; j < m.n; ++j) put(qst, L.z_offset + j * L.z_block, m.residual_scale(j, theta));
  }
  SparseMatrix q(L.total, L.total);
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

LatentConditional Evaluator::conditional(const HyperParams& theta, bool keep_factor) {
  const auto& m = *model_;
  const auto& L = m.layout;
  if (!(theta.sigma2 > 0.0)) throw ConfigError("invalid_hyper", "noise variance must be positive");
  const Eigen::VectorXd y = m.response - m.offset(theta);
  const SparseMatrix q = prior_precision(theta);

  double q_logdet = 0.0;
  if (L.alpha_size > 0) q_logdet += m.q_spline_logdet;
  if (L.gamma_size > 0) q_logdet += m.q_spline_logdet;
  Eigen::MatrixXd b, prior_cov;
  if (L.z_block > 0) {
    const gmrf::CholeskyFactor fst(m.residual_precision(theta));
    q_logdet += m.n * fst.log_determinant();
    for (int j = 0; j < m.n; ++j) q_logdet += L.z_block * std::log(m.residual_scale(j, theta));
    if (m.spec.residual == model::Residual::condition_s0) {
      Eigen::VectorXd b0 = Eigen::VectorXd::Zero(L.z_block);
      for (Eigen::Index c = 0; c < m.a_s0.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m.a_s0, c); it; ++it) b0[c] = it.value();
      const double e = b0.dot(fst.solve(b0));
      prior_cov = Eigen::MatrixXd::Zero(m.n, m.n);
      for (int j = 0; j < m.n; ++j) prior_cov(j, j) = e / m.residual_scale(j, theta);
      b = Eigen::MatrixXd(m.constraint);
    }
  }

  const SparseMatrix qpost = q + m.normal_matrix / theta.sigma2;
  if (!cache_) cache_ = std::make_shared<gmrf::CholeskyFactor>();
  cache_->refactor(qpost);
  std::shared_ptr<const gmrf::CholeskyFactor> post =
      keep_factor ? std::make_shared<gmrf::CholeskyFactor>(*cache_) : std::shared_ptr<const gmrf::CholeskyFactor>(cache_);
  return finish(post, q, q_logdet, m.a, y, m.weight, theta.sigma2, b, prior_cov);
}

double log_marginal_likelihood(const model::AssembledModel& m, const HyperParams& theta) {
  Evaluator ev(std::make_shared<const model::AssembledModel>(m));
  return ev.conditional(theta, false).log_marginal;
}

LatentConditional latent_posterior(const model::AssembledModel& m, const HyperParams& theta) {
  Evaluator ev(std::make_shared<const model::AssembledModel>(m));
  return ev.conditional(theta, true);
}

HyperParams default_start(const model::AssembledModel& m) {
  std::vector<double> r;
  for (int j = 0; j < m.n; ++j)
    for (int t = 0; t < m.ell; ++t)
      for (int i = 0; i < m.d; ++i) {
        const int row = m.row_index(j, t, i);
        if (m.weight[row] > 0.0) r.push_back(m.response[row] - m.x[j]);
      }
  const double v = r.size() > 1 ? stats::variance(r) : 1.0;
  const double hmax = *std::max_element(m.site_distance.begin(), m.site_distance.end());
  HyperParams p;
  if (m.spec.residual == model::Residual::none) {
    p.sigma2 = std::max(0.5 * v, 1e-4);
  } else {
    p.sigma2 = std::max(0.05 * v, 1e-4);
    p.sigma_z = std::max(std::sqrt(0.5 * v), 0.1);
  }
  p.range_z = 0.3 * hmax;
  p.rho_time = 0.3;
  p.beta = 0.3;
  p.lambda = 0.5 * hmax;
  p.kappa_a = 1.0;
  return p;
}

HyperParams PosteriorFit::posterior_mean_params() const {
  HyperParams p = mode;
  const auto& kinds = model->hyper.kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) p.set(kinds[k], summary[k].mean);
  return p;
}

Eigen::VectorXd PosteriorFit::latent_mean() const {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(model->layout.total);
  for (const auto& g : grid) w += g.weight * g.latent.mean;
  return w;
}

constexpr double kThetaBound = 30.0;

PosteriorFit fit(const model::AssembledModel& m, const Priors& priors, const FitConfig& config) {
  auto shared = std::make_shared<const model::AssembledModel>(m);
  const auto& layout = shared->hyper;
  const int k = layout.size();
  if (k == 0 || k > 5) throw ConfigError("invalid_spec", "between one and five hyperparameters are required");
  const HyperParams base = config.start ? *config.start : default_start(*shared);

  Evaluator ev(shared);
  auto log_post = [&](Evaluator& e, const Eigen::VectorXd& th) {
    // Beyond this box exp() leaves the range where the SPDE coefficients are representable.
    if (!th.allFinite() || th.cwiseAbs().maxCoeff() > kThetaBound) return kNegInf;
    const HyperParams p = layout.from_internal(th, base);
    const double lp = log_prior(layout, priors, th);
    if (!std::isfinite(lp)) return kNegInf;
    try {
      return e.conditional(p, false).log_marginal + lp;
    } catch (const NumericalError&) {
      return kNegInf;
    }
  };
  const optim::Objective f = [&](const Eigen::VectorXd& th) { return -log_post(ev, th); };

  optim::BfgsOptions opt;
  opt.value_tolerance = config.value_tolerance;
  opt.max_iterations = config.max_iterations;
  const auto r = optim::bfgs(f, layout.to_internal(base), opt);
  if (!r.converged || !std::isfinite(r.value)) {
    std::ostringstream os;
    os << "hyperparameter optimization failed (" << r.status << ", " << r.iterations << " iterations); trace:";
    const std::size_t from = r.trace.size() > 10 ? r.trace.size() - 10 : 0;
    for (std::size_t i = from; i < r.trace.size(); ++i) os << ' ' << r.trace[i];
    throw NumericalError("fit_not_converged", os.str());
  }

  PosteriorFit out;
  out.model = shared;
  out.priors = priors;
  out.theta_mode = r.x;
  out.mode = layout.from_internal(r.x, base);
  out.iterations = r.iterations;
  out.trace = r.trace;
  out.log_posterior_at_mode = -r.value;

  Eigen::MatrixXd h = optim::hessian(f, r.x, config.hessian_step, r.value);
  h = 0.5 * (h + h.transpose());
  out.neg_hessian = h;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double top = std::max(lambda.maxCoeff(), 1e-8);
  for (int i = 0; i < k; ++i)
    if (!(lambda[i] > 1e-8 * top)) {
      log::warn("posterior curvature is not positive along one axis; flooring it");
      // Unit curvature: a flat axis is explored one internal unit per step.
      lambda[i] = std::max(1e-8 * top, 1.0);
    }
  const Eigen::MatrixXd axes = eig.eigenvectors() * lambda.cwiseInverse().cwiseSqrt().asDiagonal();

  // Star design: centre plus +-1 and +-2 standardized steps along each eigen-axis.
  std::vector<Eigen::VectorXd> points{r.x};
  std::vector<double> rule{1.0};
  for (int a = 0; a < k; ++a)
    for (double step : {-2.0, -1.0, 1.0, 2.0}) {
      points.push_back(r.x + step * axes.col(a));
      rule.push_back(std::abs(step) == 2.0 ? 0.5 : 1.0);
    }
  const int np = static_cast<int>(points.size());
  std::vector<GridPoint> grid(np);
  std::vector<char> ok(np, 0);
  {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int nt = std::clamp(config.threads > 0 ? config.threads : hw, 1, np);
    std::atomic<int> next{0};
    auto work = [&] {
      Evaluator local(shared);
      for (int i = next++; i < np; i = next++) {
        GridPoint g;
        g.theta = points[i];
        if (!(points[i].cwiseAbs().maxCoeff() <= kThetaBound)) {
          grid[i] = std::move(g);
          continue;
        }
        g.params = layout.from_internal(points[i], base);
        try {
          g.latent = local.conditional(g.params, true);
          g.log_posterior = g.latent.log_marginal + log_prior(layout, priors, points[i]);
          ok[i] = std::isfinite(g.log_posterior);
        } catch (const NumericalError&) {
          ok[i] = 0;
        }
        grid[i] = std::move(g);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
  }
  if (!ok[0]) throw NumericalError("fit_failed", "latent conditional failed at the posterior mode");
  out.log_marginal_at_mode = grid[0].latent.log_marginal;
  const double centre = grid[0].log_posterior;
  double total = 0.0;
  for (int i = 0; i < np; ++i) {
    grid[i].weight = ok[i] ? rule[i] * std::exp(grid[i].log_posterior - centre) : 0.0;
    total += grid[i].weight;
  }
  for (int i = 0; i < np; ++i)
    if (ok[i]) {
      grid[i].weight /= total;
      out.grid.push_back(std::move(grid[i]));
    }

  // Hyperparameter marginals: split-normal along each eigen-axis, scales from the +-2 points.
  std::vector<double> up(k, 1.0), down(k, 1.0);
  for (int a = 0; a < k; ++a) {
    const int lo = 1 + 4 * a, hi = 4 + 4 * a;
    auto scale = [&](int i) {
      if (!ok[i]) return 1.0;
      const double drop = centre - grid[i].log_posterior;
      return drop > 1e-8 ? 2.0 / std::sqrt(2.0 * drop) : 2.0;
    };
    down[a] = std::min(scale(lo), 3.0);
    up[a] = std::min(scale(hi), 3.0);
  }
  Rng rng(config.seed);
  std::vector<std::vector<double>> draws(k);
  for (int s = 0; s < config.summary_draws; ++s) {
    Eigen::VectorXd th = r.x;
    for (int a = 0; a < k; ++a) {
      const double z = std::abs(rng.normal());
      const double side = rng.uniform() < up[a] / (up[a] + down[a]) ? z * up[a] : -z * down[a];
      th += side * axes.col(a);
    }
    const HyperParams p = layout.from_internal(th, base);
    for (int i = 0; i < k; ++i) draws[i].push_back(p.get(layout.kinds()[i]));
  }
  for (int i = 0; i < k; ++i) {
    HyperSummary hs;
    hs.name = model::name(layout.kinds()[i]);
    hs.mode = out.mode.get(layout.kinds()[i]);
    hs.mean = stats::mean(draws[i]);
    hs.lower = stats::quantile(draws[i], 0.025);
    hs.upper = stats::quantile(draws[i], 0.975);
    out.summary.push_back(hs);
  }
  return out;
}

PosteriorDraw posterior_draw(const PosteriorFit& fit, std::uint64_t seed, int index) {
  Rng rng = Rng(seed).split(static_cast<std::uint64_t>(index));
  const double u = rng.uniform();
  double acc = 0.0;
  int k = static_cast<int>(fit.grid.size()) - 1;
  for (int i = 0; i < static_cast<int>(fit.grid.size()); ++i) {
    acc += fit.grid[i].weight;
    if (u < acc) {
      k = i;
      break;
    }
  }
  PosteriorDraw d;
  d.grid_index = k;
  d.theta = fit.grid[k].params;
  d.w = fit.grid[k].latent.sample(rng);
  return d;
}

std::vector<PosteriorDraw> posterior_sample(const PosteriorFit& fit, int count, std::uint64_t seed) {
  std::vector<PosteriorDraw> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for_each_posterior_draw(fit, count, seed, [&](PosteriorDraw d) { out.push_back(std::move(d)); });
  return out;
}

}  // namespace condex::inference
