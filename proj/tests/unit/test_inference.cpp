#include <doctest.h>

#include <cmath>
#include <numbers>

#include "condex/error.hpp"
#include "condex/inference.hpp"
#include "toy.hpp"

using namespace condex;
using namespace condex::inference;

namespace {

Eigen::MatrixXd random_spd(int m, Rng& rng) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < i; ++j)
      if (rng.uniform() < 0.4) a(i, j) = a(j, i) = 0.5 * rng.normal();
  for (int i = 0; i < m; ++i) a(i, i) = a.row(i).cwiseAbs().sum() + 0.3 + rng.uniform();
  return a;
}

GaussianSystem random_system(Rng& rng, int constraints) {
  const int m = 2 + static_cast<int>(rng.below(5));
  const int d = 1 + static_cast<int>(rng.below(8));
  GaussianSystem s;
  s.q = random_spd(m, rng).sparseView();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, m);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j)
      if (rng.uniform() < 0.6) a(i, j) = rng.normal();
  s.a = a.sparseView();
  s.y = rng.normal_vector(d);
  s.weight = Eigen::VectorXd::Ones(d);
  for (int i = 0; i < d; ++i)
    if (rng.uniform() < 0.2) s.weight[i] = 0.0;
  s.sigma2 = 0.1 + rng.uniform();
  const int k = std::min(constraints, m - 1);
  s.constraint = Eigen::MatrixXd::Zero(k, m);
  for (int r = 0; r < k; ++r) s.constraint.row(r) = rng.normal_vector(m).transpose();
  return s;
}

// Trapezoid integral of f on [a, b].
template <class F>
double integrate(F f, double a, double b, int n = 200000) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

}  // namespace

TEST_CASE("PC prior examples") {
  CHECK(pc_rate(PriorKind::sd, 0.1, 0.5) == doctest::Approx(6.9314718).epsilon(1e-7));
  CHECK(std::exp(pc_prior_logdensity(PriorKind::sd, 0.0, 0.1, 0.5)) == doctest::Approx(6.9314718).epsilon(1e-7));
  CHECK(pc_rate(PriorKind::range, 100.0, 0.5) == doctest::Approx(100.0 * std::log(2.0)).epsilon(1e-12));

  // Pr(range > 100) by Monte Carlo: 1/range is exponential.
  Rng rng(2024);
  const double lam = pc_rate(PriorKind::range, 100.0, 0.5);
  int above = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) above += 1.0 / (rng.exponential() / lam) > 100.0;
  CHECK(static_cast<double>(above) / n == doctest::Approx(0.5).epsilon(0.02));

  // Log-normal beta prior has median 0.5.
  const double below = integrate([](double lb) { return std::exp(beta_prior_logdensity(std::exp(lb)) + lb); }, -12.0,
                                 std::log(0.5));
  CHECK(below == doctest::Approx(0.5).epsilon(1e-6));

  // AR(1) prior, integrated over rho = tanh(x): the mass of |rho| in [a, tanh X]
  // must be exp(-theta d(a)) - exp(-theta d(tanh X)), so Pr(|rho| > 0.5) = 0.5.
  const double theta = pc_rate(PriorKind::ar1, 0.5, 0.5);
  auto dens = [](double x) {
    const double r = std::tanh(x);
    return std::exp(pc_prior_logdensity(PriorKind::ar1, r, 0.5, 0.5)) / (std::cosh(x) * std::cosh(x));
  };
  const double big = 12.0;
  const double far = std::exp(-theta * std::sqrt(2.0 * std::log(std::cosh(big))));
  const double total = 2.0 * integrate(dens, 0.0, big, 400000);
  const double tail = 2.0 * integrate(dens, std::atanh(0.5), big, 400000);
  CHECK(total == doctest::Approx(1.0 - far).epsilon(1e-6));
  CHECK(tail == doctest::Approx(0.5 - far).epsilon(1e-6));

  CHECK_THROWS_AS(pc_rate(PriorKind::sd, -1.0, 0.5), ConfigError);
  CHECK_THROWS_AS(pc_rate(PriorKind::range, 1.0, 1.0), ConfigError);
}

TEST_CASE("one-dimensional marginal likelihood") {
  GaussianSystem s;
  Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  s.q = one.sparseView();
  s.a = one.sparseView();
  s.y = Eigen::VectorXd::Zero(1);
  s.weight = Eigen::VectorXd::Ones(1);
  s.sigma2 = 1.0;
  CHECK(solve_gaussian(s).log_marginal == doctest::Approx(-0.5 * std::log(4.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(solve_gaussian(s).log_marginal == doctest::Approx(-1.26551).epsilon(1e-5));
}

TEST_CASE("marginal likelihood and conditional mean against dense formulas") {
  Rng rng(77);
  for (int inst = 0; inst < 40; ++inst) {
    const auto s = random_system(rng, inst % 2 == 0 ? 0 : 1 + inst % 3);
    const auto c = solve_gaussian(s);
    const Eigen::MatrixXd q = s.q, a = s.a;
    CHECK(c.log_marginal == doctest::Approx(toy::dense_marginal(q, a, s.y, s.weight, s.sigma2, s.constraint)).epsilon(1e-10));

    // Dense conditional mean: Sigma A^T (A Sigma A^T + D)^-1 y over observed rows.
    const Eigen::MatrixXd sig = toy::constrained_covariance(q, s.constraint);
    Eigen::MatrixXd aw = a;
    Eigen::MatrixXd noise = Eigen::MatrixXd::Identity(a.rows(), a.rows()) * s.sigma2;
    for (int i = 0; i < a.rows(); ++i)
      if (s.weight[i] == 0.0) aw.row(i).setZero();
    const Eigen::MatrixXd cov = aw * sig * aw.transpose() + noise;
    const Eigen::VectorXd mu = sig * aw.transpose() * cov.ldlt().solve(s.weight.cwiseProduct(s.y));
    CHECK((c.mean - mu).cwiseAbs().maxCoeff() < 1e-8);
    if (s.constraint.rows() > 0) CHECK((s.constraint * c.mean).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("latent ordering does not change the marginal likelihood") {
  Rng rng(5);
  for (int inst = 0; inst < 10; ++inst) {
    auto s = random_system(rng, inst % 2);
    const int m = static_cast<int>(s.q.rows());
    Eigen::PermutationMatrix<Eigen::Dynamic> p(m);
    p.setIdentity();
    for (int i = m - 1; i > 0; --i) std::swap(p.indices()[i], p.indices()[rng.below(i + 1)]);
    GaussianSystem t = s;
    const Eigen::MatrixXd qd = s.q;
    t.q = (p * qd * p.transpose()).sparseView();
    t.a = (Eigen::MatrixXd(s.a) * p.transpose()).sparseView();
    if (s.constraint.rows() > 0) t.constraint = s.constraint * p.transpose();
    CHECK(solve_gaussian(t).log_marginal == doctest::Approx(solve_gaussian(s).log_marginal).epsilon(1e-10));
  }
}

TEST_CASE("assembled-model marginal likelihood matches the dense oracle") {
  struct Case {
    int number;
    int ell;
    model::Residual residual;
  };
  const Case cases[] = {{0, 1, model::Residual::subtract_s0}, {3, 1, model::Residual::subtract_s0},
                        {3, 1, model::Residual::condition_s0}, {4, 2, model::Residual::subtract_s0},
                        {5, 2, model::Residual::condition_s0}, {6, 2, model::Residual::none},
                        {1, 1, model::Residual::condition_s0}};
  for (const auto& cs : cases) {
    auto spec = toy::small_spec(model::table_model(cs.number));
    spec.ell = cs.ell;
    spec.residual = cs.residual;
    if (cs.residual == model::Residual::none) spec.beta = model::BetaMode::fixed_zero;
    auto t = toy::make_toy(spec, 3, 3, 0.15, 100 + cs.number);
    const auto& m = t.model;
    model::HyperParams th;
    th.sigma2 = 0.3;
    th.sigma_z = 1.2;
    th.range_z = 1.5;
    th.rho_time = 0.4;
    th.beta = 0.3;
    Evaluator ev(std::make_shared<const model::AssembledModel>(m));
    const Eigen::MatrixXd q = ev.prior_precision(th);
    const Eigen::MatrixXd b = m.constraint.rows() > 0 ? Eigen::MatrixXd(m.constraint) : Eigen::MatrixXd(0, q.rows());
    const double dense = toy::dense_marginal(q, Eigen::MatrixXd(m.a), m.response - m.offset(th), m.weight, th.sigma2, b);
    const double sparse = inference::log_marginal_likelihood(m, th);
    INFO("model " << cs.number << " ell " << cs.ell);
    CHECK(sparse == doctest::Approx(dense).epsilon(1e-9));
  }
}

TEST_CASE("latent posterior with no data equals the prior") {
  auto t = toy::make_toy(toy::small_spec(model::table_model(3)), 3, 2, 0.0, 8);
  auto m = t.model.with_weights(Eigen::VectorXd::Zero(t.model.rows()));
  model::HyperParams th;
  th.range_z = 2.0;
  const auto c = latent_posterior(m, th);
  CHECK(c.mean.cwiseAbs().maxCoeff() < 1e-12);
  Evaluator ev(std::make_shared<const model::AssembledModel>(m));
  CHECK(c.factor->log_determinant() == doctest::Approx(gmrf::CholeskyFactor(ev.prior_precision(th)).log_determinant()).epsilon(1e-12));
}

TEST_CASE("fit with a single hyperparameter matches quadrature") {
  auto spec = toy::small_spec(model::table_model(6));
  auto t = toy::make_toy(spec, 4, 6, 0.0, 21);
  const auto& m = t.model;
  Priors pr;
  FitConfig cfg;
  cfg.threads = 1;
  const auto f = fit(m, pr, cfg);
  REQUIRE(f.grid.size() == 5);
  double wsum = 0.0;
  for (const auto& g : f.grid) {
    CHECK(g.weight > 0.0);
    wsum += g.weight;
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));

  // Reference posterior mean of sigma2 by quadrature over log sigma2.
  auto lp = [&](double t) {
    model::HyperParams h;
    h.sigma2 = std::exp(t);
    Eigen::VectorXd th(1);
    th[0] = t;
    return log_marginal_likelihood(m, h) + log_prior(m.hyper, pr, th);
  };
  const double c = f.theta_mode[0];
  const double ref = lp(c);
  double num = 0.0, den = 0.0;
  for (int i = -400; i <= 400; ++i) {
    const double tt = c + i * 0.005;
    const double w = std::exp(lp(tt) - ref);
    num += w * std::exp(tt);
    den += w;
  }
  CHECK(f.summary[0].mean == doctest::Approx(num / den).epsilon(0.01));
  CHECK(f.summary[0].lower < f.summary[0].mean);
  CHECK(f.summary[0].upper > f.summary[0].mean);
}

TEST_CASE("posterior sampling") {
  auto spec = toy::small_spec(model::table_model(3));
  auto t = toy::make_toy(spec, 3, 3, 0.0, 31);
  FitConfig cfg;
  cfg.threads = 2;
  const auto f = fit(t.model, Priors{}, cfg);
  const auto a = posterior_sample(f, 20, 99);
  const auto b = posterior_sample(f, 20, 99);
  for (int i = 0; i < 20; ++i) {
    CHECK(a[i].grid_index == b[i].grid_index);
    CHECK((a[i].w - b[i].w).norm() == 0.0);
  }

  const int n = 50000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(t.model.layout.total);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(t.model.layout.total);
  for_each_posterior_draw(f, n, 5, [&](const PosteriorDraw& d) {
    mean += d.w;
    sq += d.w.cwiseAbs2();
  });
  mean /= n;
  const Eigen::VectorXd sd = (sq / n - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  const Eigen::VectorXd target = f.latent_mean();
  for (Eigen::Index i = 0; i < mean.size(); ++i) CHECK(std::abs(mean[i] - target[i]) < 5.0 * sd[i] / std::sqrt(n) + 1e-12);

  // Single-point grid: every draw shares theta.
  PosteriorFit one = f;
  one.grid.resize(1);
  one.grid[0].weight = 1.0;
  for (const auto& d : posterior_sample(one, 10, 1)) CHECK(d.theta.sigma2 == one.grid[0].params.sigma2);
}

TEST_CASE("stronger shrinkage of the residual sd lowers its mode") {
  auto spec = toy::small_spec(model::table_model(0));
  auto t = toy::make_toy(spec, 4, 5, 0.0, 41);
  Priors weak, strong;
  strong.residual_sd.p = weak.residual_sd.p * weak.residual_sd.p;  // doubles the rate at fixed r
  FitConfig cfg;
  cfg.threads = 1;
  const auto a = fit(t.model, weak, cfg);
  const auto b = fit(t.model, strong, cfg);
  CHECK(b.mode.sigma_z <= a.mode.sigma_z * (1.0 + 1e-6));
}
