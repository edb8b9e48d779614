#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "condex/diagnostics.hpp"
#include "condex/error.hpp"
#include "condex/simulate.hpp"
#include "condex/stats.hpp"
#include "toy.hpp"

using namespace condex;
using namespace condex::diagnostics;

TEST_CASE("degenerate posterior: WAIC, CPO and PIT in closed form") {
  Rng rng(3);
  const Eigen::VectorXd y = rng.normal_vector(25);
  const Eigen::VectorXd eta = rng.normal_vector(25);
  const double s2 = 0.7;
  PredictiveAccumulator acc(y);
  for (int s = 0; s < 600; ++s) acc.add(eta, s2);
  const auto w = acc.waic();
  double sum = 0.0;
  for (int i = 0; i < 25; ++i) sum += stats::normal_logpdf(y[i], eta[i], std::sqrt(s2));
  CHECK(w.p_eff == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(w.waic == doctest::Approx(-2.0 * sum).epsilon(1e-12));
  const auto c = acc.cpo_pit();
  for (int i = 0; i < 25; ++i) {
    CHECK(c.cpo[i] == doctest::Approx(std::exp(stats::normal_logpdf(y[i], eta[i], std::sqrt(s2)))).epsilon(1e-12));
    CHECK(std::abs(c.pit[i] - stats::normal_cdf((y[i] - eta[i]) / std::sqrt(s2))) < 1e-12);
  }
  PredictiveAccumulator one(y);
  one.add(eta, s2);
  CHECK_THROWS_AS(one.waic(), NumericalError);
}

TEST_CASE("WAIC effective parameters are non-negative and PIT lies in [0,1]") {
  Rng rng(4);
  const Eigen::VectorXd y = rng.normal_vector(40);
  PredictiveAccumulator acc(y);
  for (int s = 0; s < 500; ++s) acc.add(rng.normal_vector(40) * 0.3, 0.5 + rng.uniform());
  CHECK(acc.waic().p_eff >= 0.0);
  const auto c = acc.cpo_pit();
  CHECK(c.pit.minCoeff() >= 0.0);
  CHECK(c.pit.maxCoeff() <= 1.0);
  CHECK(c.cpo.minCoeff() > 0.0);
}

namespace {

// Exact leave-one-out predictive of each observed row from the joint Gaussian law of the data.
void dense_loo(const model::AssembledModel& m, const model::HyperParams& th, const std::vector<int>& rows,
               Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  inference::Evaluator ev(std::make_shared<const model::AssembledModel>(m));
  const Eigen::MatrixXd q = ev.prior_precision(th);
  const Eigen::MatrixXd b = m.constraint.rows() > 0 ? Eigen::MatrixXd(m.constraint) : Eigen::MatrixXd(0, q.rows());
  const Eigen::MatrixXd c = toy::constrained_covariance(q, b);
  const Eigen::MatrixXd a = Eigen::MatrixXd(m.a);
  const Eigen::VectorXd off = m.offset(th);
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd ar(n, a.cols());
  Eigen::VectorXd r(n);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ar.row(i) = a.row(rows[static_cast<std::size_t>(i)]);
    r[i] = m.response[rows[static_cast<std::size_t>(i)]] - off[rows[static_cast<std::size_t>(i)]];
    k(i, i) = th.sigma2 / m.weight[rows[static_cast<std::size_t>(i)]];
  }
  k += ar * c * ar.transpose();
  const Eigen::MatrixXd p = k.inverse();
  const Eigen::VectorXd pr = p * r;
  mean.resize(n);
  sd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = m.response[rows[static_cast<std::size_t>(i)]];
    mean[i] = y - pr[i] / p(i, i);
    sd[i] = 1.0 / std::sqrt(p(i, i));
  }
}

}  // namespace

TEST_CASE("closed-form leave-one-out matches the dense Gaussian oracle") {
  for (auto residual : {model::Residual::subtract_s0, model::Residual::condition_s0}) {
    auto spec = toy::small_spec(model::table_model(3));
    spec.residual = residual;
    spec.ell = 2;
    auto t = toy::make_toy(spec, 3, 3, 0.1, 31);
    auto mp = std::make_shared<const model::AssembledModel>(t.model);
    const auto& m = *mp;
    std::vector<int> rows;
    for (int r = 0; r < m.rows(); ++r)
      if (m.weight[r] > 0.0) rows.push_back(r);

    inference::PosteriorFit f;
    f.model = mp;
    model::HyperParams th[2];
    th[0].sigma2 = 0.3;
    th[0].sigma_z = 1.2;
    th[0].range_z = 1.5;
    th[0].rho_time = 0.4;
    th[1] = th[0];
    th[1].sigma2 = 0.5;
    th[1].range_z = 2.5;
    const double weights[2] = {0.7, 0.3};
    Eigen::VectorXd mu[2], sd[2];
    for (int g = 0; g < 2; ++g) {
      inference::GridPoint gp;
      gp.params = th[g];
      gp.weight = weights[g];
      gp.latent = inference::latent_posterior(m, th[g]);
      f.grid.push_back(gp);
      dense_loo(m, th[g], rows, mu[g], sd[g]);
    }
    const auto c = loo_predictive(f, rows);
    INFO("residual " << model::to_string(residual));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const double y = m.response[rows[k]];
      double inv = 0.0, pit = 0.0;
      for (int g = 0; g < 2; ++g) {
        const double dens = std::exp(stats::normal_logpdf(y, mu[g][i], sd[g][i]));
        inv += weights[g] / dens;
        pit += weights[g] * stats::normal_cdf((y - mu[g][i]) / sd[g][i]) / dens;
      }
      CHECK(c.cpo[i] == doctest::Approx(1.0 / inv).epsilon(1e-7));
      CHECK(c.pit[i] == doctest::Approx(pit / inv).epsilon(1e-7));
      CHECK(c.reliable[k]);
    }
  }
}

TEST_CASE("fitted diagnostics: reproducibility and an outlier") {
  auto t = toy::make_toy(toy::small_spec(model::table_model(0)), 4, 4, 0.0, 12);
  auto m = t.model;
  const int outlier = m.row_index(1, 0, 0);
  m.response[outlier] += 25.0;
  inference::FitConfig cfg;
  cfg.threads = 1;
  const auto f = inference::fit(m, inference::Priors{}, cfg);
  const auto a = predictive_diagnostics(f, 600, 8);
  const auto b = predictive_diagnostics(f, 600, 8);
  CHECK(a.waic.waic == b.waic.waic);
  CHECK(std::isfinite(a.waic.waic));
  CHECK(a.waic.p_eff >= 0.0);
  Eigen::Index at = 0;
  a.cpo.cpo.minCoeff(&at);
  CHECK(a.cpo.rows[static_cast<std::size_t>(at)] == outlier);
  CHECK(a.cpo.mean_log_cpo < std::log(a.cpo.mean_cpo));
}

TEST_CASE("hold-out RMSE") {
  Eigen::VectorXd v(3);
  v << 1.0, -2.0, 0.5;
  CHECK(rmse(v, v) == 0.0);
  auto t = toy::make_toy(toy::small_spec(model::table_model(0)), 4, 3, 0.0, 13);
  std::vector<bool> none(static_cast<std::size_t>(t.model.rows()), false);
  CHECK_THROWS_AS(rmse_cv(t.model, inference::Priors{}, inference::FitConfig{}, none), ConfigError);
  const auto quad = quadrant_holdout(t.model);
  inference::FitConfig cfg;
  cfg.threads = 1;
  const auto r = rmse_cv(t.model, inference::Priors{}, cfg, quad);
  CHECK(r.rows.size() > 0);
  CHECK(std::isfinite(r.rmse));
  const auto fold = episode_fold_holdout(t.model, 3, 0, 1);
  CHECK(std::count(fold.begin(), fold.end(), true) == t.model.d * t.model.ell);
}

TEST_CASE("ring regions and region exceedance limits") {
  auto t = toy::make_toy(toy::small_spec(model::table_model(0)), 5, 3, 0.0, 14);
  const auto& m = t.model;
  const auto regions = ring_regions(m.site_distance, m.s0, 2);
  REQUIRE(regions.size() == 3);
  CHECK(regions[0] == std::vector<int>{m.s0});
  std::size_t total = 0;
  for (const auto& r : regions) total += r.size();
  CHECK(total == static_cast<std::size_t>(m.d));

  const auto emp = region_exceedance_empirical(t.eps, regions, 0.9);
  CHECK(emp[0] == 1.0);
  for (double p : emp) CHECK((p >= 0.0 && p <= 1.0));

  // Perfect dependence: alpha = 1, gamma = 0, negligible residual and noise.
  model::HyperParams th;
  th.sigma2 = 1e-14;
  th.sigma_z = 1e-7;
  th.range_z = 2.0;
  simulate::Simulator perfect(simulate::from_spec(m, th, Eigen::VectorXd::Zero(m.layout.total)));
  for (double p : region_exceedance(perfect, regions, 0.95, 300, 1)) CHECK(p == 1.0);

  std::vector<std::vector<int>> bad = regions;
  bad.push_back({});
  CHECK_THROWS_AS(region_exceedance(perfect, bad, 0.95, 10, 1), DataError);
}

TEST_CASE("vanishing alpha gives the independence proportion") {
  auto spec = toy::small_spec(model::table_model(0));
  spec.alpha = model::AlphaForm::parametric;
  auto t = toy::make_toy(spec, 5, 2, 0.0, 15);
  const auto& m = t.model;
  model::HyperParams th;
  th.sigma2 = 0.2;
  th.sigma_z = 1.0;
  th.range_z = 0.3;  // short range: Z(s) and Z(s0) nearly independent away from s0
  th.lambda = 1e-3;
  th.kappa_a = 1.0;
  simulate::Simulator sim(simulate::from_spec(m, th, Eigen::VectorXd::Zero(m.layout.total)));
  const double q = 0.9, ql = stats::laplace_quantile(q);
  // Far site: X = Z(s) - Z(s0) + eps with Z on the mesh; use its simulated variance.
  int far = 0;
  for (int i = 0; i < m.d; ++i)
    if (m.site_distance[i] > m.site_distance[far]) far = i;
  std::vector<double> xs;
  for (int k = 0; k < 20000; ++k) xs.push_back(sim.draw(3, k, ql).values(far, 0));
  const double sd = std::sqrt(stats::variance(xs));
  const double expected = 1.0 - stats::normal_cdf(ql / sd);
  const std::vector<int> sites{far, m.s0};
  const std::vector<double> qs{q};
  const auto chi = model_chi_q(sim, sites, qs, 20000, 3);
  CHECK(chi[0].chi == doctest::Approx(expected).epsilon(0.06));
  CHECK(chi[1].chi == 1.0);
}

TEST_CASE("distance binning of chi") {
  std::vector<ChiPoint> pts{{0, 0.0, 0.9, 1.0}, {1, 1.0, 0.9, 0.6}, {2, 2.0, 0.9, 0.4}, {3, 1.5, 0.9, 0.5},
                            {1, 1.0, 0.99, 0.3}};
  const auto bins = bin_chi(pts, 2);
  REQUIRE(bins.size() == 4);
  CHECK(bins[0].pairs == 1);
  CHECK(bins[0].chi == doctest::Approx(0.6));
  CHECK(bins[1].pairs == 2);
  CHECK(bins[1].chi == doctest::Approx(0.45));
  CHECK(bins[2].q == 0.99);
  CHECK(bins[3].pairs == 0);
  CHECK(std::isnan(bins[3].chi));
}

TEST_CASE("the unconditional law is non-Gaussian while residuals are Gaussian") {
  auto spec = toy::small_spec(model::table_model(3));
  auto t = toy::make_toy(spec, 5, 2, 0.0, 16);
  const auto& m = t.model;
  model::HyperParams th;
  th.sigma2 = 0.05;
  th.sigma_z = 0.5;
  th.range_z = 2.0;
  // Decaying alpha: negative spline coefficients away from the origin.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m.layout.total);
  const int ms = m.mesh1d->size();
  for (int k = 0; k < ms; ++k) w[m.layout.alpha_offset + k] = -0.1 * (k + 1);
  simulate::Simulator sim(simulate::from_spec(m, th, w));
  int far = 0;
  for (int i = 0; i < m.d; ++i)
    if (m.site_distance[i] > m.site_distance[far]) far = i;
  REQUIRE(sim.alpha(far, 0) < 0.9);
  REQUIRE(sim.alpha(far, 0) > 0.1);
  std::vector<double> pooled, resid;
  for (int k = 0; k < 3000; ++k) {
    const auto e = sim.draw(77, k);
    pooled.push_back(e.values(far, 0));
    resid.push_back(e.values(far, 0) - e.x * sim.alpha(far, 0) - sim.gamma(far, 0));
  }
  auto ks_normal = [](const std::vector<double>& v) {
    const double mu = stats::mean(v), sd = std::sqrt(stats::variance(v));
    return stats::ks_statistic(v, [&](double x) { return stats::normal_cdf((x - mu) / sd); });
  };
  const double crit = stats::ks_critical_1pct(pooled.size());
  CHECK(ks_normal(pooled) > crit);
  CHECK(ks_normal(resid) < crit);
}
