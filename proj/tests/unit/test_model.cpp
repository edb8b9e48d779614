#include <doctest.h>

#include <cmath>

#include "condex/error.hpp"
#include "condex/inference.hpp"
#include "condex/model.hpp"
#include "toy.hpp"

using namespace condex;
using namespace condex::model;

TEST_CASE("parametric alpha examples") {
  CHECK(parametric_alpha(0.0, 50.0, 1.3) == 1.0);
  CHECK(parametric_alpha(50.0, 50.0, 1.3) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(parametric_alpha(7.0, 50.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(parametric_alpha(170.0, 50.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK_THROWS_AS(parametric_alpha(1.0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(parametric_alpha(1.0, 1.0, 2.5), ConfigError);
}

TEST_CASE("table models and hyperparameter layout") {
  CHECK(table_model(0).alpha == AlphaForm::one);
  CHECK_FALSE(table_model(0).gamma);
  CHECK(table_model(4).beta == BetaMode::estimated);
  CHECK(table_model(5).gamma == false);
  CHECK(table_model(6).residual == Residual::none);
  CHECK_THROWS_AS(table_model(7), ConfigError);

  ModelSpec s = table_model(3);
  s.alpha = AlphaForm::parametric;
  s.ell = 3;
  s.beta = BetaMode::estimated;
  CHECK_THROWS_AS(s.validate(), ConfigError);  // seven hyperparameters

  ModelSpec none = table_model(6);
  none.gamma = false;
  none.alpha = AlphaForm::one;
  CHECK_THROWS_AS(none.validate(), ConfigError);

  HyperLayout layout({Hyper::noise_variance, Hyper::time_correlation, Hyper::beta, Hyper::alpha_shape}, false);
  HyperParams p;
  p.sigma2 = 0.3;
  p.rho_time = -0.4;
  p.beta = 0.7;
  p.kappa_a = 1.2;
  const auto back = layout.from_internal(layout.to_internal(p));
  CHECK(back.sigma2 == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(back.rho_time == doctest::Approx(-0.4).epsilon(1e-14));
  CHECK(back.beta == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(back.kappa_a == doctest::Approx(1.2).epsilon(1e-14));

  // Jacobian against a central difference of the inverse map.
  for (int k = 0; k < layout.size(); ++k) {
    Eigen::VectorXd t = layout.to_internal(p);
    const double h = 1e-6;
    Eigen::VectorXd tp = t, tm = t;
    tp[k] += h;
    tm[k] -= h;
    const double deriv = (layout.from_internal(tp).get(layout.kinds()[k]) - layout.from_internal(tm).get(layout.kinds()[k])) / (2 * h);
    CHECK(layout.log_jacobian(layout.kinds()[k], p.get(layout.kinds()[k])) == doctest::Approx(std::log(deriv)).epsilon(1e-7));
  }
}

TEST_CASE("assembled layout and structure") {
  auto t0 = toy::make_toy(toy::small_spec(table_model(0)), 4, 3, 0.0, 1);
  const auto& m0 = t0.model;
  CHECK(m0.layout.alpha_size == 0);
  CHECK(m0.layout.gamma_size == 0);
  CHECK(m0.layout.total == m0.n * m0.mesh2d->size());
  CHECK(m0.a.cols() == m0.layout.total);
  CHECK(m0.hyper.size() == 3);
  // Linear predictor x_j + Z0(s): the offset carries x_j, A only touches Z.
  const auto off = m0.offset(HyperParams{});
  for (int j = 0; j < m0.n; ++j)
    for (int i = 0; i < m0.d; ++i) CHECK(off[m0.row_index(j, 0, i)] == m0.x[j]);
  CHECK((off - alpha_one_offset(t0.eps)).norm() == 0.0);

  auto t6 = toy::make_toy(toy::small_spec(table_model(6)), 4, 3, 0.0, 1);
  CHECK(t6.model.layout.total == 2 * t6.mesh1d.size());
  CHECK(t6.model.hyper.size() == 1);

  // Conditioning rows carry no likelihood weight.
  for (int r : m0.conditioning_rows) CHECK(m0.weight[r] == 0.0);
  CHECK(static_cast<int>(m0.conditioning_rows.size()) == m0.n);
}

TEST_CASE("spline alpha row at distance zero contributes exactly x") {
  ModelSpec s = toy::small_spec(table_model(1));
  std::vector<Point> sites{{0.0, 0.0}, {3.0, 0.0}, {0.0, 2.0}};
  auto mesh2d = mesh::build_mesh_2d(sites, 1.0, 2.0, 1.0);
  auto mesh1d = distance_mesh(s, sites, 0);
  auto eps = toy::random_episodes(3, 1, 1, 0, 1.0, 0.0, 3);
  auto m = assemble(s, eps, sites, mesh2d, mesh1d);
  const int r = m.row_index(0, 0, 0);
  for (int c = m.layout.alpha_offset; c < m.layout.alpha_offset + m.layout.alpha_size; ++c) CHECK(m.a.coeff(r, c) == 0.0);
  CHECK(m.offset(HyperParams{})[r] == eps.episodes[0].x);
  Eigen::VectorXd w = Eigen::VectorXd::Random(m.layout.total);
  CHECK(alpha_at(m, w, HyperParams{}, 0.0) == 1.0);
}

TEST_CASE("spline prior precision") {
  auto m1 = mesh::make_distance_mesh(10.0, 4, 2, true);
  const SparseMatrix q1 = spline_prior_precision(m1, 5.0, 0.5, 1, 0.8);
  CHECK(q1.rows() == m1.size());
  const auto p = gmrf::matern_to_spde(5.0, 0.5, 1.5, 1);
  CHECK((Eigen::MatrixXd(q1) - Eigen::MatrixXd(gmrf::spde_precision(m1, gmrf::SpdeParams{p.kappa, p.tau, 2.0, 1}))).norm() < 1e-12);

  const SparseMatrix q3 = spline_prior_precision(m1, 5.0, 0.5, 3, 0.0);
  CHECK(q3.rows() == 3 * m1.size());
  const Eigen::MatrixXd d3 = q3;
  const Eigen::MatrixXd d1 = q1;
  const int k = m1.size();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const Eigen::MatrixXd blk = d3.block(a * k, b * k, k, k);
      if (a == b)
        CHECK((blk - d1).norm() < 1e-12);
      else
        CHECK(blk.norm() == 0.0);
    }
}

TEST_CASE("nesting: Model 3 with zero gamma reproduces Model 1; Model 4 at beta 0 reproduces Model 3") {
  auto t1 = toy::make_toy(toy::small_spec(table_model(1)), 4, 2, 0.1, 5);
  auto t3 = toy::make_toy(toy::small_spec(table_model(3)), 4, 2, 0.1, 5);
  auto t4 = toy::make_toy(toy::small_spec(table_model(4)), 4, 2, 0.1, 5);
  const auto& m1 = t1.model;
  const auto& m3 = t3.model;
  Rng rng(9);
  Eigen::VectorXd w1 = rng.normal_vector(m1.layout.total);
  Eigen::VectorXd w3 = Eigen::VectorXd::Zero(m3.layout.total);
  w3.segment(m3.layout.alpha_offset, m3.layout.alpha_size) = w1.segment(m1.layout.alpha_offset, m1.layout.alpha_size);
  w3.segment(m3.layout.z_offset, m3.layout.total - m3.layout.z_offset) =
      w1.segment(m1.layout.z_offset, m1.layout.total - m1.layout.z_offset);
  HyperParams th;
  const Eigen::VectorXd eta1 = m1.offset(th) + m1.a * w1;
  const Eigen::VectorXd eta3 = m3.offset(th) + m3.a * w3;
  CHECK((eta1 - eta3).cwiseAbs().maxCoeff() == 0.0);

  th.sigma2 = 0.2;
  th.range_z = 2.0;
  th.beta = 0.0;
  CHECK(inference::log_marginal_likelihood(t4.model, th) ==
        doctest::Approx(inference::log_marginal_likelihood(m3, th)).epsilon(1e-12));
}

TEST_CASE("assembly errors") {
  ModelSpec s = toy::small_spec(table_model(3));
  auto sites = toy::grid_sites(3, 3, 1.0);
  auto mesh2d = mesh::build_mesh_2d(sites, 1.0, 2.0, 1.0);
  auto mesh1d = distance_mesh(s, sites, 4);
  episodes::EpisodeSet empty;
  empty.sites = 9;
  empty.s0 = 4;
  CHECK_THROWS_AS(assemble(s, empty, sites, mesh2d, mesh1d), DataError);
  auto eps = toy::random_episodes(9, 2, 2, 4, 1.0, 0.0, 1);
  CHECK_THROWS_AS(assemble(s, eps, sites, mesh2d, mesh1d), ConfigError);  // ell mismatch
  auto small_mesh = mesh::build_mesh_2d(std::vector<Point>{{0, 0}, {1, 0}, {0, 1}}, 0.5, 1.0, 0.1);
  auto eps1 = toy::random_episodes(9, 2, 1, 4, 1.0, 0.0, 1);
  CHECK_THROWS_AS(assemble(s, eps1, sites, small_mesh, mesh1d), DataError);  // sites outside the mesh
}
