#include <doctest.h>

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "condex/error.hpp"
#include "condex/mesh.hpp"
#include "condex/random.hpp"

using namespace condex;
using namespace condex::mesh;

namespace {

Mesh2D square_mesh() {
  const std::vector<Point> sites = {{0, 0}, {100, 0}, {100, 100}, {0, 100}};
  return build_mesh_2d(sites, 25.0, 50.0, 100.0);
}

}  // namespace

TEST_CASE("corner sites of a square land in inner triangles") {
  const auto m = square_mesh();
  CHECK(m.size() == 81);  // 5 inner + 2x2 outer lines per axis
  const std::vector<Point> sites = {{0, 0}, {100, 0}, {100, 100}, {0, 100}};
  for (const auto& s : sites) {
    const auto loc = m.locate(s);
    REQUIRE(loc);
    CHECK(loc->triangle < 32);  // 4x4 inner cells, two triangles each
  }
  const auto again = square_mesh();
  CHECK(again.size() == m.size());
  CHECK(again.triangles() == m.triangles());
  for (int i = 0; i < m.size(); ++i) {
    CHECK(again.vertices()[i].x == m.vertices()[i].x);
    CHECK(again.vertices()[i].y == m.vertices()[i].y);
  }
}

TEST_CASE("triangulation is conforming") {
  const auto m = square_mesh();
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : m.triangles())
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  int boundary = 0;
  for (const auto& [e, c] : edges) {
    CHECK(c <= 2);
    if (c == 1) ++boundary;
  }
  CHECK(boundary == 4 * 8);  // 8 segments per side of the outer box
}

TEST_CASE("degenerate site sets are rejected") {
  const std::vector<Point> same = {{1, 1}, {1, 1}, {1, 1}};
  CHECK_THROWS_AS(build_mesh_2d(same, 1.0, 2.0, 3.0), DataError);
  const std::vector<Point> line = {{0, 0}, {1, 1}, {2, 2}};
  CHECK_THROWS_AS(build_mesh_2d(line, 1.0, 2.0, 3.0), DataError);
  const std::vector<Point> ok = {{0, 0}, {1, 0}, {0, 1}};
  CHECK_THROWS_AS(build_mesh_2d(ok, 2.0, 1.0, 3.0), ConfigError);
}

TEST_CASE("study-area sized mesh stays low rank") {
  std::vector<Point> sites;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 50; ++j) sites.push_back({i * 10.0, j * 10.0});
  const auto m = build_mesh_2d(sites, 25.0, 50.0, 100.0);
  CHECK(m.size() > 100);
  CHECK(m.size() < 1000);
  CHECK(m.size() < static_cast<int>(sites.size()));
}

TEST_CASE("observation rows at vertices, centroids and outside points") {
  const auto m = square_mesh();
  const int j = 40;
  const std::vector<Point> at_vertex = {m.vertices()[j]};
  const auto a = observation_matrix(m, at_vertex);
  CHECK(a.nonZeros() == 1);
  CHECK(a.coeff(0, j) == 1.0);

  const auto& t = m.triangles()[5];
  const auto& v = m.vertices();
  const Point c{(v[t[0]].x + v[t[1]].x + v[t[2]].x) / 3.0, (v[t[0]].y + v[t[1]].y + v[t[2]].y) / 3.0};
  const auto b = observation_matrix(m, std::vector<Point>{c});
  CHECK(b.nonZeros() == 3);
  for (int k = 0; k < 3; ++k) CHECK(b.coeff(0, t[k]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(observation_matrix(m, std::vector<Point>{{1000.0, 0.0}}), DataError);
}

TEST_CASE("barycentric rows reproduce affine functions") {
  const auto m = square_mesh();
  Rng rng(17);
  std::vector<Point> pts;
  for (int i = 0; i < 500; ++i) pts.push_back({-90.0 + 280.0 * rng.uniform(), -90.0 + 280.0 * rng.uniform()});
  const auto a = observation_matrix(m, pts);
  Eigen::VectorXd f(m.size());
  for (int i = 0; i < m.size(); ++i) f[i] = 0.3 + 1.7 * m.vertices()[i].x - 0.4 * m.vertices()[i].y;
  const Eigen::VectorXd g = a * f;
  for (int i = 0; i < 500; ++i) {
    CHECK(std::abs(g[i] - (0.3 + 1.7 * pts[i].x - 0.4 * pts[i].y)) < 1e-12 * 500.0);
    double row = 0.0;
    int nnz = 0;
    for (int c = 0; c < m.size(); ++c)
      if (a.coeff(i, c) != 0.0) {
        row += a.coeff(i, c);
        ++nnz;
        CHECK(a.coeff(i, c) >= -1e-12);
      }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nnz <= 3);
  }
}

TEST_CASE("1D spline basis") {
  const auto free = make_distance_mesh(300.0, 14, 2, false);
  CHECK(free.knots().size() == 16);
  CHECK(free.size() == 17);
  const auto pinned = make_distance_mesh(300.0, 14, 2, true);
  CHECK(pinned.size() == 16);

  std::vector<double> h;
  for (int i = 0; i <= 300; ++i) h.push_back(i * 1.0);
  const auto a = observation_matrix(free, h);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(free.size());
  const Eigen::VectorXd sums = a * ones;
  for (int i = 0; i < sums.size(); ++i) CHECK(sums[i] == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < a.rows(); ++i) {
    int nnz = 0;
    for (int c = 0; c < a.cols(); ++c) nnz += a.coeff(i, c) != 0.0;
    CHECK(nnz <= 3);
  }

  const auto z = observation_matrix(pinned, std::vector<double>{0.0});
  CHECK(z.nonZeros() == 0);
  CHECK_THROWS_AS(observation_matrix(pinned, std::vector<double>{301.0}), DataError);

  // Derivative against central differences.
  for (double x : {3.3, 57.0, 150.5, 299.0}) {
    const double eps = 1e-6;
    auto value = [&](double y, int j) {
      for (const auto& [k, v] : free.full_basis(y))
        if (k == j) return v;
      return 0.0;
    };
    for (const auto& [j, d] : free.full_basis_derivative(x))
      CHECK(d == doctest::Approx((value(x + eps, j) - value(x - eps, j)) / (2 * eps)).epsilon(1e-5));
  }
}

TEST_CASE("conditioning surgery on the observation matrix") {
  SparseMatrix id(2, 2);
  id.setIdentity();
  SparseMatrix s0(1, 2);
  s0.insert(0, 0) = 1.0;

  const Eigen::MatrixXd one = Eigen::MatrixXd(condition_observation_matrix(id, s0, 1));
  Eigen::MatrixXd expect1(2, 2);
  expect1 << 0, 0, -1, 1;
  CHECK(one == expect1);

  const Eigen::MatrixXd two = Eigen::MatrixXd(condition_observation_matrix(id, s0, 2));
  Eigen::MatrixXd expect2(4, 4);
  expect2 << 0, 0, 0, 0,
             -1, 1, 0, 0,
             -1, 0, 1, 0,
             -1, 0, 0, 1;
  CHECK(two == expect2);

  SparseMatrix bad(1, 3);
  CHECK_THROWS_AS(condition_observation_matrix(id, bad, 1), DataError);
}

TEST_CASE("conditioned row vanishes for every latent vector") {
  const auto m = square_mesh();
  Rng rng(2);
  std::vector<Point> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({100.0 * rng.uniform(), 100.0 * rng.uniform()});
  const auto a = observation_matrix(m, pts);
  const auto a0 = observation_matrix(m, std::vector<Point>{pts[7]});
  for (int ell : {1, 3}) {
    const auto c = condition_observation_matrix(a, a0, ell);
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd w = rng.normal_vector(c.cols());
      CHECK((c * w)[7] == 0.0);
    }
  }
}

TEST_CASE("replication is block diagonal") {
  SparseMatrix a(2, 2);
  a.insert(0, 0) = 1.0;
  a.insert(0, 1) = 2.0;
  a.insert(1, 1) = 3.0;
  a.makeCompressed();
  const auto r1 = replicate_observation_matrix(a, 1);
  CHECK(Eigen::MatrixXd(r1) == Eigen::MatrixXd(a));
  const auto r2 = replicate_observation_matrix(a, 2);
  CHECK(r2.rows() == 4);
  CHECK(r2.nonZeros() == 2 * a.nonZeros());
  CHECK(r2.coeff(2, 3) == 2.0);
  CHECK(r2.coeff(0, 3) == 0.0);
}
