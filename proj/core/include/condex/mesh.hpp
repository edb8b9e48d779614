#pragma once

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

namespace condex {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b) noexcept;

namespace mesh {

/// Sparse map from latent coefficients (columns) to observation points (rows).
using ObservationMatrix = SparseMatrix;

/// Knot sequence for a clamped B-spline basis in the distance to the
/// conditioning site. With `dirichlet_left` the single basis function that is
/// non-zero at the left end is removed, pinning every curve to 0 there.
class Mesh1D {
 public:
  Mesh1D(std::vector<double> knots, int degree, bool dirichlet_left);

  const std::vector<double>& knots() const noexcept { return knots_; }
  int degree() const noexcept { return degree_; }
  bool dirichlet_left() const noexcept { return dirichlet_left_; }
  double left() const noexcept { return knots_.front(); }
  double right() const noexcept { return knots_.back(); }

  /// Basis size before the boundary constraint.
  int full_size() const noexcept { return static_cast<int>(knots_.size()) + degree_ - 1; }
  /// Number of basis functions removed by the boundary constraint.
  int dropped() const noexcept { return dirichlet_left_ ? 1 : 0; }
  /// Basis size after the boundary constraint (latent dimension).
  int size() const noexcept { return full_size() - dropped(); }

  /// Non-zero full-basis values at h as (full index, value) pairs.
  std::vector<std::pair<int, double>> full_basis(double h) const;
  /// Non-zero full-basis first derivatives at h.
  std::vector<std::pair<int, double>> full_basis_derivative(double h) const;

  /// Clamped knot vector with end multiplicity degree + 1.
  const std::vector<double>& extended_knots() const noexcept { return extended_; }

 private:
  int find_span(double h) const;

  std::vector<double> knots_;
  std::vector<double> extended_;
  int degree_;
  bool dirichlet_left_;
};

/// `interior_knots` equidistant knots strictly inside (0, max_distance), plus
/// one knot at each end.
Mesh1D make_distance_mesh(double max_distance, int interior_knots = 14, int degree = 2, bool dirichlet_left = true);

struct Barycentric {
  int triangle = -1;
  std::array<int, 3> vertices{};
  std::array<double, 3> weights{};
};

/// Conforming triangulation. Triangles are stored counter-clockwise; the
/// locate() tie-break returns the lowest-index containing triangle.
class Mesh2D {
 public:
  Mesh2D(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles,
         std::vector<Point> inner_boundary = {}, std::vector<Point> outer_boundary = {});

  const std::vector<Point>& vertices() const noexcept { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const noexcept { return triangles_; }
  const std::vector<Point>& inner_boundary() const noexcept { return inner_; }
  const std::vector<Point>& outer_boundary() const noexcept { return outer_; }
  int size() const noexcept { return static_cast<int>(vertices_.size()); }

  std::optional<Barycentric> locate(Point p) const;

 private:
  void build_index();

  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Point> inner_;
  std::vector<Point> outer_;
  // Uniform bucket grid over the vertex bounding box.
  double x0_ = 0.0, y0_ = 0.0, cell_w_ = 1.0, cell_h_ = 1.0;
  int nx_ = 1, ny_ = 1;
  double tolerance_ = 0.0;
  std::vector<std::vector<int>> buckets_;
};

/// Structured two-resolution mesh: the bounding box of `sites` gridded at
/// roughly `inner_edge`, surrounded by a ring of width `extension` gridded at
/// roughly `outer_edge`. Grid lines run through both zones, so the result is
/// conforming. Inner triangles are numbered first.
Mesh2D build_mesh_2d(std::span<const Point> sites, double inner_edge, double outer_edge, double extension);

/// Barycentric interpolation rows; throws DataError("outside_mesh") naming the point.
ObservationMatrix observation_matrix(const Mesh2D& mesh, std::span<const Point> points);
/// B-spline basis rows in the constrained basis.
ObservationMatrix observation_matrix(const Mesh1D& mesh, std::span<const double> distances);

/// Observation matrix of Z(s,t) - Z(s0,t0): `a_s` (d x m) repeated on `ell`
/// diagonal blocks, minus `a_s0` (1 x m, the conditioning site at the first
/// time step) in every row.
ObservationMatrix condition_observation_matrix(const ObservationMatrix& a_s, const ObservationMatrix& a_s0, int ell);

/// I_n (x) a_episode.
ObservationMatrix replicate_observation_matrix(const ObservationMatrix& a_episode, int n);

/// Block-diagonal repetition of `a` (`copies` blocks).
ObservationMatrix block_diagonal(const ObservationMatrix& a, int copies);

}  // namespace mesh
}  // namespace condex
