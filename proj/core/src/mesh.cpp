#include "condex/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "condex/error.hpp"

namespace condex {

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

namespace mesh {
namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Non-zero B-spline values N_{span-p..span, p}(h) (de Boor / Cox recursion).
std::vector<double> basis_funs(int span, double h, int p, const std::vector<double>& t) {
  std::vector<double> n(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
  n[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = h - t[span + 1 - j];
    right[j] = t[span + j] - h;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  return n;
}

std::vector<double> linspace(double a, double b, int segments) {
  std::vector<double> out(segments + 1);
  for (int i = 0; i <= segments; ++i) out[i] = a + (b - a) * static_cast<double>(i) / segments;
  out.back() = b;
  return out;
}

SparseMatrix from_triplets(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& t) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  m.makeCompressed();
  return m;
}

}  // namespace

Mesh1D::Mesh1D(std::vector<double> knots, int degree, bool dirichlet_left)
    : knots_(std::move(knots)), degree_(degree), dirichlet_left_(dirichlet_left) {
  if (knots_.size() < 2) throw ConfigError("invalid_mesh", "1D mesh needs at least two knots");
  if (degree_ < 1 || degree_ > 3) throw ConfigError("invalid_mesh", "spline degree must be 1, 2 or 3");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (!(knots_[i] > knots_[i - 1])) throw ConfigError("invalid_mesh", "knots must be strictly increasing");
  extended_.assign(degree_, knots_.front());
  extended_.insert(extended_.end(), knots_.begin(), knots_.end());
  extended_.insert(extended_.end(), degree_, knots_.back());
}

int Mesh1D::find_span(double h) const {
  const int n = full_size() - 1;
  if (h >= extended_[n + 1]) return n;
  if (h <= extended_[degree_]) return degree_;
  // Largest span with t[span] <= h.
  auto it = std::upper_bound(extended_.begin() + degree_, extended_.begin() + n + 1, h);
  return static_cast<int>(it - extended_.begin()) - 1;
}

std::vector<std::pair<int, double>> Mesh1D::full_basis(double h) const {
  h = std::clamp(h, left(), right());
  const int span = find_span(h);
  const auto n = basis_funs(span, h, degree_, extended_);
  std::vector<std::pair<int, double>> out;
  for (int r = 0; r <= degree_; ++r)
    if (n[r] != 0.0) out.emplace_back(span - degree_ + r, n[r]);
  return out;
}

std::vector<std::pair<int, double>> Mesh1D::full_basis_derivative(double h) const {
  h = std::clamp(h, left(), right());
  const int p = degree_;
  const int span = find_span(h);
  const auto& t = extended_;
  // Lower-degree values N_{span-p+1..span, p-1}.
  const auto low = basis_funs(span, h, p - 1, t);
  auto lower = [&](int i) {
    const int r = i - (span - p + 1);
    return (r >= 0 && r < p) ? low[r] : 0.0;
  };
  std::vector<std::pair<int, double>> out;
  for (int i = span - p; i <= span; ++i) {
    double v = 0.0;
    const double d1 = t[i + p] - t[i];
    const double d2 = t[i + p + 1] - t[i + 1];
    if (d1 > 0.0) v += p * lower(i) / d1;
    if (d2 > 0.0) v -= p * lower(i + 1) / d2;
    if (v != 0.0) out.emplace_back(i, v);
  }
  return out;
}

Mesh1D make_distance_mesh(double max_distance, int interior_knots, int degree, bool dirichlet_left) {
  if (!(max_distance > 0.0)) throw ConfigError("invalid_mesh", "maximum distance must be positive");
  if (interior_knots < 0) throw ConfigError("invalid_mesh", "interior knot count must be non-negative");
  return Mesh1D(linspace(0.0, max_distance, interior_knots + 1), degree, dirichlet_left);
}

Mesh2D::Mesh2D(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles, std::vector<Point> inner_boundary,
               std::vector<Point> outer_boundary)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      inner_(std::move(inner_boundary)),
      outer_(std::move(outer_boundary)) {
  if (vertices_.size() < 3 || triangles_.empty()) throw DataError("invalid_mesh", "mesh needs vertices and triangles");
  const int nv = size();
  std::map<std::pair<int, int>, int> edges;
  for (auto& tri : triangles_) {
    for (int v : tri)
      if (v < 0 || v >= nv) throw DataError("invalid_mesh", "triangle references a missing vertex");
    const double a = cross(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
    if (a == 0.0) throw DataError("invalid_mesh", "degenerate triangle");
    if (a < 0.0) std::swap(tri[1], tri[2]);
    for (int k = 0; k < 3; ++k) {
      const int i = tri[k], j = tri[(k + 1) % 3];
      if (++edges[{std::min(i, j), std::max(i, j)}] > 2)
        throw DataError("invalid_mesh", "edge shared by more than two triangles");
    }
  }
  build_index();
}

void Mesh2D::build_index() {
  double xmin = vertices_[0].x, xmax = xmin, ymin = vertices_[0].y, ymax = ymin;
  for (const auto& v : vertices_) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  const double w = std::max(xmax - xmin, 1e-300), h = std::max(ymax - ymin, 1e-300);
  tolerance_ = 1e-12 * std::max(w, h);
  const int side = std::max(1, static_cast<int>(std::ceil(std::sqrt(triangles_.size() / 2.0))));
  nx_ = ny_ = side;
  x0_ = xmin;
  y0_ = ymin;
  cell_w_ = w / nx_;
  cell_h_ = h / ny_;
  buckets_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  auto cell_x = [&](double x) { return std::clamp(static_cast<int>(std::floor((x - x0_) / cell_w_)), 0, nx_ - 1); };
  auto cell_y = [&](double y) { return std::clamp(static_cast<int>(std::floor((y - y0_) / cell_h_)), 0, ny_ - 1); };
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    const auto& tri = triangles_[t];
    double ax = vertices_[tri[0]].x, bx = ax, ay = vertices_[tri[0]].y, by = ay;
    for (int k = 1; k < 3; ++k) {
      ax = std::min(ax, vertices_[tri[k]].x);
      bx = std::max(bx, vertices_[tri[k]].x);
      ay = std::min(ay, vertices_[tri[k]].y);
      by = std::max(by, vertices_[tri[k]].y);
    }
    for (int i = cell_x(ax - tolerance_); i <= cell_x(bx + tolerance_); ++i)
      for (int j = cell_y(ay - tolerance_); j <= cell_y(by + tolerance_); ++j)
        buckets_[static_cast<std::size_t>(j) * nx_ + i].push_back(t);
  }
}

std::optional<Barycentric> Mesh2D::locate(Point p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
  const double fx = (p.x - x0_) / cell_w_, fy = (p.y - y0_) / cell_h_;
  if (fx < -1e-9 || fy < -1e-9 || fx > nx_ + 1e-9 || fy > ny_ + 1e-9) return std::nullopt;
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, nx_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, ny_ - 1);
  for (int t : buckets_[static_cast<std::size_t>(j) * nx_ + i]) {
    const auto& tri = triangles_[t];
    const Point a = vertices_[tri[0]], b = vertices_[tri[1]], c = vertices_[tri[2]];
    const double det = cross(a, b, c);
    const double w1 = cross(a, p, c) / det;
    const double w2 = cross(a, b, p) / det;
    const double w0 = 1.0 - w1 - w2;
    const double tol = 1e-12;
    if (w0 >= -tol && w1 >= -tol && w2 >= -tol) {
      Barycentric out;
      out.triangle = t;
      out.vertices = tri;
      out.weights = {w0, w1, w2};
      return out;
    }
  }
  return std::nullopt;
}

Mesh2D build_mesh_2d(std::span<const Point> sites, double inner_edge, double outer_edge, double extension) {
  if (!(inner_edge > 0.0) || !(outer_edge > 0.0) || !(extension > 0.0))
    throw ConfigError("invalid_mesh", "mesh edge lengths and extension must be positive");
  if (!(inner_edge < outer_edge)) throw ConfigError("invalid_mesh", "inner_edge must be smaller than outer_edge");
  if (sites.size() < 3) throw DataError("degenerate_sites", "at least three non-collinear sites are required");
  // Collinearity: farthest point from the first site, then the largest area.
  std::size_t far = 0;
  for (std::size_t i = 1; i < sites.size(); ++i)
    if (distance(sites[0], sites[i]) > distance(sites[0], sites[far])) far = i;
  const double span = distance(sites[0], sites[far]);
  double area = 0.0;
  for (const auto& s : sites) area = std::max(area, std::abs(cross(sites[0], sites[far], s)));
  if (!(span > 0.0) || !(area > 1e-12 * span * span))
    throw DataError("degenerate_sites", "sites are coincident or collinear");

  double xmin = sites[0].x, xmax = xmin, ymin = sites[0].y, ymax = ymin;
  for (const auto& s : sites) {
    xmin = std::min(xmin, s.x);
    xmax = std::max(xmax, s.x);
    ymin = std::min(ymin, s.y);
    ymax = std::max(ymax, s.y);
  }
  const int n_out = std::max(1, static_cast<int>(std::ceil(extension / outer_edge - 1e-9)));
  auto lines = [&](double lo, double hi, int& first_inner, int& last_inner) {
    const int n_in = std::max(1, static_cast<int>(std::ceil((hi - lo) / inner_edge - 1e-9)));
    std::vector<double> out = linspace(lo - extension, lo, n_out);
    const auto in = linspace(lo, hi, n_in);
    first_inner = static_cast<int>(out.size()) - 1;
    out.insert(out.end(), in.begin() + 1, in.end());
    last_inner = static_cast<int>(out.size()) - 1;
    const auto right = linspace(hi, hi + extension, n_out);
    out.insert(out.end(), right.begin() + 1, right.end());
    return out;
  };
  int xi0 = 0, xi1 = 0, yi0 = 0, yi1 = 0;
  const auto xs = lines(xmin, xmax, xi0, xi1);
  const auto ys = lines(ymin, ymax, yi0, yi1);
  const int nx = static_cast<int>(xs.size()), ny = static_cast<int>(ys.size());

  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) vertices.push_back({xs[i], ys[j]});
  auto id = [nx](int i, int j) { return j * nx + i; };

  std::vector<std::array<int, 3>> inner_tris, outer_tris;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const bool inner = i >= xi0 && i < xi1 && j >= yi0 && j < yi1;
      auto& dst = inner ? inner_tris : outer_tris;
      dst.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      dst.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  inner_tris.insert(inner_tris.end(), outer_tris.begin(), outer_tris.end());
  std::vector<Point> inner_poly = {{xmin, ymin}, {xmax, ymin}, {xmax, ymax}, {xmin, ymax}};
  std::vector<Point> outer_poly = {{xs.front(), ys.front()}, {xs.back(), ys.front()}, {xs.back(), ys.back()},
                                   {xs.front(), ys.back()}};
  return Mesh2D(std::move(vertices), std::move(inner_tris), std::move(inner_poly), std::move(outer_poly));
}

ObservationMatrix observation_matrix(const Mesh2D& mesh, std::span<const Point> points) {
  std::vector<Triplet> t;
  t.reserve(points.size() * 3);
  for (std::size_t r = 0; r < points.size(); ++r) {
    const auto loc = mesh.locate(points[r]);
    if (!loc) {
      std::ostringstream msg;
      msg << "point " << r << " at (" << points[r].x << ", " << points[r].y << ") lies outside the mesh";
      throw DataError("outside_mesh", msg.str());
    }
    for (int k = 0; k < 3; ++k)
      if (loc->weights[k] != 0.0) t.emplace_back(static_cast<int>(r), loc->vertices[k], loc->weights[k]);
  }
  return from_triplets(static_cast<Eigen::Index>(points.size()), mesh.size(), t);
}

ObservationMatrix observation_matrix(const Mesh1D& mesh, std::span<const double> distances) {
  std::vector<Triplet> t;
  const double tol = 1e-9 * (mesh.right() - mesh.left());
  for (std::size_t r = 0; r < distances.size(); ++r) {
    const double h = distances[r];
    if (!(h >= mesh.left() - tol && h <= mesh.right() + tol)) {
      std::ostringstream msg;
      msg << "distance " << h << " at index " << r << " lies outside [" << mesh.left() << ", " << mesh.right() << "]";
      throw DataError("outside_mesh", msg.str());
    }
    for (const auto& [j, v] : mesh.full_basis(h))
      if (j >= mesh.dropped()) t.emplace_back(static_cast<int>(r), j - mesh.dropped(), v);
  }
  return from_triplets(static_cast<Eigen::Index>(distances.size()), mesh.size(), t);
}

ObservationMatrix condition_observation_matrix(const ObservationMatrix& a_s, const ObservationMatrix& a_s0, int ell) {
  if (a_s0.rows() != 1) throw DataError("dimension_mismatch", "conditioning row must be a single row");
  if (a_s0.cols() != a_s.cols())
    throw DataError("dimension_mismatch", "conditioning row and observation matrix differ in column count");
  if (ell < 1) throw ConfigError("invalid_time_steps", "ell must be at least 1");
  const Eigen::Index d = a_s.rows(), m = a_s.cols();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(ell) * (a_s.nonZeros() + d * a_s0.nonZeros()));
  for (int b = 0; b < ell; ++b) {
    for (Eigen::Index c = 0; c < m; ++c)
      for (SparseMatrix::InnerIterator it(a_s, c); it; ++it)
        t.emplace_back(static_cast<int>(b * d + it.row()), static_cast<int>(b * m + c), it.value());
    for (Eigen::Index c = 0; c < m; ++c)
      for (SparseMatrix::InnerIterator it(a_s0, c); it; ++it)
        for (Eigen::Index i = 0; i < d; ++i) t.emplace_back(static_cast<int>(b * d + i), static_cast<int>(c), -it.value());
  }
  return from_triplets(d * ell, m * ell, t);
}

ObservationMatrix block_diagonal(const ObservationMatrix& a, int copies) {
  if (copies < 1) throw ConfigError("invalid_replicates", "replicate count must be at least 1");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(copies) * a.nonZeros());
  for (int b = 0; b < copies; ++b)
    for (Eigen::Index c = 0; c < a.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(a, c); it; ++it)
        t.emplace_back(static_cast<int>(b * a.rows() + it.row()), static_cast<int>(b * a.cols() + c), it.value());
  SparseMatrix m(a.rows() * copies, a.cols() * copies);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

ObservationMatrix replicate_observation_matrix(const ObservationMatrix& a_episode, int n) {
  return block_diagonal(a_episode, n);
}

}  // namespace mesh
}  // namespace condex
