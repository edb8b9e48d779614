#include <array>
#include <cmath>

#include "condex/error.hpp"
#include "condex/gmrf.hpp"

namespace condex::gmrf {
namespace {

// 4-point Gauss-Legendre on [-1, 1]; exact for the degree-4 integrands of
// quadratic splines.
constexpr std::array<double, 4> kGaussNodes = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                               0.8611363115940526};
constexpr std::array<double, 4> kGaussWeights = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                                 0.3478548451374538};

}  // namespace

FemMatrices fem_matrices(const mesh::Mesh2D& mesh) {
  const int n = mesh.size();
  FemMatrices out;
  out.mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> t;
  t.reserve(mesh.triangles().size() * 9);
  const auto& v = mesh.vertices();
  for (const auto& tri : mesh.triangles()) {
    const Point a = v[tri[0]], b = v[tri[1]], c = v[tri[2]];
    const double area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    const double area = 0.5 * area2;
    // Gradient of the hat function at vertex k is the rotated opposite edge / 2A.
    const std::array<Point, 3> e = {Point{c.x - b.x, c.y - b.y}, Point{a.x - c.x, a.y - c.y},
                                    Point{b.x - a.x, b.y - a.y}};
    for (int i = 0; i < 3; ++i) {
      out.mass[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j) {
        const double g = (e[i].x * e[j].x + e[i].y * e[j].y) / (4.0 * area);
        t.emplace_back(tri[i], tri[j], g);
      }
    }
  }
  out.stiffness.resize(n, n);
  out.stiffness.setFromTriplets(t.begin(), t.end());
  out.stiffness.prune([](Eigen::Index, Eigen::Index, double x) { return x != 0.0; });
  out.stiffness.makeCompressed();
  return out;
}

FemMatrices fem_matrices(const mesh::Mesh1D& mesh) {
  const int n = mesh.size();
  const int drop = mesh.dropped();
  FemMatrices out;
  out.mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> t;
  const auto& k = mesh.knots();
  for (std::size_t s = 0; s + 1 < k.size(); ++s) {
    const double half = 0.5 * (k[s + 1] - k[s]), mid = 0.5 * (k[s + 1] + k[s]);
    for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
      const double h = mid + half * kGaussNodes[q];
      const double w = half * kGaussWeights[q];
      for (const auto& [i, phi] : mesh.full_basis(h))
        if (i >= drop) out.mass[i - drop] += w * phi;
      const auto d = mesh.full_basis_derivative(h);
      for (const auto& [i, di] : d) {
        if (i < drop) continue;
        for (const auto& [j, dj] : d)
          if (j >= drop) t.emplace_back(i - drop, j - drop, w * di * dj);
      }
    }
  }
  out.stiffness.resize(n, n);
  out.stiffness.setFromTriplets(t.begin(), t.end());
  out.stiffness.prune([](Eigen::Index, Eigen::Index, double x) { return x != 0.0; });
  out.stiffness.makeCompressed();
  for (int i = 0; i < n; ++i)
    if (!(out.mass[i] > 0.0)) throw NumericalError("fem_assembly", "non-positive lumped mass");
  return out;
}

}  // namespace condex::gmrf
