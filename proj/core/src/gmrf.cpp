#include "condex/gmrf.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "condex/error.hpp"
#include "condex/stats.hpp"

namespace condex::gmrf {
namespace {

SparseMatrix diagonal_matrix(const Eigen::VectorXd& d) {
  SparseMatrix m(d.size(), d.size());
  std::vector<Triplet> t;
  for (Eigen::Index i = 0; i < d.size(); ++i) t.emplace_back(i, i, d[i]);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SparseMatrix abs_pattern(const SparseMatrix& m) {
  SparseMatrix out = m;
  for (Eigen::Index i = 0; i < out.nonZeros(); ++i) out.valuePtr()[i] = 1.0;
  return out;
}

// m re-expressed on the (superset) pattern of `pattern`.
SparseMatrix embed(const SparseMatrix& m, const SparseMatrix& pattern) {
  SparseMatrix out = m + 0.0 * pattern;
  out.makeCompressed();
  return out;
}

// Least-squares quadratic fit of sqrt(x) on [0, 1].
constexpr double kHalfC0 = 6.0 / 35.0;
constexpr double kHalfC1 = 48.0 / 35.0;
constexpr double kHalfC2 = -4.0 / 7.0;

}  // namespace

std::vector<Triplet> lower_triplets(const SparsePrecision& q) {
  std::vector<Triplet> out;
  for (Eigen::Index c = 0; c < q.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(q, c); it; ++it)
      if (it.row() >= c) out.emplace_back(it.row(), c, it.value());
  return out;
}

SparsePrecision from_lower_triplets(Eigen::Index dimension, const std::vector<Triplet>& lower) {
  std::vector<Triplet> t;
  t.reserve(lower.size() * 2);
  for (const auto& x : lower) {
    if (x.row() < 0 || x.col() < 0 || x.row() >= dimension || x.col() >= dimension)
      throw DataError("invalid_precision", "triplet index out of range");
    if (x.value() == 0.0) continue;
    t.push_back(x);
    if (x.row() != x.col()) t.emplace_back(x.col(), x.row(), x.value());
  }
  SparseMatrix q(dimension, dimension);
  q.setFromTriplets(t.begin(), t.end());
  q.makeCompressed();
  return q;
}

SpdeParams matern_to_spde(double range, double sd, double nu, int dimension) {
  if (!(range > 0.0) || !(sd > 0.0) || !(nu > 0.0))
    throw ConfigError("invalid_matern", "range, sd and nu must be positive");
  if (dimension != 1 && dimension != 2) throw ConfigError("invalid_matern", "dimension must be 1 or 2");
  SpdeParams p;
  p.dimension = dimension;
  p.zeta = nu + dimension / 2.0;
  p.kappa = std::sqrt(8.0 * nu) / range;
  const double half_d = dimension / 2.0;
  const double unit_var = std::tgamma(nu) / (std::tgamma(nu + half_d) * std::pow(4.0 * std::numbers::pi, half_d) *
                                             std::pow(p.kappa, 2.0 * nu));
  p.tau = std::sqrt(unit_var) / sd;
  return p;
}

MaternParams spde_to_matern(const SpdeParams& p) {
  MaternParams m;
  m.dimension = p.dimension;
  m.nu = p.zeta - p.dimension / 2.0;
  if (!(m.nu > 0.0)) throw ConfigError("invalid_spde", "zeta must exceed D/2");
  m.range = std::sqrt(8.0 * m.nu) / p.kappa;
  const double half_d = p.dimension / 2.0;
  const double unit_var = std::tgamma(m.nu) / (std::tgamma(m.nu + half_d) * std::pow(4.0 * std::numbers::pi, half_d) *
                                               std::pow(p.kappa, 2.0 * m.nu));
  m.sd = std::sqrt(unit_var) / p.tau;
  return m;
}

SpdeBuilder::SpdeBuilder(FemMatrices fem, double zeta, int dimension) : zeta_(zeta), dimension_(dimension) {
  const bool ok = (dimension == 1 && (zeta == 1.0 || zeta == 2.0)) || (dimension == 2 && (zeta == 1.5 || zeta == 2.0));
  if (!ok) throw ConfigError("unsupported_zeta", "supported exponents: zeta in {1, 2} for D=1, {1.5, 2} for D=2");
  const SparseMatrix c = diagonal_matrix(fem.mass);
  SparseMatrix pattern = abs_pattern(c) + abs_pattern(fem.stiffness);
  SparseMatrix gcg;
  if (zeta != 1.0) {
    gcg = fem.stiffness * diagonal_matrix(fem.mass.cwiseInverse()) * fem.stiffness;
    gcg = SparseMatrix(gcg.transpose()) * 0.5 + gcg * 0.5;
    pattern = pattern + abs_pattern(gcg);
  } else {
    gcg = 0.0 * pattern;
  }
  pattern.makeCompressed();
  c_ = embed(c, pattern);
  g_ = embed(fem.stiffness, pattern);
  gcg_ = embed(gcg, pattern);
}

SpdeBuilder::SpdeBuilder(const mesh::Mesh2D& mesh, double zeta) : SpdeBuilder(fem_matrices(mesh), zeta, 2) {}
SpdeBuilder::SpdeBuilder(const mesh::Mesh1D& mesh, double zeta) : SpdeBuilder(fem_matrices(mesh), zeta, 1) {}

SparsePrecision SpdeBuilder::precision(double kappa, double tau) const {
  if (!(kappa > 0.0) || !(tau > 0.0)) throw ConfigError("invalid_spde", "kappa and tau must be positive");
  const double k2 = kappa * kappa, k4 = k2 * k2, t2 = tau * tau;
  double a = 0.0, b = 0.0, c = 0.0;  // coefficients of C, G, G C^-1 G
  if (zeta_ == 1.0) {
    a = t2 * k2;
    b = t2;
  } else if (zeta_ == 2.0) {
    a = t2 * k4;
    b = 2.0 * t2 * k2;
    c = t2;
  } else {
    const double s = t2 / kappa;
    a = s * (kHalfC0 + kHalfC1 + kHalfC2) * k4;
    b = s * (2.0 * kHalfC0 + kHalfC1) * k2;
    c = s * kHalfC0;
  }
  SparseMatrix q = c_;
  const double* pc = c_.valuePtr();
  const double* pg = g_.valuePtr();
  const double* pgcg = gcg_.valuePtr();
  double* out = q.valuePtr();
  for (Eigen::Index i = 0; i < q.nonZeros(); ++i) out[i] = a * pc[i] + b * pg[i] + c * pgcg[i];
  return q;
}

SparsePrecision spde_precision(const mesh::Mesh2D& mesh, const SpdeParams& p) {
  if (p.dimension != 2) throw ConfigError("invalid_spde", "2D mesh needs dimension 2");
  return SpdeBuilder(mesh, p.zeta).precision(p);
}

SparsePrecision spde_precision(const mesh::Mesh1D& mesh, const SpdeParams& p) {
  if (p.dimension != 1) throw ConfigError("invalid_spde", "1D mesh needs dimension 1");
  return SpdeBuilder(mesh, p.zeta).precision(p);
}

SparsePrecision ar1_precision(int ell, double rho) {
  if (ell < 1) throw ConfigError("invalid_ar1", "ell must be at least 1");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("invalid_ar1", "AR(1) coefficient must satisfy |rho| < 1");
  SparseMatrix q(ell, ell);
  if (ell == 1) {
    q.insert(0, 0) = 1.0;
    q.makeCompressed();
    return q;
  }
  const double s = 1.0 / (1.0 - rho * rho);
  std::vector<Triplet> t;
  for (int i = 0; i < ell; ++i) {
    const bool end = i == 0 || i == ell - 1;
    t.emplace_back(i, i, s * (end ? 1.0 : 1.0 + rho * rho));
    if (rho != 0.0 && i + 1 < ell) {
      t.emplace_back(i, i + 1, -rho * s);
      t.emplace_back(i + 1, i, -rho * s);
    }
  }
  q.setFromTriplets(t.begin(), t.end());
  q.makeCompressed();
  return q;
}

SparsePrecision kronecker(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros()) * b.nonZeros());
  for (Eigen::Index ca = 0; ca < a.outerSize(); ++ca)
    for (SparseMatrix::InnerIterator ia(a, ca); ia; ++ia)
      for (Eigen::Index cb = 0; cb < b.outerSize(); ++cb)
        for (SparseMatrix::InnerIterator ib(b, cb); ib; ++ib)
          t.emplace_back(ia.row() * b.rows() + ib.row(), ca * b.cols() + cb, ia.value() * ib.value());
  SparseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  out.setFromTriplets(t.begin(), t.end());
  out.makeCompressed();
  return out;
}

SparseMatrix block_diagonal(const std::vector<SparseMatrix>& blocks) {
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
    nnz += b.nonZeros();
  }
  std::vector<Triplet> t;
  t.reserve(nnz);
  Eigen::Index r0 = 0, c0 = 0;
  for (const auto& b : blocks) {
    for (Eigen::Index c = 0; c < b.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(b, c); it; ++it) t.emplace_back(r0 + it.row(), c0 + c, it.value());
    r0 += b.rows();
    c0 += b.cols();
  }
  SparseMatrix out(rows, cols);
  out.setFromTriplets(t.begin(), t.end());
  out.makeCompressed();
  return out;
}

double log_density(const CholeskyFactor& f, const Eigen::VectorXd& w, const Eigen::VectorXd& mean) {
  const auto n = static_cast<double>(w.size());
  return 0.5 * f.log_determinant() - 0.5 * n * stats::kLog2Pi - 0.5 * f.quadratic_form(w - mean);
}

Eigen::MatrixXd sample_gmrf(const CholeskyFactor& f, int count, std::uint64_t seed) {
  Eigen::MatrixXd out(f.size(), count);
  const Rng root(seed);
  for (int s = 0; s < count; ++s) {
    Rng rng = root.split(static_cast<std::uint64_t>(s));
    out.col(s) = f.sample_transform(rng.normal_vector(f.size()));
  }
  return out;
}

Kriging::Kriging(const CholeskyFactor& f, const Eigen::MatrixXd& b) : b_(b) {
  if (b.cols() != f.size()) throw DataError("dimension_mismatch", "constraint matrix column count differs from Q");
  v_ = f.solve(Eigen::MatrixXd(b.transpose()));
  s_ = b_ * v_;
  s_ = 0.5 * (s_ + s_.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * top) || !(top > 0.0))
    throw NumericalError("rank_deficient_constraint", "B Q^-1 B^T is singular");
  s_inv_ = s_.llt().solve(Eigen::MatrixXd::Identity(s_.rows(), s_.cols()));
  // Single-entry constraint rows are imposed exactly.
  for (Eigen::Index r = 0; r < b_.rows(); ++r) {
    Eigen::Index col = -1, count = 0;
    for (Eigen::Index c = 0; c < b_.cols(); ++c)
      if (b_(r, c) != 0.0) {
        col = c;
        ++count;
      }
    if (count == 1) exact_.emplace_back(r, col);
  }
}

Eigen::VectorXd Kriging::apply(const Eigen::VectorXd& w, const Eigen::VectorXd& e) const {
  Eigen::VectorXd out = w - v_ * (s_inv_ * (b_ * w - e));
  for (const auto& [r, c] : exact_) out[c] = e[r] / b_(r, c);
  return out;
}

Eigen::VectorXd condition_by_kriging(const Eigen::VectorXd& w, const CholeskyFactor& f, const Eigen::MatrixXd& b,
                                     const Eigen::VectorXd& e) {
  return Kriging(f, b).apply(w, e);
}

}  // namespace condex::gmrf
