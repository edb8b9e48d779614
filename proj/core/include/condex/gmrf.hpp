#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "condex/mesh.hpp"
#include "condex/random.hpp"

namespace condex::gmrf {

/// Symmetric sparse precision, stored with both triangles so products need no
/// self-adjoint views. Explicit zeros are never stored.
using SparsePrecision = SparseMatrix;

/// Lower-triangle (row >= col) triplets, the storage form used for export.
std::vector<Triplet> lower_triplets(const SparsePrecision& q);
/// Rebuilds a full symmetric matrix from lower-triangle triplets.
SparsePrecision from_lower_triplets(Eigen::Index dimension, const std::vector<Triplet>& lower);

/// Finite-element matrices: lumped (diagonal) mass and stiffness.
struct FemMatrices {
  Eigen::VectorXd mass;
  SparseMatrix stiffness;
};

/// Piecewise-linear elements on a triangulation (natural Neumann boundary).
FemMatrices fem_matrices(const mesh::Mesh2D& mesh);
/// B-spline elements on [knots.front(), knots.back()], in the constrained
/// basis when the mesh pins the left end.
FemMatrices fem_matrices(const mesh::Mesh1D& mesh);

struct SpdeParams {
  double kappa = 1.0;
  double tau = 1.0;
  /// Operator exponent, nu + D/2.
  double zeta = 1.5;
  int dimension = 2;
};

struct MaternParams {
  double range = 1.0;
  double sd = 1.0;
  double nu = 0.5;
  int dimension = 2;
};

/// kappa = sqrt(8 nu) / range; tau from the marginal-variance identity.
SpdeParams matern_to_spde(double range, double sd, double nu, int dimension);
MaternParams spde_to_matern(const SpdeParams& p);

/// Builds SPDE precisions for varying (kappa, tau) on one mesh. All outputs
/// share one sparsity pattern, so a factor's symbolic analysis can be reused.
///
/// zeta = 1 and 2 use the integer forms tau^2 K and tau^2 K C^-1 K with
/// K = kappa^2 C + G. zeta = 1.5 uses
///   tau^2 kappa^-1 [c0 K C^-1 K + c1 kappa^2 K + c2 kappa^4 C]
/// where c0 + c1 x + c2 x^2 is the least-squares fit of sqrt(x) on [0, 1].
class SpdeBuilder {
 public:
  SpdeBuilder(FemMatrices fem, double zeta, int dimension);
  SpdeBuilder(const mesh::Mesh2D& mesh, double zeta);
  SpdeBuilder(const mesh::Mesh1D& mesh, double zeta);

  SparsePrecision precision(double kappa, double tau) const;
  SparsePrecision precision(const SpdeParams& p) const { return precision(p.kappa, p.tau); }
  Eigen::Index size() const noexcept { return c_.rows(); }
  double zeta() const noexcept { return zeta_; }
  int dimension() const noexcept { return dimension_; }

 private:
  double zeta_;
  int dimension_;
  // C, G and G C^-1 G embedded in the union pattern.
  SparseMatrix c_, g_, gcg_;
};

SparsePrecision spde_precision(const mesh::Mesh2D& mesh, const SpdeParams& p);
SparsePrecision spde_precision(const mesh::Mesh1D& mesh, const SpdeParams& p);

/// Stationary AR(1) with unit marginal variance; |rho| < 1.
SparsePrecision ar1_precision(int ell, double rho);

SparsePrecision kronecker(const SparseMatrix& a, const SparseMatrix& b);

/// Block-diagonal concatenation.
SparseMatrix block_diagonal(const std::vector<SparseMatrix>& blocks);

/// Sparse Cholesky Q = P^T L L^T P with an approximate-minimum-degree
/// permutation P. refactor() reuses the symbolic analysis when the sparsity
/// pattern of the new matrix is unchanged.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(const SparsePrecision& q) { refactor(q); }

  /// Throws NotPositiveDefinite with the failing pivot (in permuted order).
  void refactor(const SparsePrecision& q);

  Eigen::Index size() const noexcept { return n_; }
  double log_determinant() const noexcept { return logdet_; }
  /// Number of non-zeros in L.
  Eigen::Index factor_nonzeros() const noexcept { return static_cast<Eigen::Index>(li_.size()); }
  /// True when the most recent refactor() skipped the symbolic analysis.
  bool reused_symbolic() const noexcept { return reused_; }

  /// perm()[k] is the original index placed at position k.
  const std::vector<int>& perm() const noexcept { return perm_; }
  /// The factor L in the permuted ordering.
  SparseMatrix factor() const;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  /// P^T L^-T z: maps standard normal z to a draw with precision Q.
  Eigen::VectorXd sample_transform(const Eigen::VectorXd& z) const;
  /// x^T Q x computed as |L^T P x|^2.
  double quadratic_form(const Eigen::VectorXd& x) const;
  /// Entries of Q^-1 on the pattern of L + L^T (Takahashi recursions),
  /// in the original ordering, both triangles stored.
  SparseMatrix selected_inverse() const;

 private:
  void analyze(const SparsePrecision& q);
  bool same_pattern(const SparsePrecision& q) const;

  Eigen::Index n_ = 0;
  std::vector<int> perm_, pinv_;
  // Pattern of the analyzed input.
  std::vector<int> q_outer_, q_inner_;
  // Upper triangle of P Q P^T in compressed columns, with the source index
  // of each entry in q's value array.
  std::vector<int> cp_, ci_, csrc_;
  // Row patterns of L in topological order, concatenated.
  std::vector<int> reach_ptr_, reach_;
  std::vector<int> lp_, li_;
  std::vector<double> lx_;
  double logdet_ = 0.0;
  bool reused_ = false;
};

/// log N(w; mean, Q^-1) with Q factorized as f.
double log_density(const CholeskyFactor& f, const Eigen::VectorXd& w, const Eigen::VectorXd& mean);
inline double log_density(const CholeskyFactor& f, const Eigen::VectorXd& w) {
  return log_density(f, w, Eigen::VectorXd::Zero(w.size()));
}

/// `count` independent draws (columns) from N(0, Q^-1).
Eigen::MatrixXd sample_gmrf(const CholeskyFactor& f, int count, std::uint64_t seed);

/// Precomputed conditioning of N(., Q^-1) draws on B w = e:
/// w - Q^-1 B^T (B Q^-1 B^T)^-1 (B w - e).
class Kriging {
 public:
  Kriging(const CholeskyFactor& f, const Eigen::MatrixXd& b);

  Eigen::VectorXd apply(const Eigen::VectorXd& w, const Eigen::VectorXd& e) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& w) const { return apply(w, Eigen::VectorXd::Zero(b_.rows())); }
  const Eigen::MatrixXd& constraint() const noexcept { return b_; }
  /// Q^-1 B^T.
  const Eigen::MatrixXd& qinv_bt() const noexcept { return v_; }
  /// B Q^-1 B^T.
  const Eigen::MatrixXd& constraint_covariance() const noexcept { return s_; }

 private:
  Eigen::MatrixXd b_, v_, s_, s_inv_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> exact_;
};

/// Throws NumericalError("rank_deficient_constraint") when B Q^-1 B^T is singular.
Eigen::VectorXd condition_by_kriging(const Eigen::VectorXd& w, const CholeskyFactor& f, const Eigen::MatrixXd& b,
                                     const Eigen::VectorXd& e);

}  // namespace condex::gmrf
