#include <algorithm>
#include <cmath>

#include <Eigen/OrderingMethods>

#include "condex/error.hpp"
#include "condex/gmrf.hpp"

// Up-looking sparse Cholesky: row k of L is the elimination-tree reach of
// column k of the permuted upper triangle, solved against the rows above it.

namespace condex::gmrf {

bool CholeskyFactor::same_pattern(const SparsePrecision& q) const {
  if (q.rows() != n_ || q.cols() != n_ || !q.isCompressed()) return false;
  if (static_cast<std::size_t>(q.nonZeros()) != q_inner_.size()) return false;
  return std::equal(q_outer_.begin(), q_outer_.end(), q.outerIndexPtr()) &&
         std::equal(q_inner_.begin(), q_inner_.end(), q.innerIndexPtr());
}

void CholeskyFactor::analyze(const SparsePrecision& q) {
  n_ = q.rows();
  const int n = static_cast<int>(n_);
  q_outer_.assign(q.outerIndexPtr(), q.outerIndexPtr() + n + 1);
  q_inner_.assign(q.innerIndexPtr(), q.innerIndexPtr() + q.nonZeros());

  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
  Eigen::AMDOrdering<int> amd;
  amd(q, p);
  perm_.assign(p.indices().data(), p.indices().data() + n);
  pinv_.assign(n, 0);
  for (int k = 0; k < n; ++k) pinv_[perm_[k]] = k;

  // Upper triangle of P Q P^T.
  cp_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j)
    for (int s = q_outer_[j]; s < q_outer_[j + 1]; ++s) {
      const int ni = pinv_[q_inner_[s]], nj = pinv_[j];
      if (ni <= nj) ++cp_[nj + 1];
    }
  for (int j = 0; j < n; ++j) cp_[j + 1] += cp_[j];
  ci_.assign(cp_[n], 0);
  csrc_.assign(cp_[n], 0);
  std::vector<int> next(cp_.begin(), cp_.end() - 1);
  for (int j = 0; j < n; ++j)
    for (int s = q_outer_[j]; s < q_outer_[j + 1]; ++s) {
      const int ni = pinv_[q_inner_[s]], nj = pinv_[j];
      if (ni > nj) continue;
      const int at = next[nj]++;
      ci_[at] = ni;
      csrc_[at] = s;
    }

  // Elimination tree with path compression.
  std::vector<int> parent(n, -1), ancestor(n, -1);
  for (int k = 0; k < n; ++k)
    for (int s = cp_[k]; s < cp_[k + 1]; ++s)
      for (int i = ci_[s]; i != -1 && i < k;) {
        const int up = ancestor[i];
        ancestor[i] = k;
        if (up == -1) parent[i] = k;
        i = up;
      }

  // Row patterns (ereach) and column counts.
  std::vector<int> mark(n, -1), stack(n), counts(n, 1);
  reach_ptr_.assign(n + 1, 0);
  reach_.clear();
  for (int k = 0; k < n; ++k) {
    mark[k] = k;
    int top = n;
    for (int s = cp_[k]; s < cp_[k + 1]; ++s) {
      int i = ci_[s];
      if (i > k) continue;
      int len = 0;
      for (; mark[i] != k; i = parent[i]) {
        stack[len++] = i;
        mark[i] = k;
      }
      while (len > 0) stack[--top] = stack[--len];
    }
    for (int t = top; t < n; ++t) {
      reach_.push_back(stack[t]);
      ++counts[stack[t]];
    }
    reach_ptr_[k + 1] = static_cast<int>(reach_.size());
  }
  lp_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) lp_[j + 1] = lp_[j] + counts[j];
  li_.assign(lp_[n], 0);
  lx_.assign(lp_[n], 0.0);
}

void CholeskyFactor::refactor(const SparsePrecision& input) {
  if (input.rows() != input.cols()) throw DataError("invalid_precision", "precision must be square");
  SparsePrecision compressed;
  const SparsePrecision* qp = &input;
  if (!input.isCompressed()) {
    compressed = input;
    compressed.makeCompressed();
    qp = &compressed;
  }
  const SparsePrecision& q = *qp;
  reused_ = same_pattern(q);
  if (!reused_) analyze(q);

  const int n = static_cast<int>(n_);
  const double* qx = q.valuePtr();
  std::vector<int> fill(lp_.begin(), lp_.end() - 1);
  std::vector<double> x(n, 0.0);
  logdet_ = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int s = cp_[k]; s < cp_[k + 1]; ++s) x[ci_[s]] += qx[csrc_[s]];
    double d = x[k];
    x[k] = 0.0;
    for (int t = reach_ptr_[k]; t < reach_ptr_[k + 1]; ++t) {
      const int i = reach_[t];
      const double lki = x[i] / lx_[lp_[i]];
      x[i] = 0.0;
      for (int s = lp_[i] + 1; s < fill[i]; ++s) x[li_[s]] -= lx_[s] * lki;
      d -= lki * lki;
      const int at = fill[i]++;
      li_[at] = k;
      lx_[at] = lki;
    }
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::fill(x.begin(), x.end(), 0.0);
      n_ = 0;  // force re-analysis next time; the factor is unusable
      q_inner_.clear();
      throw NotPositiveDefinite(k);
    }
    const int at = fill[k]++;
    li_[at] = k;
    lx_[at] = std::sqrt(d);
    logdet_ += std::log(lx_[at]);
  }
  logdet_ *= 2.0;
}

SparseMatrix CholeskyFactor::factor() const {
  const int n = static_cast<int>(n_);
  SparseMatrix l(n, n);
  std::vector<Triplet> t;
  t.reserve(li_.size());
  for (int j = 0; j < n; ++j)
    for (int s = lp_[j]; s < lp_[j + 1]; ++s) t.emplace_back(li_[s], j, lx_[s]);
  l.setFromTriplets(t.begin(), t.end());
  return l;
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  const int n = static_cast<int>(n_);
  if (b.size() != n) throw DataError("dimension_mismatch", "right-hand side length differs from factor size");
  Eigen::VectorXd y(n);
  for (int k = 0; k < n; ++k) y[k] = b[perm_[k]];
  for (int j = 0; j < n; ++j) {
    y[j] /= lx_[lp_[j]];
    const double yj = y[j];
    for (int s = lp_[j] + 1; s < lp_[j + 1]; ++s) y[li_[s]] -= lx_[s] * yj;
  }
  for (int j = n - 1; j >= 0; --j) {
    double v = y[j];
    for (int s = lp_[j] + 1; s < lp_[j + 1]; ++s) v -= lx_[s] * y[li_[s]];
    y[j] = v / lx_[lp_[j]];
  }
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) out[perm_[k]] = y[k];
  return out;
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd out(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) out.col(c) = solve(Eigen::VectorXd(b.col(c)));
  return out;
}

Eigen::VectorXd CholeskyFactor::sample_transform(const Eigen::VectorXd& z) const {
  const int n = static_cast<int>(n_);
  if (z.size() != n) throw DataError("dimension_mismatch", "noise length differs from factor size");
  Eigen::VectorXd y = z;
  for (int j = n - 1; j >= 0; --j) {
    double v = y[j];
    for (int s = lp_[j] + 1; s < lp_[j + 1]; ++s) v -= lx_[s] * y[li_[s]];
    y[j] = v / lx_[lp_[j]];
  }
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) out[perm_[k]] = y[k];
  return out;
}

double CholeskyFactor::quadratic_form(const Eigen::VectorXd& x) const {
  const int n = static_cast<int>(n_);
  if (x.size() != n) throw DataError("dimension_mismatch", "vector length differs from factor size");
  // (L^T P x)_j = sum_{i >= j} L_ij (P x)_i
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    double v = 0.0;
    for (int s = lp_[j]; s < lp_[j + 1]; ++s) v += lx_[s] * x[perm_[li_[s]]];
    acc += v * v;
  }
  return acc;
}

SparseMatrix CholeskyFactor::selected_inverse() const {
  const int n = static_cast<int>(n_);
  std::vector<double> sx(li_.size(), 0.0);
  std::vector<double> lcol(n, 0.0), acc(n, 0.0);
  std::vector<int> mark(n, -1);
  for (int j = n - 1; j >= 0; --j) {
    const int first = lp_[j], last = lp_[j + 1];
    const double ljj = lx_[first];
    for (int s = first + 1; s < last; ++s) {
      mark[li_[s]] = j;
      lcol[li_[s]] = lx_[s];
      acc[li_[s]] = 0.0;
    }
    // acc[i] = sum_{k in J} L_kj Sigma_ik over the off-diagonal rows J of column j.
    for (int s = first + 1; s < last; ++s) {
      const int k = li_[s];
      const double lkj = lx_[s];
      for (int t = lp_[k]; t < lp_[k + 1]; ++t) {
        const int r = li_[t];
        if (mark[r] != j) continue;
        acc[r] += lkj * sx[t];
        if (r != k) acc[k] += lcol[r] * sx[t];
      }
    }
    double diag = 1.0 / (ljj * ljj);
    for (int s = first + 1; s < last; ++s) {
      sx[s] = -acc[li_[s]] / ljj;
      diag -= lx_[s] * sx[s] / ljj;
    }
    sx[first] = diag;
  }
  std::vector<Triplet> t;
  t.reserve(2 * li_.size());
  for (int j = 0; j < n; ++j)
    for (int s = lp_[j]; s < lp_[j + 1]; ++s) {
      const int a = perm_[li_[s]], b = perm_[j];
      t.emplace_back(a, b, sx[s]);
      if (a != b) t.emplace_back(b, a, sx[s]);
    }
  SparseMatrix out(n, n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

}  // namespace condex::gmrf
