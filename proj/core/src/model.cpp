#include "condex/model.hpp"

#include <algorithm>
#include <cmath>

#include "condex/error.hpp"

namespace condex::model {

const char* to_string(AlphaForm v) noexcept {
  switch (v) {
    case AlphaForm::one: return "one";
    case AlphaForm::parametric: return "parametric";
    case AlphaForm::spline: return "spline";
  }
  return "?";
}

const char* to_string(BetaMode v) noexcept { return v == BetaMode::estimated ? "estimated" : "fixed"; }

const char* to_string(Residual v) noexcept {
  switch (v) {
    case Residual::subtract_s0: return "subtract_s0";
    case Residual::condition_s0: return "condition_s0";
    case Residual::none: return "none";
  }
  return "?";
}

AlphaForm parse_alpha_form(const std::string& s) {
  if (s == "one") return AlphaForm::one;
  if (s == "parametric") return AlphaForm::parametric;
  if (s == "spline") return AlphaForm::spline;
  throw ConfigError("invalid_value", "alpha form must be one, parametric or spline (got '" + s + "')");
}

BetaMode parse_beta_mode(const std::string& s) {
  if (s == "fixed" || s == "0") return BetaMode::fixed_zero;
  if (s == "estimated") return BetaMode::estimated;
  throw ConfigError("invalid_value", "beta mode must be fixed or estimated (got '" + s + "')");
}

Residual parse_residual(const std::string& s) {
  if (s == "subtract_s0") return Residual::subtract_s0;
  if (s == "condition_s0") return Residual::condition_s0;
  if (s == "none") return Residual::none;
  throw ConfigError("invalid_value", "residual must be subtract_s0, condition_s0 or none (got '" + s + "')");
}

namespace {

std::vector<Hyper> hyper_kinds(const ModelSpec& s) {
  std::vector<Hyper> k = {Hyper::noise_variance};
  if (s.residual != Residual::none) {
    k.push_back(Hyper::residual_sd);
    k.push_back(Hyper::residual_range);
    if (s.ell > 1) k.push_back(Hyper::time_correlation);
    if (s.beta == BetaMode::estimated) k.push_back(Hyper::beta);
  }
  if (s.alpha == AlphaForm::parametric) {
    k.push_back(Hyper::alpha_range);
    k.push_back(Hyper::alpha_shape);
  }
  return k;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

void ModelSpec::validate() const {
  if (ell < 1) throw ConfigError("invalid_spec", "ell must be at least 1");
  if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
    throw ConfigError("invalid_spec", "threshold quantile must lie in (0,1)");
  if (residual == Residual::none && alpha != AlphaForm::spline && !gamma)
    throw ConfigError("invalid_spec", "a model without residual process needs a spline alpha or a gamma term");
  if (residual == Residual::none && beta == BetaMode::estimated)
    throw ConfigError("invalid_spec", "beta scales the residual process and needs one");
  if (zeta != 1.5 && zeta != 2.0) throw ConfigError("invalid_spec", "residual zeta must be 1.5 or 2");
  if (spline_zeta != 1.0 && spline_zeta != 2.0) throw ConfigError("invalid_spec", "spline zeta must be 1 or 2");
  if (!(spline_range > 0.0) || !(spline_sd > 0.0)) throw ConfigError("invalid_spec", "spline prior range and sd must be positive");
  if (!(std::abs(spline_rho) < 1.0)) throw ConfigError("invalid_spec", "spline AR coefficient must satisfy |rho| < 1");
  if (interior_knots < 1) throw ConfigError("invalid_spec", "at least one interior knot is required");
  if (spline_degree < 1 || spline_degree > 3) throw ConfigError("invalid_spec", "spline degree must be 1, 2 or 3");
  if (hyper_kinds(*this).size() > 5)
    throw ConfigError("invalid_spec", "at most five hyperparameters are supported; drop beta, parametric alpha or the time dimension");
}

ModelSpec table_model(int number) {
  ModelSpec s;
  switch (number) {
    case 0: s.alpha = AlphaForm::one; s.gamma = false; break;
    case 1: s.gamma = false; break;
    case 2: s.alpha = AlphaForm::one; break;
    case 3: break;
    case 4: s.beta = BetaMode::estimated; break;
    case 5: s.gamma = false; s.beta = BetaMode::estimated; break;
    case 6: s.residual = Residual::none; break;
    default: throw ConfigError("invalid_model", "model number must be between 0 and 6");
  }
  return s;
}

double parametric_alpha(double dist, double lambda, double kappa_a) {
  if (!(lambda > 0.0) || !(kappa_a >= 0.0 && kappa_a <= 2.0) || !(dist >= 0.0))
    throw ConfigError("invalid_alpha", "parametric alpha needs lambda > 0, kappa in [0,2], dist >= 0");
  if (dist == 0.0) return 1.0;
  return std::exp(-std::pow(dist / lambda, kappa_a));
}

const char* name(Hyper h) noexcept {
  switch (h) {
    case Hyper::noise_variance: return "sigma2";
    case Hyper::residual_sd: return "sigma_z";
    case Hyper::residual_range: return "range_z";
    case Hyper::time_correlation: return "rho";
    case Hyper::beta: return "beta";
    case Hyper::alpha_range: return "lambda";
    case Hyper::alpha_shape: return "kappa_a";
  }
  return "?";
}

double HyperParams::get(Hyper h) const {
  switch (h) {
    case Hyper::noise_variance: return sigma2;
    case Hyper::residual_sd: return sigma_z;
    case Hyper::residual_range: return range_z;
    case Hyper::time_correlation: return rho_time;
    case Hyper::beta: return beta;
    case Hyper::alpha_range: return lambda;
    case Hyper::alpha_shape: return kappa_a;
  }
  return 0.0;
}

void HyperParams::set(Hyper h, double value) {
  switch (h) {
    case Hyper::noise_variance: sigma2 = value; break;
    case Hyper::residual_sd: sigma_z = value; break;
    case Hyper::residual_range: range_z = value; break;
    case Hyper::time_correlation: rho_time = value; break;
    case Hyper::beta: beta = value; break;
    case Hyper::alpha_range: lambda = value; break;
    case Hyper::alpha_shape: kappa_a = value; break;
  }
}

HyperLayout::HyperLayout(std::vector<Hyper> kinds, bool beta_below_one)
    : kinds_(std::move(kinds)), beta_below_one_(beta_below_one) {}

Eigen::VectorXd HyperLayout::to_internal(const HyperParams& p) const {
  Eigen::VectorXd t(size());
  for (int k = 0; k < size(); ++k) {
    const double v = p.get(kinds_[k]);
    switch (kinds_[k]) {
      case Hyper::time_correlation: t[k] = std::log((1.0 + v) / (1.0 - v)); break;
      case Hyper::beta: t[k] = beta_below_one_ ? std::log(v / (1.0 - v)) : std::log(v); break;
      case Hyper::alpha_shape: t[k] = std::log(v / (2.0 - v)); break;
      default: t[k] = std::log(v);
    }
  }
  return t;
}

HyperParams HyperLayout::from_internal(const Eigen::VectorXd& theta, const HyperParams& base) const {
  if (theta.size() != size()) throw DataError("dimension_mismatch", "hyperparameter vector has the wrong length");
  HyperParams p = base;
  for (int k = 0; k < size(); ++k) {
    const double t = theta[k];
    double v;
    switch (kinds_[k]) {
      case Hyper::time_correlation: v = std::tanh(0.5 * t); break;
      case Hyper::beta: v = beta_below_one_ ? logistic(t) : std::exp(t); break;
      case Hyper::alpha_shape: v = 2.0 * logistic(t); break;
      default: v = std::exp(t);
    }
    p.set(kinds_[k], v);
  }
  return p;
}

double HyperLayout::log_jacobian(Hyper h, double v) const {
  switch (h) {
    case Hyper::time_correlation: return std::log(0.5 * (1.0 - v * v));
    case Hyper::beta: return beta_below_one_ ? std::log(v * (1.0 - v)) : std::log(v);
    case Hyper::alpha_shape: return std::log(2.0 * (0.5 * v) * (1.0 - 0.5 * v));
    default: return std::log(v);
  }
}

Eigen::VectorXd AssembledModel::offset(const HyperParams& theta) const {
  Eigen::VectorXd o(rows());
  for (int j = 0; j < n; ++j)
    for (int t = 0; t < ell; ++t)
      for (int i = 0; i < d; ++i) {
        double a = 1.0;
        if (spec.alpha == AlphaForm::parametric) a = parametric_alpha(site_distance[i], theta.lambda, theta.kappa_a);
        o[row_index(j, t, i)] = x[j] * a;
      }
  return o;
}

SparseMatrix AssembledModel::residual_precision(const HyperParams& theta) const {
  if (!z_builder) throw ConfigError("invalid_spec", "model has no residual process");
  const auto p = gmrf::matern_to_spde(theta.range_z, theta.sigma_z, spec.zeta - 1.0, 2);
  SparseMatrix qs = z_builder->precision(p);
  if (ell == 1) return qs;
  return gmrf::kronecker(gmrf::ar1_precision(ell, theta.rho_time), qs);
}

double AssembledModel::residual_scale(int episode, const HyperParams& theta) const {
  if (spec.beta != BetaMode::estimated) return 1.0;
  return std::pow(x[episode], -2.0 * theta.beta);
}

void AssembledModel::refresh_normal_matrix() {
  SparseMatrix wa = weight.asDiagonal() * a;
  normal_matrix = SparseMatrix(a.transpose()) * wa;
  normal_matrix.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  normal_matrix.makeCompressed();
}

AssembledModel AssembledModel::with_weights(const Eigen::VectorXd& new_weight) const {
  if (new_weight.size() != rows()) throw DataError("dimension_mismatch", "weight vector has the wrong length");
  AssembledModel m = *this;
  m.weight = new_weight;
  for (int r : conditioning_rows) m.weight[r] = 0.0;
  m.refresh_normal_matrix();
  return m;
}

mesh::Mesh1D distance_mesh(const ModelSpec& spec, std::span<const Point> sites, int s0) {
  if (s0 < 0 || s0 >= static_cast<int>(sites.size())) throw DataError("invalid_site", "conditioning site out of range");
  double hmax = 0.0;
  for (const auto& s : sites) hmax = std::max(hmax, distance(s, sites[s0]));
  if (!(hmax > 0.0)) throw DataError("degenerate_sites", "all sites coincide with the conditioning site");
  return mesh::make_distance_mesh(hmax, spec.interior_knots, spec.spline_degree, true);
}

SparseMatrix spline_prior_precision(const mesh::Mesh1D& mesh1d, double range_fixed, double sd_fixed, int ell, double rho,
                                    double zeta) {
  if (ell < 1) throw ConfigError("invalid_spec", "ell must be at least 1");
  const auto p = gmrf::matern_to_spde(range_fixed, sd_fixed, zeta - 0.5, 1);
  SparseMatrix q = gmrf::SpdeBuilder(mesh1d, zeta).precision(p);
  if (ell == 1) return q;
  return gmrf::kronecker(gmrf::ar1_precision(ell, rho), q);
}

Eigen::VectorXd alpha_one_offset(const episodes::EpisodeSet& episodes) {
  const int block = episodes.sites * episodes.ell;
  Eigen::VectorXd o(static_cast<Eigen::Index>(block) * episodes.size());
  for (int j = 0; j < episodes.size(); ++j) o.segment(static_cast<Eigen::Index>(j) * block, block).setConstant(episodes.episodes[j].x);
  return o;
}

AssembledModel assemble(const ModelSpec& spec, const episodes::EpisodeSet& eps, std::span<const Point> sites,
                        const mesh::Mesh2D& mesh2d, const mesh::Mesh1D& mesh1d) {
  spec.validate();
  if (eps.episodes.empty()) throw DataError("no_episodes", "episode set is empty");
  if (static_cast<int>(sites.size()) != eps.sites)
    throw DataError("dimension_mismatch", "site table and episodes differ in site count");
  if (eps.ell != spec.ell) throw ConfigError("invalid_spec", "episode length differs from the model's ell");

  AssembledModel m;
  m.spec = spec;
  m.hyper = HyperLayout(hyper_kinds(spec), spec.beta_below_one);
  m.n = eps.size();
  m.d = eps.sites;
  m.ell = eps.ell;
  m.s0 = eps.s0;
  m.u = eps.u;
  m.sites.assign(sites.begin(), sites.end());
  for (const auto& s : sites) m.site_distance.push_back(distance(s, sites[m.s0]));
  for (const auto& e : eps.episodes) m.x.push_back(e.x);

  const bool splines = spec.alpha == AlphaForm::spline || spec.gamma;
  const bool residual = spec.residual != Residual::none;
  int m_spline = 0, m_z = 0;
  if (splines) {
    m.mesh1d = mesh1d;
    m.a_spline = mesh::observation_matrix(mesh1d, m.site_distance);
    m.a_spline_rows = m.a_spline;
    m_spline = mesh1d.size();
    m.q_spline = spline_prior_precision(mesh1d, spec.spline_range, spec.spline_sd, spec.ell, spec.spline_rho,
                                        spec.spline_zeta);
    m.q_spline_logdet = gmrf::CholeskyFactor(m.q_spline).log_determinant();
  }
  if (residual) {
    m.mesh2d = mesh2d;
    m.a_s = mesh::observation_matrix(mesh2d, sites);
    m.a_s_rows = m.a_s;
    m.a_s0 = mesh::observation_matrix(mesh2d, std::span<const Point>(&sites[m.s0], 1));
    m.z_builder.emplace(mesh2d, spec.zeta);
    m_z = mesh2d.size();
  }

  auto& L = m.layout;
  int at = 0;
  if (spec.alpha == AlphaForm::spline) {
    L.alpha_offset = at;
    L.alpha_size = m.ell * m_spline;
    at += L.alpha_size;
  }
  if (spec.gamma) {
    L.gamma_offset = at;
    L.gamma_size = m.ell * m_spline;
    at += L.gamma_size;
  }
  L.z_offset = at;
  L.episodes = m.n;
  if (residual) {
    L.z_block = m.ell * m_z;
    at += m.n * L.z_block;
  }
  L.total = at;

  SparseMatrix az;
  if (residual)
    az = spec.residual == Residual::subtract_s0 ? mesh::condition_observation_matrix(m.a_s, m.a_s0, m.ell)
                                                : mesh::block_diagonal(m.a_s, m.ell);

  const int rows = m.rows();
  m.response = Eigen::VectorXd::Zero(rows);
  m.weight = Eigen::VectorXd::Zero(rows);
  std::vector<Triplet> trip;
  for (int j = 0; j < m.n; ++j) {
    const auto& e = eps.episodes[j];
    for (int t = 0; t < m.ell; ++t)
      for (int i = 0; i < m.d; ++i) {
        const int r = m.row_index(j, t, i);
        const bool cond = i == m.s0 && t == 0;
        if (cond) m.conditioning_rows.push_back(r);
        if (e.observed(i, t)) {
          m.response[r] = e.values(i, t);
          m.weight[r] = cond ? 0.0 : 1.0;
        }
        if (!splines) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m.a_spline_rows, i); it; ++it) {
          const int k = t * m_spline + static_cast<int>(it.col());
          if (spec.alpha == AlphaForm::spline) trip.emplace_back(r, L.alpha_offset + k, e.x * it.value());
          if (spec.gamma) trip.emplace_back(r, L.gamma_offset + k, it.value());
        }
      }
    if (residual) {
      const int r0 = j * m.d * m.ell, c0 = L.z_offset + j * L.z_block;
      for (Eigen::Index c = 0; c < az.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(az, c); it; ++it)
          trip.emplace_back(r0 + static_cast<int>(it.row()), c0 + static_cast<int>(c), it.value());
    }
  }
  m.a.resize(rows, L.total);
  m.a.setFromTriplets(trip.begin(), trip.end());
  m.a.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  m.a.makeCompressed();

  if (spec.residual == Residual::condition_s0) {
    std::vector<Triplet> ct;
    for (int j = 0; j < m.n; ++j)
      for (Eigen::Index c = 0; c < m.a_s0.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m.a_s0, c); it; ++it)
          ct.emplace_back(j, L.z_offset + j * L.z_block + static_cast<int>(c), it.value());
    m.constraint.resize(m.n, L.total);
    m.constraint.setFromTriplets(ct.begin(), ct.end());
  }
  m.refresh_normal_matrix();
  return m;
}

double alpha_at(const AssembledModel& m, const Eigen::VectorXd& w, const HyperParams& theta, double h, int t) {
  switch (m.spec.alpha) {
    case AlphaForm::one: return 1.0;
    case AlphaForm::parametric: return parametric_alpha(h, theta.lambda, theta.kappa_a);
    case AlphaForm::spline: break;
  }
  const int ms = m.mesh1d->size();
  double s = 1.0;
  for (const auto& [k, v] : m.mesh1d->full_basis(h))
    if (k >= m.mesh1d->dropped()) s += v * w[m.layout.alpha_offset + t * ms + k - m.mesh1d->dropped()];
  return s;
}

double gamma_at(const AssembledModel& m, const Eigen::VectorXd& w, double h, int t) {
  if (!m.spec.gamma) return 0.0;
  const int ms = m.mesh1d->size();
  double s = 0.0;
  for (const auto& [k, v] : m.mesh1d->full_basis(h))
    if (k >= m.mesh1d->dropped()) s += v * w[m.layout.gamma_offset + t * ms + k - m.mesh1d->dropped()];
  return s;
}

double residual_at(const AssembledModel& m, const Eigen::VectorXd& w, int episode, int site, int t) {
  if (m.spec.residual == Residual::none) return 0.0;
  const int mz = m.mesh2d->size();
  const int base = m.layout.z_offset + episode * m.layout.z_block;
  double s = 0.0;
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m.a_s_rows, site); it; ++it)
    s += it.value() * w[base + t * mz + static_cast<int>(it.col())];
  if (m.spec.residual == Residual::subtract_s0) {
    double s0 = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m.a_s_rows, m.s0); it; ++it)
      s0 += it.value() * w[base + static_cast<int>(it.col())];
    s -= s0;
  }
  return s;
}

}  // namespace condex::model
