#include "condex/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "condex/error.hpp"

namespace condex::simulate {

SimulationModel from_fit(const inference::PosteriorFit& fit) {
  return {fit.model, fit.posterior_mean_params(), fit.latent_mean()};
}

SimulationModel from_spec(const model::AssembledModel& m, const model::HyperParams& theta, const Eigen::VectorXd& latent) {
  if (latent.size() != m.layout.total && latent.size() != m.layout.z_offset)
    throw DataError("dimension_mismatch", "latent vector does not match the model layout");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(m.layout.total);
  full.head(m.layout.z_offset) = latent.head(m.layout.z_offset);
  return {std::make_shared<const model::AssembledModel>(m), theta, full};
}

Simulator::Simulator(SimulationModel sm) : sm_(std::move(sm)) {
  const auto& m = *sm_.model;
  alpha_.resize(m.d, m.ell);
  gamma_.resize(m.d, m.ell);
  for (int t = 0; t < m.ell; ++t)
    for (int i = 0; i < m.d; ++i) {
      const double h = m.site_distance[i];
      alpha_(i, t) = model::alpha_at(m, sm_.latent, sm_.theta, h, t);
      gamma_(i, t) = model::gamma_at(m, sm_.latent, h, t);
    }
  if (m.spec.residual != model::Residual::none) {
    factor_ = std::make_shared<gmrf::CholeskyFactor>(m.residual_precision(sm_.theta));
    if (m.spec.residual == model::Residual::condition_s0) {
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(1, m.layout.z_block);
      for (Eigen::Index c = 0; c < m.a_s0.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m.a_s0, c); it; ++it) b(0, c) = it.value();
      kriging_ = std::make_shared<gmrf::Kriging>(*factor_, b);
    }
  }
}

SimulatedEpisode Simulator::draw_given(double x, Rng& rng, bool noise) const {
  const auto& m = *sm_.model;
  SimulatedEpisode e;
  e.x = x;
  e.values.resize(m.d, m.ell);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(m.d, m.ell);
  if (factor_) {
    Eigen::VectorXd w = factor_->sample_transform(rng.normal_vector(factor_->size()));
    if (kriging_) w = kriging_->apply(w);
    const int mz = static_cast<int>(m.a_s.cols());
    for (int t = 0; t < m.ell; ++t) z.col(t) = m.a_s * w.segment(t * mz, mz);
    if (m.spec.residual == model::Residual::subtract_s0) {
      const double z0 = (m.a_s0 * w.head(mz))[0];
      z.array() -= z0;
      z(m.s0, 0) = 0.0;
    }
    if (m.spec.beta == model::BetaMode::estimated) z *= std::pow(x, sm_.theta.beta);
  }
  const double sd = std::sqrt(sm_.theta.sigma2);
  for (int t = 0; t < m.ell; ++t)
    for (int i = 0; i < m.d; ++i) {
      double v = x * alpha_(i, t) + gamma_(i, t) + z(i, t);
      if (noise && !(i == m.s0 && t == 0)) v += sd * rng.normal();
      e.values(i, t) = v;
    }
  return e;
}

SimulatedEpisode Simulator::draw(std::uint64_t seed, int index, double floor, bool noise) const {
  Rng rng = Rng(seed).split(static_cast<std::uint64_t>(index));
  const double x = std::max(sm_.model->u, floor) + rng.exponential();
  return draw_given(x, rng, noise);
}

std::vector<SimulatedEpisode> simulate(const Simulator& sim, int count, std::uint64_t seed, double floor) {
  if (count < 0) throw ConfigError("invalid_value", "simulation count must be non-negative");
  std::vector<SimulatedEpisode> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) out.push_back(sim.draw(seed, k, floor));
  return out;
}

episodes::EpisodeSet to_episode_set(const std::vector<SimulatedEpisode>& eps, int s0, double u) {
  episodes::EpisodeSet set;
  if (eps.empty()) return set;
  set.sites = static_cast<int>(eps.front().values.rows());
  set.ell = static_cast<int>(eps.front().values.cols());
  set.s0 = s0;
  set.u = u;
  int start = 0;
  for (const auto& e : eps) {
    episodes::Episode ep;
    ep.start = start;
    start += set.ell;
    ep.x = e.x;
    ep.values = e.values;
    ep.observed = episodes::Mask::Constant(set.sites, set.ell, true);
    set.episodes.push_back(std::move(ep));
  }
  return set;
}

}  // namespace condex::simulate
