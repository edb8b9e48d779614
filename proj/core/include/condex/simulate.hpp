#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "condex/episodes.hpp"
#include "condex/gmrf.hpp"
#include "condex/inference.hpp"
#include "condex/model.hpp"

namespace condex::simulate {

/// Model with every unknown fixed: hyperparameters and the alpha/gamma
/// coefficients of the latent vector (its residual part is ignored).
struct SimulationModel {
  std::shared_ptr<const model::AssembledModel> model;
  model::HyperParams theta;
  Eigen::VectorXd latent;
};

/// Posterior means of the hyperparameters and the latent coefficients.
SimulationModel from_fit(const inference::PosteriorFit& fit);
SimulationModel from_spec(const model::AssembledModel& m, const model::HyperParams& theta, const Eigen::VectorXd& latent);

struct SimulatedEpisode {
  double x = 0.0;
  /// Sites x time offsets on the Laplace scale.
  Eigen::MatrixXd values;
};

class Simulator {
 public:
  explicit Simulator(SimulationModel sm);

  const model::AssembledModel& model() const noexcept { return *sm_.model; }
  const SimulationModel& spec() const noexcept { return sm_; }
  /// alpha and gamma at site i, offset t.
  double alpha(int site, int t) const { return alpha_(site, t); }
  double gamma(int site, int t) const { return gamma_(site, t); }

  /// Episode `index` of stream `seed`. The conditioning value is
  /// max(u, floor) + Exp(1); `noise` adds the measurement error.
  SimulatedEpisode draw(std::uint64_t seed, int index, double floor = -std::numeric_limits<double>::infinity(),
                        bool noise = true) const;
  /// Same with a given conditioning value.
  SimulatedEpisode draw_given(double x, Rng& rng, bool noise = true) const;

 private:
  SimulationModel sm_;
  Eigen::MatrixXd alpha_, gamma_;
  std::shared_ptr<gmrf::CholeskyFactor> factor_;
  std::shared_ptr<gmrf::Kriging> kriging_;
};

std::vector<SimulatedEpisode> simulate(const Simulator& sim, int count, std::uint64_t seed,
                                       double floor = -std::numeric_limits<double>::infinity());

/// Packs simulated episodes as an EpisodeSet (all entries observed).
episodes::EpisodeSet to_episode_set(const std::vector<SimulatedEpisode>& eps, int s0, double u);

}  // namespace condex::simulate
