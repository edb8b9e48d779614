#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace condex::episodes {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Standard-Laplace field, sites in rows and time in columns.
struct LaplaceField {
  Eigen::MatrixXd values;
  Mask observed;
};

struct RunsConfig {
  /// Threshold on the Laplace scale.
  double u = 0.0;
  /// A cluster closes after this many consecutive non-exceedances.
  int r = 12;
  /// Episode length in time steps.
  int ell = 7;
  /// Time indices that start a new year; clusters and episodes never span one.
  std::vector<int> year_boundaries;
};

struct Cluster {
  int start = 0;
  /// Index of the last exceedance in the cluster.
  int end = 0;
};

/// Runs declustering. Non-finite values count as non-exceedances.
std::vector<Cluster> clusters(std::span<const double> series, const RunsConfig& cfg);
/// First exceedance of each cluster.
std::vector<int> decluster_runs(std::span<const double> series, const RunsConfig& cfg);
/// Every time index with series > u; the spatial (no declustering) variant.
std::vector<int> exceedance_times(std::span<const double> series, double u);

/// Number of clusters for each run length in `r_values`.
std::vector<std::pair<int, int>> cluster_counts(std::span<const double> series, const RunsConfig& cfg,
                                                std::span<const int> r_values);

struct Episode {
  /// Time index of the conditioning exceedance.
  int start = 0;
  /// Conditioning value X(s0, t0).
  double x = 0.0;
  /// Sites x time offsets.
  Eigen::MatrixXd values;
  Mask observed;
};

/// n replicated episodes of d sites x ell steps conditioned at site s0.
struct EpisodeSet {
  int sites = 0;
  int ell = 1;
  int s0 = 0;
  double u = 0.0;
  std::vector<Episode> episodes;
  /// Windows discarded because they crossed a year boundary or the record end.
  int dropped = 0;

  int size() const noexcept { return static_cast<int>(episodes.size()); }
};

/// Cuts windows [start, start + ell) out of `field`. Windows that cross a year
/// boundary or run past the record end are dropped and counted.
EpisodeSet extract_episodes(const LaplaceField& field, int s0_index, std::span<const int> starts, int ell, double u,
                            std::span<const int> year_boundaries = {});

/// Threshold u as the standard-Laplace quantile of `threshold_quantile`.
double laplace_threshold(double threshold_quantile);

}  // namespace condex::episodes
