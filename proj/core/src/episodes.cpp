#include "condex/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "condex/error.hpp"
#include "condex/log.hpp"
#include "condex/stats.hpp"

namespace condex::episodes {

std::vector<Cluster> clusters(std::span<const double> series, const RunsConfig& cfg) {
  if (cfg.r < 1) throw ConfigError("invalid_runs", "run length r must be at least 1");
  const std::set<int> boundaries(cfg.year_boundaries.begin(), cfg.year_boundaries.end());
  std::vector<Cluster> out;
  bool open = false;
  int gap = 0;
  for (int t = 0; t < static_cast<int>(series.size()); ++t) {
    if (open && boundaries.count(t)) open = false;
    if (series[t] > cfg.u) {
      if (!open) {
        out.push_back({t, t});
        open = true;
      }
      out.back().end = t;
      gap = 0;
    } else if (open && ++gap >= cfg.r) {
      open = false;
    }
  }
  return out;
}

std::vector<int> decluster_runs(std::span<const double> series, const RunsConfig& cfg) {
  std::vector<int> starts;
  for (const auto& c : clusters(series, cfg)) starts.push_back(c.start);
  return starts;
}

std::vector<int> exceedance_times(std::span<const double> series, double u) {
  std::vector<int> out;
  for (int t = 0; t < static_cast<int>(series.size()); ++t)
    if (series[t] > u) out.push_back(t);
  return out;
}

std::vector<std::pair<int, int>> cluster_counts(std::span<const double> series, const RunsConfig& cfg,
                                                std::span<const int> r_values) {
  std::vector<std::pair<int, int>> out;
  RunsConfig c = cfg;
  for (int r : r_values) {
    c.r = r;
    out.emplace_back(r, static_cast<int>(clusters(series, c).size()));
  }
  return out;
}

EpisodeSet extract_episodes(const LaplaceField& field, int s0_index, std::span<const int> starts, int ell, double u,
                            std::span<const int> year_boundaries) {
  const auto d = static_cast<int>(field.values.rows());
  const auto T = static_cast<int>(field.values.cols());
  if (field.observed.rows() != d || field.observed.cols() != T)
    throw DataError("dimension_mismatch", "mask and field differ in shape");
  if (s0_index < 0 || s0_index >= d)
    throw DataError("invalid_site", "conditioning site index " + std::to_string(s0_index) + " out of range");
  if (ell < 1) throw ConfigError("invalid_runs", "episode length must be at least 1");
  EpisodeSet set;
  set.sites = d;
  set.ell = ell;
  set.s0 = s0_index;
  set.u = u;
  for (int start : starts) {
    if (start < 0 || start >= T) throw DataError("invalid_start", "episode start " + std::to_string(start) + " out of range");
    bool crosses = start + ell > T;
    for (int b : year_boundaries)
      if (b > start && b < start + ell) crosses = true;
    if (crosses) {
      ++set.dropped;
      continue;
    }
    if (!field.observed(s0_index, start) || !std::isfinite(field.values(s0_index, start)))
      throw DataError("missing_conditioning", "conditioning value missing at time " + std::to_string(start));
    if (!(field.values(s0_index, start) > u))
      throw DataError("below_threshold", "conditioning value at time " + std::to_string(start) + " does not exceed u");
    Episode e;
    e.start = start;
    e.x = field.values(s0_index, start);
    e.values = field.values.block(0, start, d, ell);
    e.observed = field.observed.block(0, start, d, ell);
    for (int i = 0; i < d; ++i)
      for (int t = 0; t < ell; ++t)
        if (e.observed(i, t) && !std::isfinite(e.values(i, t))) e.observed(i, t) = false;
    set.episodes.push_back(std::move(e));
  }
  if (set.dropped > 0)
    log::info("dropped " + std::to_string(set.dropped) + " episode windows crossing a year boundary or the record end");
  return set;
}

double laplace_threshold(double threshold_quantile) {
  if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
    throw ConfigError("invalid_quantile", "threshold quantile must lie in (0,1)");
  return stats::laplace_quantile(threshold_quantile);
}

}  // namespace condex::episodes
