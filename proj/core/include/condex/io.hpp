#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "condex/diagnostics.hpp"
#include "condex/episodes.hpp"
#include "condex/inference.hpp"
#include "condex/marginals.hpp"
#include "condex/mesh.hpp"

namespace condex::io {

/// Pivoted observation table: sites in rows, times in columns.
struct Observations {
  std::vector<std::string> site_ids;
  /// Coordinates after the per-axis multipliers.
  std::vector<Point> sites;
  std::vector<std::string> times;
  Eigen::MatrixXd values;
  episodes::Mask observed;
};

/// Reads `site_id,lon,lat,time,value`. Empty, NA and nan values are missing.
/// Times sort numerically when all are integers, otherwise lexically.
Observations read_observations(std::istream& in, double lon_multiplier = 1.0, double lat_multiplier = 1.0,
                               const std::string& origin = "<input>");
Observations read_observations(const std::filesystem::path& path, double lon_multiplier = 1.0,
                               double lat_multiplier = 1.0);
void write_observations(std::ostream& out, const Observations& obs);

/// Indices where the year (leading YYYY- of an ISO date) changes.
std::vector<int> year_boundaries(const std::vector<std::string>& times);

std::string marginals_json(const std::vector<std::string>& site_ids, const std::vector<marginals::MarginalModel>& models);
std::vector<marginals::MarginalModel> parse_marginals_json(const std::string& text);

std::string mesh_json(const mesh::Mesh2D& mesh);
/// `row,col,value` for every stored entry.
void write_triplets(std::ostream& out, const SparseMatrix& m);

/// `episode_id,site_id,time_offset,laplace_value,is_conditioning`; missing values are empty.
void write_episodes(std::ostream& out, const episodes::EpisodeSet& eps, const std::vector<std::string>& site_ids);
episodes::EpisodeSet read_episodes(std::istream& in, const std::vector<std::string>& site_ids, double u,
                                   const std::string& origin = "<episodes>");

/// PosteriorFit summary (mode, mean, 95% interval per hyperparameter, marginal likelihood, grid).
std::string fit_json(const inference::PosteriorFit& fit);

struct Report {
  std::string fit_hash;
  diagnostics::Predictive predictive;
  std::vector<double> region_q;
  std::vector<std::vector<double>> region_model, region_empirical;
  std::vector<int> region_sizes;
  std::vector<diagnostics::ChiBin> chi;
};

std::string report_json(const Report& r);
void write_cpo_pit_csv(std::ostream& out, const diagnostics::CpoPit& c);
void write_region_csv(std::ostream& out, const Report& r);
void write_chi_csv(std::ostream& out, const std::vector<diagnostics::ChiBin>& bins);

/// 64-bit FNV-1a as 16 hex digits.
std::string content_hash(const std::string& text);

/// {"error": kind, "category": ..., "message": ...}
std::string error_json(const std::string& category, const std::string& kind, const std::string& message);

std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace condex::io
