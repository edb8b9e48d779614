#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "condex/inference.hpp"
#include "condex/model.hpp"

namespace condex::config {

/// Flat `key = value` file with `#` comments and dotted namespaces.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  /// Directory relative paths are resolved against (the file's directory).
  std::filesystem::path base_dir;

 private:
  std::map<std::string, std::string> entries_;
  std::string origin_;
};

struct MeshConfig {
  /// Zero selects a value from the site bounding box.
  double inner_edge = 0.0;
  double outer_edge = 0.0;
  double extension = 0.0;
};

struct DiagnoseConfig {
  int samples = 1000;
  std::uint64_t seed = 7;
  std::vector<double> q_levels{0.9, 0.95, 0.99};
  int rings = 5;
  int n_sim = 2000;
  int chi_bins = 6;
};

struct CvConfig {
  int folds = 7;
  std::uint64_t seed = 11;
  /// Table model numbers to compare; empty means the configured model only.
  std::vector<int> models;
};

struct SimulateConfig {
  int count = 1000;
  std::uint64_t seed = 13;
  /// "fit" (posterior means) or "spec" (hyper.* values, alpha = 1, gamma = 0).
  std::string source = "fit";
  model::HyperParams theta;
};

struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir = "out";
  double lon_multiplier = 1.0;
  double lat_multiplier = 1.0;
  double marginal_quantile = 0.95;
  /// Site id of s0; empty picks the site closest to the centroid.
  std::string conditioning_site;
  int run_length = 12;
  std::vector<int> r_values;
  model::ModelSpec spec;
  MeshConfig mesh;
  inference::Priors priors;
  inference::FitConfig fit;
  DiagnoseConfig diagnose;
  CvConfig cv;
  SimulateConfig simulate;
  std::vector<double> chi_levels{0.9, 0.95, 0.99};
  int chi_bins = 6;
};

/// Builds and validates a run configuration. Unknown keys are rejected.
RunConfig run_config(const KeyValueFile& file);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key run_config() understands.
const std::vector<std::string>& known_keys();

}  // namespace condex::config
