#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "condex/config.hpp"
#include "condex/diagnostics.hpp"
#include "condex/episodes.hpp"
#include "condex/inference.hpp"
#include "condex/io.hpp"
#include "condex/marginals.hpp"
#include "condex/model.hpp"

namespace condex::pipeline {

/// Ingested observations with their marginal transform.
struct Prepared {
  io::Observations obs;
  std::vector<marginals::MarginalModel> margins;
  episodes::LaplaceField field;
  std::vector<int> years;
  int s0 = 0;
};

Prepared prepare(const config::RunConfig& cfg);

/// Site index of `id`, or the site closest to the centroid when `id` is empty.
int conditioning_site(const io::Observations& obs, const std::string& id);

episodes::EpisodeSet make_episodes(const Prepared& p, const model::ModelSpec& spec, int run_length);

/// Mesh resolutions with zero fields filled from the site bounding box.
config::MeshConfig resolve_mesh(const config::MeshConfig& mesh, std::span<const Point> sites);

model::AssembledModel build_model(const Prepared& p, const episodes::EpisodeSet& eps, const model::ModelSpec& spec,
                                  const config::MeshConfig& mesh);

/// Output name -> file content, written only after every step succeeded.
using Artifacts = std::map<std::string, std::string>;

Artifacts run_transform(const config::RunConfig& cfg);
Artifacts run_decluster(const config::RunConfig& cfg);
Artifacts run_fit(const config::RunConfig& cfg);
Artifacts run_diagnose(const config::RunConfig& cfg, const std::filesystem::path& out_dir);
Artifacts run_cv(const config::RunConfig& cfg);
Artifacts run_simulate(const config::RunConfig& cfg);
Artifacts run_chi(const config::RunConfig& cfg);

struct SynthOptions {
  int side = 6;
  double spacing = 10.0;
  int years = 10;
  int first_year = 2001;
  double range = 30.0;
  double time_correlation = 0.7;
  std::uint64_t seed = 20240601;
};

/// Gaussian AR(1)-in-time field with exponential spatial correlation over
/// summer days (June to August), on Gumbel margins, as an observation CSV.
std::string synthetic_csv(const SynthOptions& o);

void write_artifacts(const std::filesystem::path& dir, const Artifacts& a);

}  // namespace condex::pipeline
