#include "condex/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "condex/error.hpp"

namespace condex::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  return std::all_of(k.begin(), k.end(), [](unsigned char c) { return std::islower(c) || std::isdigit(c) || c == '_' || c == '.'; });
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("invalid_value", key + ": expected a number, got '" + v + "'");
  return d;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long d = 0;
  try {
    d = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("invalid_value", key + ": expected an integer, got '" + v + "'");
  return d;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile f;
  f.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ConfigError("config_syntax", where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError("config_syntax", where + "invalid key '" + key + "'");
    if (f.entries_.count(key)) throw ConfigError("config_syntax", where + "duplicate key '" + key + "'");
    f.entries_[key] = value;
  }
  return f;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing_file", "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto f = parse(ss.str(), path.string());
  f.base_dir = path.parent_path();
  return f;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? to_double(key, entries_.at(key)) : fallback;
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
  return has(key) ? static_cast<int>(to_integer(key, entries_.at(key))) : fallback;
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const long long v = to_integer(key, entries_.at(key));
  if (v < 0) throw ConfigError("invalid_value", key + ": must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = entries_.at(key);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("invalid_value", key + ": expected true or false, got '" + v + "'");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(entries_.at(key))) out.push_back(to_double(key, s));
  return out;
}

std::vector<int> KeyValueFile::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& s : split_list(entries_.at(key))) out.push_back(static_cast<int>(to_integer(key, s)));
  return out;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "data.input", "data.lon_multiplier", "data.lat_multiplier", "output.dir", "marginal.quantile",
      "episodes.conditioning_site", "episodes.threshold_quantile", "episodes.run_length", "episodes.length",
      "episodes.r_values", "model.number", "model.alpha", "model.gamma", "model.beta", "model.residual",
      "model.beta_below_one", "model.zeta", "spline.interior_knots", "spline.degree", "spline.range", "spline.sd",
      "spline.rho", "spline.zeta", "mesh.inner_edge", "mesh.outer_edge", "mesh.extension", "prior.noise_sd.r",
      "prior.noise_sd.p", "prior.residual_sd.r", "prior.residual_sd.p", "prior.residual_range.r",
      "prior.residual_range.p", "prior.time_correlation.r", "prior.time_correlation.p", "prior.alpha_range.r",
      "prior.alpha_range.p", "prior.beta.log_mean", "prior.beta.log_sd", "fit.seed", "fit.max_iterations",
      "fit.summary_draws", "fit.threads", "fit.hessian_step", "diagnose.samples", "diagnose.seed",
      "diagnose.q_levels", "diagnose.rings", "diagnose.n_sim", "diagnose.chi_bins", "cv.folds", "cv.seed",
      "cv.models", "simulate.count", "simulate.seed", "simulate.source", "hyper.sigma2", "hyper.sigma_z",
      "hyper.range_z", "hyper.rho_time", "hyper.beta", "hyper.lambda", "hyper.kappa_a", "chi.q_levels", "chi.bins"};
  return keys;
}

RunConfig run_config(const KeyValueFile& f) {
  const auto& keys = known_keys();
  for (const auto& [k, v] : f.entries())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown_key", "unknown config key '" + k + "'");

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || f.base_dir.empty() ? path : f.base_dir / path;
  };

  RunConfig c;
  if (f.has("data.input")) {
    c.input = resolve(f.get_string("data.input", ""));
    if (!std::filesystem::exists(c.input)) throw ConfigError("missing_file", "input file " + c.input.string() + " does not exist");
  }
  c.output_dir = resolve(f.get_string("output.dir", "out"));
  c.lon_multiplier = f.get_double("data.lon_multiplier", c.lon_multiplier);
  c.lat_multiplier = f.get_double("data.lat_multiplier", c.lat_multiplier);
  if (!(c.lon_multiplier > 0.0) || !(c.lat_multiplier > 0.0))
    throw ConfigError("invalid_value", "coordinate multipliers must be positive");
  c.marginal_quantile = f.get_double("marginal.quantile", c.marginal_quantile);
  if (!(c.marginal_quantile > 0.5 && c.marginal_quantile < 1.0))
    throw ConfigError("invalid_value", "marginal.quantile must lie in (0.5, 1)");
  c.conditioning_site = f.get_string("episodes.conditioning_site", "");
  c.run_length = f.get_int("episodes.run_length", c.run_length);
  if (c.run_length < 1) throw ConfigError("invalid_value", "episodes.run_length must be at least 1");
  std::vector<int> rdef;
  for (int r = 1; r <= 24; ++r) rdef.push_back(r);
  c.r_values = f.get_ints("episodes.r_values", rdef);
  for (int r : c.r_values)
    if (r < 1) throw ConfigError("invalid_value", "episodes.r_values must be positive");

  auto& s = c.spec;
  if (f.has("model.number")) s = model::table_model(f.get_int("model.number", 3));
  s.ell = f.get_int("episodes.length", 7);
  s.threshold_quantile = f.get_double("episodes.threshold_quantile", s.threshold_quantile);
  if (f.has("model.alpha")) s.alpha = model::parse_alpha_form(f.get_string("model.alpha", ""));
  s.gamma = f.get_bool("model.gamma", s.gamma);
  if (f.has("model.beta")) s.beta = model::parse_beta_mode(f.get_string("model.beta", ""));
  if (f.has("model.residual")) s.residual = model::parse_residual(f.get_string("model.residual", ""));
  s.beta_below_one = f.get_bool("model.beta_below_one", s.beta_below_one);
  s.zeta = f.get_double("model.zeta", s.zeta);
  s.interior_knots = f.get_int("spline.interior_knots", s.interior_knots);
  s.spline_degree = f.get_int("spline.degree", s.spline_degree);
  s.spline_range = f.get_double("spline.range", s.spline_range);
  s.spline_sd = f.get_double("spline.sd", s.spline_sd);
  s.spline_rho = f.get_double("spline.rho", s.spline_rho);
  s.spline_zeta = f.get_double("spline.zeta", s.spline_zeta);
  s.validate();

  c.mesh.inner_edge = f.get_double("mesh.inner_edge", 0.0);
  c.mesh.outer_edge = f.get_double("mesh.outer_edge", 0.0);
  c.mesh.extension = f.get_double("mesh.extension", 0.0);
  if (c.mesh.inner_edge < 0.0 || c.mesh.outer_edge < 0.0 || c.mesh.extension < 0.0)
    throw ConfigError("invalid_value", "mesh sizes must be non-negative");

  auto pc = [&](const std::string& name, inference::PcPrior& p) {
    p.r = f.get_double("prior." + name + ".r", p.r);
    p.p = f.get_double("prior." + name + ".p", p.p);
    if (!(p.r > 0.0) || !(p.p > 0.0 && p.p < 1.0))
      throw ConfigError("invalid_prior", "prior." + name + " needs r > 0 and p in (0,1)");
  };
  pc("noise_sd", c.priors.noise_sd);
  pc("residual_sd", c.priors.residual_sd);
  pc("residual_range", c.priors.residual_range);
  pc("time_correlation", c.priors.time_correlation);
  pc("alpha_range", c.priors.alpha_range);
  if (!(c.priors.time_correlation.r < 1.0)) throw ConfigError("invalid_prior", "prior.time_correlation.r must be below 1");
  c.priors.beta_log_mean = f.get_double("prior.beta.log_mean", c.priors.beta_log_mean);
  c.priors.beta_log_sd = f.get_double("prior.beta.log_sd", c.priors.beta_log_sd);
  if (!(c.priors.beta_log_sd > 0.0)) throw ConfigError("invalid_prior", "prior.beta.log_sd must be positive");

  c.fit.seed = f.get_u64("fit.seed", c.fit.seed);
  c.fit.max_iterations = f.get_int("fit.max_iterations", c.fit.max_iterations);
  c.fit.summary_draws = f.get_int("fit.summary_draws", c.fit.summary_draws);
  c.fit.threads = f.get_int("fit.threads", c.fit.threads);
  c.fit.hessian_step = f.get_double("fit.hessian_step", c.fit.hessian_step);
  if (c.fit.max_iterations < 1 || c.fit.summary_draws < 100 || c.fit.threads < 0 || !(c.fit.hessian_step > 0.0))
    throw ConfigError("invalid_value", "fit settings out of range");

  auto& d = c.diagnose;
  d.samples = f.get_int("diagnose.samples", d.samples);
  d.seed = f.get_u64("diagnose.seed", d.seed);
  d.q_levels = f.get_doubles("diagnose.q_levels", d.q_levels);
  d.rings = f.get_int("diagnose.rings", d.rings);
  d.n_sim = f.get_int("diagnose.n_sim", d.n_sim);
  d.chi_bins = f.get_int("diagnose.chi_bins", d.chi_bins);
  if (d.samples < 2 || d.rings < 1 || d.n_sim < 1 || d.chi_bins < 1)
    throw ConfigError("invalid_value", "diagnose settings out of range");

  c.cv.folds = f.get_int("cv.folds", c.cv.folds);
  c.cv.seed = f.get_u64("cv.seed", c.cv.seed);
  c.cv.models = f.get_ints("cv.models", {});
  if (c.cv.folds < 2) throw ConfigError("invalid_value", "cv.folds must be at least 2");
  for (int m : c.cv.models) model::table_model(m);

  c.simulate.count = f.get_int("simulate.count", c.simulate.count);
  c.simulate.seed = f.get_u64("simulate.seed", c.simulate.seed);
  c.simulate.source = f.get_string("simulate.source", c.simulate.source);
  if (c.simulate.source != "fit" && c.simulate.source != "spec")
    throw ConfigError("invalid_value", "simulate.source must be fit or spec");
  if (c.simulate.count < 1) throw ConfigError("invalid_value", "simulate.count must be positive");
  auto& th = c.simulate.theta;
  th.sigma2 = f.get_double("hyper.sigma2", th.sigma2);
  th.sigma_z = f.get_double("hyper.sigma_z", th.sigma_z);
  th.range_z = f.get_double("hyper.range_z", th.range_z);
  th.rho_time = f.get_double("hyper.rho_time", th.rho_time);
  th.beta = f.get_double("hyper.beta", th.beta);
  th.lambda = f.get_double("hyper.lambda", th.lambda);
  th.kappa_a = f.get_double("hyper.kappa_a", th.kappa_a);
  if (!(th.sigma2 > 0.0) || !(th.sigma_z > 0.0) || !(th.range_z > 0.0) || !(std::abs(th.rho_time) < 1.0) ||
      th.beta < 0.0 || !(th.lambda > 0.0) || !(th.kappa_a >= 0.0 && th.kappa_a <= 2.0))
    throw ConfigError("invalid_value", "hyper.* values out of range");

  c.chi_levels = f.get_doubles("chi.q_levels", c.chi_levels);
  c.chi_bins = f.get_int("chi.bins", c.chi_bins);
  if (c.chi_bins < 1) throw ConfigError("invalid_value", "chi.bins must be positive");
  for (double q : c.chi_levels)
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("invalid_value", "chi.q_levels must lie in (0,1)");
  for (double q : d.q_levels)
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("invalid_value", "diagnose.q_levels must lie in (0,1)");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config(KeyValueFile::load(path)); }

}  // namespace condex::config
