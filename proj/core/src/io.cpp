#include "condex/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "condex/error.hpp"

namespace condex::io {
namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& c : out) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_int(const std::string& s, long long& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "nan" || s == "NaN"; }

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail_line(const std::string& origin, int line, const std::string& kind, const std::string& msg) {
  throw DataError(kind, origin + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

Observations read_observations(std::istream& in, double lon_multiplier, double lat_multiplier, const std::string& origin) {
  std::string line;
  int number = 1;
  if (!std::getline(in, line)) throw DataError("malformed_row", origin + ": empty input");
  const auto header = split_csv(line);
  if (header != std::vector<std::string>{"site_id", "lon", "lat", "time", "value"})
    fail_line(origin, 1, "malformed_row", "expected header site_id,lon,lat,time,value");

  struct Row {
    int site;
    std::string time;
    double value;
    bool present;
    int line;
  };
  Observations obs;
  std::unordered_map<std::string, int> site_index;
  std::vector<std::pair<double, double>> raw_coords;
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) fail_line(origin, number, "malformed_row", "expected 5 fields, got " + std::to_string(cells.size()));
    if (cells[0].empty() || cells[3].empty()) fail_line(origin, number, "malformed_row", "empty site_id or time");
    double lon = 0.0, lat = 0.0, value = 0.0;
    if (!parse_double(cells[1], lon) || !parse_double(cells[2], lat) || !std::isfinite(lon) || !std::isfinite(lat))
      fail_line(origin, number, "malformed_row", "invalid coordinates");
    const bool present = !is_missing(cells[4]);
    if (present && (!parse_double(cells[4], value) || !std::isfinite(value)))
      fail_line(origin, number, "malformed_row", "invalid value '" + cells[4] + "'");
    auto [it, inserted] = site_index.emplace(cells[0], static_cast<int>(obs.site_ids.size()));
    if (inserted) {
      obs.site_ids.push_back(cells[0]);
      raw_coords.emplace_back(lon, lat);
    } else if (raw_coords[it->second] != std::make_pair(lon, lat)) {
      fail_line(origin, number, "inconsistent_site", "site " + cells[0] + " changes coordinates");
    }
    rows.push_back({it->second, cells[3], value, present, number});
  }
  if (rows.empty()) throw DataError("malformed_row", origin + ": no data rows");

  std::vector<std::string> times;
  for (const auto& r : rows) times.push_back(r.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  bool numeric = true;
  long long tmp = 0;
  for (const auto& t : times) numeric = numeric && parse_int(t, tmp);
  if (numeric)
    std::stable_sort(times.begin(), times.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  std::unordered_map<std::string, int> time_index;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (numeric && k > 0 && std::stoll(times[k]) == std::stoll(times[k - 1]))
      throw DataError("duplicate_entry", origin + ": times " + times[k - 1] + " and " + times[k] + " are the same instant");
    time_index[times[k]] = static_cast<int>(k);
  }

  const auto d = static_cast<Eigen::Index>(obs.site_ids.size());
  const auto t = static_cast<Eigen::Index>(times.size());
  obs.values = Eigen::MatrixXd::Constant(d, t, std::numeric_limits<double>::quiet_NaN());
  obs.observed = episodes::Mask::Constant(d, t, false);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> seen = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d, t, false);
  for (const auto& r : rows) {
    const int k = time_index.at(r.time);
    if (seen(r.site, k))
      fail_line(origin, r.line, "duplicate_entry", "duplicate (site, time) = (" + obs.site_ids[r.site] + ", " + r.time + ")");
    seen(r.site, k) = true;
    if (r.present) {
      obs.values(r.site, k) = r.value;
      obs.observed(r.site, k) = true;
    }
  }
  for (const auto& [lon, lat] : raw_coords) obs.sites.push_back({lon * lon_multiplier, lat * lat_multiplier});
  obs.times = std::move(times);
  return obs;
}

Observations read_observations(const std::filesystem::path& path, double lon_multiplier, double lat_multiplier) {
  std::ifstream in(path);
  if (!in) throw DataError("missing_file", "cannot open " + path.string());
  return read_observations(in, lon_multiplier, lat_multiplier, path.string());
}

void write_observations(std::ostream& out, const Observations& obs) {
  out << "site_id,lon,lat,time,value\n";
  for (std::size_t i = 0; i < obs.site_ids.size(); ++i)
    for (std::size_t k = 0; k < obs.times.size(); ++k) {
      out << obs.site_ids[i] << ',' << format(obs.sites[i].x) << ',' << format(obs.sites[i].y) << ',' << obs.times[k] << ',';
      if (obs.observed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)))
        out << format(obs.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      out << '\n';
    }
}

std::vector<int> year_boundaries(const std::vector<std::string>& times) {
  std::vector<int> out;
  auto year = [](const std::string& t) -> std::string {
    if (t.size() >= 5 && t[4] == '-' && std::all_of(t.begin(), t.begin() + 4, [](char c) { return c >= '0' && c <= '9'; }))
      return t.substr(0, 4);
    return {};
  };
  for (std::size_t k = 1; k < times.size(); ++k) {
    const auto a = year(times[k - 1]), b = year(times[k]);
    if (!a.empty() && !b.empty() && a != b) out.push_back(static_cast<int>(k));
  }
  return out;
}

std::string marginals_json(const std::vector<std::string>& site_ids, const std::vector<marginals::MarginalModel>& models) {
  if (site_ids.size() != models.size()) throw DataError("dimension_mismatch", "one marginal model per site is required");
  json sites = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    sites.push_back({{"site_id", site_ids[i]},
                     {"threshold", m.threshold()},
                     {"lambda_v", m.exceed_prob()},
                     {"gpd_scale", m.gpd_scale()},
                     {"gpd_shape", m.gpd_shape()},
                     {"n", m.sample_size()},
                     {"body", m.sorted_body()}});
  }
  return json{{"marginals", sites}}.dump(2) + "\n";
}

std::vector<marginals::MarginalModel> parse_marginals_json(const std::string& text) {
  std::vector<marginals::MarginalModel> out;
  try {
    const auto j = json::parse(text);
    for (const auto& s : j.at("marginals"))
      out.emplace_back(s.at("threshold").get<double>(), s.at("lambda_v").get<double>(), s.at("gpd_scale").get<double>(),
                       s.at("gpd_shape").get<double>(), s.at("body").get<std::vector<double>>(),
                       s.at("n").get<std::size_t>());
  } catch (const json::exception& e) {
    throw DataError("malformed_json", std::string("marginal JSON: ") + e.what());
  }
  return out;
}

std::string mesh_json(const mesh::Mesh2D& mesh) {
  json v = json::array(), t = json::array();
  for (const auto& p : mesh.vertices()) v.push_back({p.x, p.y});
  for (const auto& tri : mesh.triangles()) t.push_back({tri[0], tri[1], tri[2]});
  return json{{"vertices", v}, {"triangles", t}}.dump() + "\n";
}

void write_triplets(std::ostream& out, const SparseMatrix& m) {
  out << "row,col,value\n";
  for (Eigen::Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) out << it.row() << ',' << c << ',' << format(it.value()) << '\n';
}

void write_episodes(std::ostream& out, const episodes::EpisodeSet& eps, const std::vector<std::string>& site_ids) {
  if (static_cast<int>(site_ids.size()) != eps.sites) throw DataError("dimension_mismatch", "site id count differs from episodes");
  out << "episode_id,site_id,time_offset,laplace_value,is_conditioning\n";
  for (int j = 0; j < eps.size(); ++j) {
    const auto& e = eps.episodes[j];
    for (int t = 0; t < eps.ell; ++t)
      for (int i = 0; i < eps.sites; ++i) {
        const bool cond = i == eps.s0 && t == 0;
        out << j << ',' << site_ids[i] << ',' << t << ',';
        if (cond)
          out << format(e.x);
        else if (e.observed(i, t))
          out << format(e.values(i, t));
        out << ',' << (cond ? 1 : 0) << '\n';
      }
  }
}

episodes::EpisodeSet read_episodes(std::istream& in, const std::vector<std::string>& site_ids, double u,
                                   const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) ||
      split_csv(line) != std::vector<std::string>{"episode_id", "site_id", "time_offset", "laplace_value", "is_conditioning"})
    fail_line(origin, 1, "malformed_row", "expected header episode_id,site_id,time_offset,laplace_value,is_conditioning");
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < site_ids.size(); ++i) index[site_ids[i]] = static_cast<int>(i);
  struct Cell {
    int episode, site, t;
    double value;
    bool present, cond;
  };
  std::vector<Cell> cells;
  int number = 1, max_episode = -1, max_t = -1, s0 = -1;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto c = split_csv(line);
    long long ep = 0, t = 0, cond = 0;
    double v = 0.0;
    if (c.size() != 5 || !parse_int(c[0], ep) || !parse_int(c[2], t) || !parse_int(c[4], cond) || ep < 0 || t < 0 ||
        (cond != 0 && cond != 1))
      fail_line(origin, number, "malformed_row", "invalid episode row");
    const auto it = index.find(c[1]);
    if (it == index.end()) fail_line(origin, number, "unknown_site", "unknown site '" + c[1] + "'");
    const bool present = !is_missing(c[3]);
    if (present && !parse_double(c[3], v)) fail_line(origin, number, "malformed_row", "invalid value");
    if (cond) {
      if (t != 0) fail_line(origin, number, "malformed_row", "conditioning row must have time_offset 0");
      if (s0 >= 0 && s0 != it->second) fail_line(origin, number, "malformed_row", "conditioning site changes between rows");
      s0 = it->second;
    }
    cells.push_back({static_cast<int>(ep), it->second, static_cast<int>(t), v, present, cond == 1});
    max_episode = std::max(max_episode, static_cast<int>(ep));
    max_t = std::max(max_t, static_cast<int>(t));
  }
  if (cells.empty() || s0 < 0) throw DataError("no_episodes", origin + ": no episodes or no conditioning rows");
  episodes::EpisodeSet set;
  set.sites = static_cast<int>(site_ids.size());
  set.ell = max_t + 1;
  set.s0 = s0;
  set.u = u;
  set.episodes.resize(static_cast<std::size_t>(max_episode) + 1);
  std::vector<char> has_x(set.episodes.size(), 0);
  for (auto& e : set.episodes) {
    e.values = Eigen::MatrixXd::Constant(set.sites, set.ell, std::numeric_limits<double>::quiet_NaN());
    e.observed = episodes::Mask::Constant(set.sites, set.ell, false);
  }
  for (const auto& c : cells) {
    auto& e = set.episodes[c.episode];
    if (c.present) {
      e.values(c.site, c.t) = c.value;
      e.observed(c.site, c.t) = true;
    }
    if (c.cond) {
      if (!c.present) throw DataError("missing_conditioning", "episode " + std::to_string(c.episode) + " lacks x");
      e.x = c.value;
      has_x[c.episode] = 1;
    }
  }
  for (std::size_t j = 0; j < set.episodes.size(); ++j) {
    if (!has_x[j]) throw DataError("missing_conditioning", "episode " + std::to_string(j) + " has no conditioning row");
    if (!(set.episodes[j].x > u))
      throw DataError("below_threshold", "episode " + std::to_string(j) + " has x not above the threshold");
    set.episodes[j].start = static_cast<int>(j) * set.ell;
  }
  return set;
}

std::string fit_json(const inference::PosteriorFit& fit) {
  const auto& m = *fit.model;
  json hyper = json::array();
  for (const auto& s : fit.summary)
    hyper.push_back({{"name", s.name}, {"mode", s.mode}, {"mean", s.mean}, {"lower_95", s.lower}, {"upper_95", s.upper}});
  json grid = json::array();
  for (const auto& g : fit.grid) {
    json th = json::object();
    for (auto h : m.hyper.kinds()) th[model::name(h)] = g.params.get(h);
    grid.push_back({{"theta", th}, {"weight", g.weight}, {"log_posterior", g.log_posterior}});
  }
  json spec = {{"alpha", model::to_string(m.spec.alpha)},
               {"gamma", m.spec.gamma},
               {"beta", model::to_string(m.spec.beta)},
               {"residual", model::to_string(m.spec.residual)},
               {"ell", m.spec.ell},
               {"threshold_quantile", m.spec.threshold_quantile},
               {"zeta", m.spec.zeta}};
  json j = {{"model", spec},
            {"episodes", m.n},
            {"sites", m.d},
            {"conditioning_site", m.s0},
            {"threshold_u", m.u},
            {"latent_dimension", m.layout.total},
            {"hyperparameters", hyper},
            {"log_marginal_likelihood", fit.log_marginal_at_mode},
            {"log_posterior_at_mode", fit.log_posterior_at_mode},
            {"iterations", fit.iterations},
            {"grid", grid}};
  return j.dump(2) + "\n";
}

std::string report_json(const Report& r) {
  const auto& c = r.predictive.cpo;
  int unreliable = 0;
  for (bool ok : c.reliable) unreliable += !ok;
  json regions = json::array();
  for (std::size_t k = 0; k < r.region_q.size(); ++k)
    for (std::size_t g = 0; g < r.region_sizes.size(); ++g)
      regions.push_back({{"region", g},
                         {"sites", r.region_sizes[g]},
                         {"q", r.region_q[k]},
                         {"model", r.region_model[k][g]},
                         {"empirical", r.region_empirical[k][g]}});
  json chi = json::array();
  for (const auto& b : r.chi)
    chi.push_back({{"lower", b.lower}, {"upper", b.upper}, {"q", b.q}, {"chi", b.chi}, {"sites", b.pairs}});
  json j = {{"fit_hash", r.fit_hash},
            {"waic", {{"waic", r.predictive.waic.waic}, {"lppd", r.predictive.waic.lppd}, {"p_eff", r.predictive.waic.p_eff}}},
            {"cpo", {{"mean_cpo", c.mean_cpo}, {"mean_log_cpo", c.mean_log_cpo}, {"observations", c.rows.size()},
                     {"unreliable", unreliable}}},
            {"region_exceedance", regions},
            {"chi", chi}};
  return j.dump(2) + "\n";
}

void write_cpo_pit_csv(std::ostream& out, const diagnostics::CpoPit& c) {
  out << "row,cpo,pit,reliable\n";
  for (std::size_t k = 0; k < c.rows.size(); ++k)
    out << c.rows[k] << ',' << format(c.cpo[static_cast<Eigen::Index>(k)]) << ','
        << format(c.pit[static_cast<Eigen::Index>(k)]) << ',' << (c.reliable[k] ? 1 : 0) << '\n';
}

void write_region_csv(std::ostream& out, const Report& r) {
  out << "region,sites,q,model,empirical\n";
  for (std::size_t k = 0; k < r.region_q.size(); ++k)
    for (std::size_t g = 0; g < r.region_sizes.size(); ++g)
      out << g << ',' << r.region_sizes[g] << ',' << format(r.region_q[k]) << ',' << format(r.region_model[k][g]) << ','
          << format(r.region_empirical[k][g]) << '\n';
}

void write_chi_csv(std::ostream& out, const std::vector<diagnostics::ChiBin>& bins) {
  out << "lower,upper,q,chi,sites\n";
  for (const auto& b : bins)
    out << format(b.lower) << ',' << format(b.upper) << ',' << format(b.q) << ',' << format(b.chi) << ',' << b.pairs << '\n';
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string error_json(const std::string& category, const std::string& kind, const std::string& message) {
  return json{{"error", kind}, {"category", category}, {"message", message}}.dump();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing_file", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("io_error", "cannot write " + path.string());
    out << text;
    if (!out) throw DataError("io_error", "write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace condex::io
