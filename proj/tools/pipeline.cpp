#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "condex/error.hpp"
#include "condex/log.hpp"
#include "condex/random.hpp"
#include "condex/simulate.hpp"
#include "condex/stats.hpp"

namespace condex::pipeline {
namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> row(const Eigen::MatrixXd& m, int i) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.cols(); ++t) out[static_cast<std::size_t>(t)] = m(i, t);
  return out;
}

inference::PosteriorFit fit_model(const model::AssembledModel& m, const config::RunConfig& cfg) {
  return inference::fit(m, cfg.priors, cfg.fit);
}

struct Fitted {
  Prepared prep;
  episodes::EpisodeSet eps;
  inference::PosteriorFit fit;
  std::string json;
};

Fitted fit_all(const config::RunConfig& cfg) {
  Fitted f;
  f.prep = prepare(cfg);
  f.eps = make_episodes(f.prep, cfg.spec, cfg.run_length);
  const auto m = build_model(f.prep, f.eps, cfg.spec, cfg.mesh);
  f.fit = fit_model(m, cfg);
  f.json = io::fit_json(f.fit);
  return f;
}

std::string episodes_csv(const episodes::EpisodeSet& eps, const std::vector<std::string>& ids) {
  std::ostringstream os;
  io::write_episodes(os, eps, ids);
  return os.str();
}

}  // namespace

int conditioning_site(const io::Observations& obs, const std::string& id) {
  if (!id.empty()) {
    const auto it = std::find(obs.site_ids.begin(), obs.site_ids.end(), id);
    if (it == obs.site_ids.end()) throw ConfigError("unknown_site", "conditioning site '" + id + "' is not in the data");
    return static_cast<int>(it - obs.site_ids.begin());
  }
  Point c{0.0, 0.0};
  for (const auto& p : obs.sites) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= static_cast<double>(obs.sites.size());
  c.y /= static_cast<double>(obs.sites.size());
  int best = 0;
  for (std::size_t i = 1; i < obs.sites.size(); ++i)
    if (distance(obs.sites[i], c) < distance(obs.sites[static_cast<std::size_t>(best)], c)) best = static_cast<int>(i);
  return best;
}

Prepared prepare(const config::RunConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("missing_key", "data.input is required");
  Prepared p;
  p.obs = io::read_observations(cfg.input, cfg.lon_multiplier, cfg.lat_multiplier);
  if (p.obs.site_ids.size() < 2) throw DataError("too_few_sites", "at least two sites are required");
  p.s0 = conditioning_site(p.obs, cfg.conditioning_site);
  auto t = marginals::transform_field(p.obs.values, p.obs.observed, cfg.marginal_quantile);
  p.margins = std::move(t.models);
  p.field.values = std::move(t.laplace);
  p.field.observed = p.obs.observed;
  p.years = io::year_boundaries(p.obs.times);
  return p;
}

episodes::EpisodeSet make_episodes(const Prepared& p, const model::ModelSpec& spec, int run_length) {
  const double u = episodes::laplace_threshold(spec.threshold_quantile);
  const auto series = row(p.field.values, p.s0);
  std::vector<int> starts;
  if (spec.ell == 1) {
    starts = episodes::exceedance_times(series, u);
  } else {
    episodes::RunsConfig rc;
    rc.u = u;
    rc.r = run_length;
    rc.ell = spec.ell;
    rc.year_boundaries = p.years;
    starts = episodes::decluster_runs(series, rc);
  }
  auto eps = episodes::extract_episodes(p.field, p.s0, starts, spec.ell, u, p.years);
  if (eps.size() == 0) throw DataError("no_exceedances", "no episodes exceed the threshold at the conditioning site");
  return eps;
}

config::MeshConfig resolve_mesh(const config::MeshConfig& mesh, std::span<const Point> sites) {
  double x0 = sites[0].x, x1 = x0, y0 = sites[0].y, y1 = y0;
  for (const auto& s : sites) {
    x0 = std::min(x0, s.x);
    x1 = std::max(x1, s.x);
    y0 = std::min(y0, s.y);
    y1 = std::max(y1, s.y);
  }
  double span = std::max(x1 - x0, y1 - y0);
  if (!(span > 0.0)) span = 1.0;
  config::MeshConfig out = mesh;
  if (out.inner_edge <= 0.0) out.inner_edge = span / 8.0;
  if (out.outer_edge <= 0.0) out.outer_edge = 2.0 * out.inner_edge;
  if (out.extension <= 0.0) out.extension = span / 4.0;
  return out;
}

model::AssembledModel build_model(const Prepared& p, const episodes::EpisodeSet& eps, const model::ModelSpec& spec,
                                  const config::MeshConfig& mesh) {
  const auto mc = resolve_mesh(mesh, p.obs.sites);
  const auto m2 = mesh::build_mesh_2d(p.obs.sites, mc.inner_edge, mc.outer_edge, mc.extension);
  const auto m1 = model::distance_mesh(spec, p.obs.sites, p.s0);
  return model::assemble(spec, eps, p.obs.sites, m2, m1);
}

Artifacts run_transform(const config::RunConfig& cfg) {
  const auto p = prepare(cfg);
  Artifacts a;
  std::ostringstream sites, lap;
  sites << "site_id,x,y,is_conditioning\n";
  for (std::size_t i = 0; i < p.obs.site_ids.size(); ++i)
    sites << p.obs.site_ids[i] << ',' << fmt(p.obs.sites[i].x) << ',' << fmt(p.obs.sites[i].y) << ','
          << (static_cast<int>(i) == p.s0 ? 1 : 0) << '\n';
  lap << "site_id,time,laplace_value\n";
  for (std::size_t i = 0; i < p.obs.site_ids.size(); ++i)
    for (std::size_t t = 0; t < p.obs.times.size(); ++t) {
      const auto ii = static_cast<Eigen::Index>(i), tt = static_cast<Eigen::Index>(t);
      lap << p.obs.site_ids[i] << ',' << p.obs.times[t] << ',';
      if (p.field.observed(ii, tt)) lap << fmt(p.field.values(ii, tt));
      lap << '\n';
    }
  a["sites.csv"] = sites.str();
  a["laplace.csv"] = lap.str();
  a["marginals.json"] = io::marginals_json(p.obs.site_ids, p.margins);
  return a;
}

Artifacts run_decluster(const config::RunConfig& cfg) {
  const auto p = prepare(cfg);
  const auto eps = make_episodes(p, cfg.spec, cfg.run_length);
  episodes::RunsConfig rc;
  rc.u = episodes::laplace_threshold(cfg.spec.threshold_quantile);
  rc.ell = cfg.spec.ell;
  rc.year_boundaries = p.years;
  const auto counts = episodes::cluster_counts(row(p.field.values, p.s0), rc, cfg.r_values);
  std::ostringstream cc;
  cc << "r,clusters\n";
  for (const auto& [r, c] : counts) cc << r << ',' << c << '\n';
  Artifacts a;
  a["episodes.csv"] = episodes_csv(eps, p.obs.site_ids);
  a["cluster_counts.csv"] = cc.str();
  return a;
}

Artifacts run_fit(const config::RunConfig& cfg) {
  Artifacts a;
  a["fit.json"] = fit_all(cfg).json;
  return a;
}

Artifacts run_diagnose(const config::RunConfig& cfg, const std::filesystem::path& out_dir) {
  const auto f = fit_all(cfg);
  const auto& m = *f.fit.model;
  const auto& dc = cfg.diagnose;
  io::Report r;
  r.fit_hash = io::content_hash(f.json);
  const auto existing = out_dir / "fit.json";
  if (std::filesystem::exists(existing) && io::content_hash(io::read_text(existing)) != r.fit_hash)
    log::warn("fit.json in the output directory differs from the refit; the report references the refit");
  r.predictive = diagnostics::predictive_diagnostics(f.fit, dc.samples, dc.seed);

  const simulate::Simulator sim(simulate::from_fit(f.fit));
  const auto regions = diagnostics::ring_regions(m.site_distance, m.s0, dc.rings);
  for (const auto& g : regions) r.region_sizes.push_back(static_cast<int>(g.size()));
  for (double q : dc.q_levels) {
    r.region_q.push_back(q);
    r.region_model.push_back(diagnostics::region_exceedance(sim, regions, q, dc.n_sim, dc.seed));
    try {
      r.region_empirical.push_back(diagnostics::region_exceedance_empirical(f.eps, regions, q));
    } catch (const DataError& e) {
      if (e.kind() != "no_exceedances") throw;
      log::warn("no observed episodes above the " + fmt(q) + " quantile; empirical region proportions left empty");
      r.region_empirical.emplace_back(regions.size(), std::numeric_limits<double>::quiet_NaN());
    }
  }
  std::vector<int> others;
  for (int i = 0; i < m.d; ++i)
    if (i != m.s0) others.push_back(i);
  r.chi = diagnostics::bin_chi(diagnostics::model_chi_q(sim, others, dc.q_levels, dc.n_sim, dc.seed), dc.chi_bins);

  Artifacts a;
  a["diagnostics.json"] = io::report_json(r);
  std::ostringstream cpo, reg, chi;
  io::write_cpo_pit_csv(cpo, r.predictive.cpo);
  io::write_region_csv(reg, r);
  io::write_chi_csv(chi, r.chi);
  a["cpo_pit.csv"] = cpo.str();
  a["region_exceedance.csv"] = reg.str();
  a["chi.csv"] = chi.str();
  return a;
}

Artifacts run_cv(const config::RunConfig& cfg) {
  std::vector<model::ModelSpec> specs;
  std::vector<int> numbers = cfg.cv.models;
  if (numbers.empty()) {
    specs.push_back(cfg.spec);
    numbers.push_back(-1);
  } else {
    for (int k : numbers) {
      auto s = model::table_model(k);
      s.ell = cfg.spec.ell;
      s.threshold_quantile = cfg.spec.threshold_quantile;
      s.zeta = cfg.spec.zeta;
      s.beta_below_one = cfg.spec.beta_below_one;
      s.interior_knots = cfg.spec.interior_knots;
      s.spline_degree = cfg.spec.spline_degree;
      s.spline_range = cfg.spec.spline_range;
      s.spline_sd = cfg.spec.spline_sd;
      s.spline_rho = cfg.spec.spline_rho;
      s.spline_zeta = cfg.spec.spline_zeta;
      if (s.residual != model::Residual::none) s.residual = cfg.spec.residual;
      s.validate();
      specs.push_back(s);
    }
  }
  if (cfg.cv.folds < 2) throw ConfigError("invalid_value", "cv.folds must be at least 2");
  const auto p = prepare(cfg);
  const auto eps = make_episodes(p, cfg.spec, cfg.run_length);
  std::ostringstream os;
  os << "model,holdout,fold,observations,rmse\n";
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto m = build_model(p, eps, specs[k], cfg.mesh);
    const std::string label = numbers[k] < 0 ? "configured" : std::to_string(numbers[k]);
    const auto quad = diagnostics::rmse_cv(m, cfg.priors, cfg.fit, diagnostics::quadrant_holdout(m));
    os << label << ",quadrant,0," << quad.rows.size() << ',' << fmt(quad.rmse) << '\n';
    if (eps.size() < cfg.cv.folds) {
      log::warn("fewer episodes than cv.folds; k-fold block hold-out skipped");
      continue;
    }
    for (int fold = 0; fold < cfg.cv.folds; ++fold) {
      const auto r = diagnostics::rmse_cv(m, cfg.priors, cfg.fit,
                                          diagnostics::episode_fold_holdout(m, cfg.cv.folds, fold, cfg.cv.seed));
      os << label << ",episode_fold," << fold << ',' << r.rows.size() << ',' << fmt(r.rmse) << '\n';
    }
  }
  Artifacts a;
  a["cv.csv"] = os.str();
  return a;
}

Artifacts run_simulate(const config::RunConfig& cfg) {
  const auto& sc = cfg.simulate;
  if (sc.count < 1) throw ConfigError("invalid_value", "simulate.count must be positive");
  if (sc.source != "fit" && sc.source != "spec")
    throw ConfigError("invalid_value", "simulate.source must be 'fit' or 'spec'");
  std::vector<std::string> ids;
  std::optional<simulate::Simulator> sim;
  if (sc.source == "fit") {
    const auto f = fit_all(cfg);
    ids = f.prep.obs.site_ids;
    sim.emplace(simulate::from_fit(f.fit));
  } else {
    const auto p = prepare(cfg);
    const auto eps = make_episodes(p, cfg.spec, cfg.run_length);
    const auto m = build_model(p, eps, cfg.spec, cfg.mesh);
    ids = p.obs.site_ids;
    sim.emplace(simulate::from_spec(m, sc.theta, Eigen::VectorXd::Zero(m.layout.total)));
  }
  const auto& m = sim->model();
  const auto draws = simulate::simulate(*sim, sc.count, sc.seed);
  Artifacts a;
  a["simulations.csv"] = episodes_csv(simulate::to_episode_set(draws, m.s0, m.u), ids);
  return a;
}

Artifacts run_chi(const config::RunConfig& cfg) {
  const auto p = prepare(cfg);
  std::vector<double> dist(p.obs.sites.size());
  for (std::size_t i = 0; i < dist.size(); ++i)
    dist[i] = distance(p.obs.sites[i], p.obs.sites[static_cast<std::size_t>(p.s0)]);
  const auto points = diagnostics::empirical_chi_q(p.field, dist, p.s0, cfg.chi_levels);
  std::ostringstream os;
  os << "site_id,distance,q,chi\n";
  for (const auto& c : points)
    os << p.obs.site_ids[static_cast<std::size_t>(c.site)] << ',' << fmt(c.distance) << ',' << fmt(c.q) << ','
       << fmt(c.chi) << '\n';
  std::ostringstream bins;
  io::write_chi_csv(bins, diagnostics::bin_chi(points, cfg.chi_bins));
  Artifacts a;
  a["chi_empirical.csv"] = os.str();
  a["chi_bins.csv"] = bins.str();
  return a;
}

std::string synthetic_csv(const SynthOptions& o) {
  if (o.side < 2 || o.years < 1 || !(o.spacing > 0.0) || !(o.range > 0.0) || !(std::abs(o.time_correlation) < 1.0))
    throw ConfigError("invalid_value", "synthetic data needs side >= 2, years >= 1, positive spacing and range, |rho| < 1");
  const int d = o.side * o.side;
  std::vector<Point> sites;
  for (int j = 0; j < o.side; ++j)
    for (int i = 0; i < o.side; ++i) sites.push_back({i * o.spacing, j * o.spacing});
  Eigen::MatrixXd cov(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) cov(a, b) = std::exp(-distance(sites[a], sites[b]) / o.range);
  const Eigen::MatrixXd l = cov.llt().matrixL();
  const double innovation = std::sqrt(1.0 - o.time_correlation * o.time_correlation);
  static constexpr int kMonthDays[3] = {30, 31, 31};
  Rng rng(o.seed);
  std::ostringstream os;
  os << "site_id,lon,lat,time,value\n";
  for (int y = 0; y < o.years; ++y) {
    Eigen::VectorXd z = l * rng.normal_vector(d);
    for (int mo = 0; mo < 3; ++mo)
      for (int day = 1; day <= kMonthDays[mo]; ++day) {
        char date[32];
        std::snprintf(date, sizeof date, "%04d-%02d-%02d", o.first_year + y, 6 + mo, day);
        for (int i = 0; i < d; ++i) {
          // Gumbel margins: location 30, scale 2.
          const double p = std::clamp(stats::normal_cdf(z[i]), 1e-300, 1.0 - 1e-16);
          const double v = 30.0 - 2.0 * std::log(-std::log(p));
          char buf[128];
          std::snprintf(buf, sizeof buf, "s%02d,%.6g,%.6g,%s,%.6f\n", i, sites[i].x, sites[i].y, date, v);
          os << buf;
        }
        z = o.time_correlation * z + innovation * (l * rng.normal_vector(d));
      }
  }
  return os.str();
}

void write_artifacts(const std::filesystem::path& dir, const Artifacts& a) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : a) io::write_text(dir / name, text);
}

}  // namespace condex::pipeline
