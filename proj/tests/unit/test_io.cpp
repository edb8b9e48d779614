#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "condex/config.hpp"
#include "condex/error.hpp"
#include "condex/io.hpp"
#include "condex/random.hpp"
#include "toy.hpp"

using namespace condex;

namespace {

template <class F>
std::string error_message(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("condex_io_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("ingest: complete table pivots to sites x times") {
  std::istringstream in(
      "site_id,lon,lat,time,value\n"
      "a,1,2,1,0.5\n"
      "b,3,4,1,1.5\n"
      "a,1,2,2,0.6\n"
      "b,3,4,2,1.6\n"
      "a,1,2,3,0.7\n"
      "b,3,4,3,1.7\n");
  const auto obs = io::read_observations(in, 2.0, 0.5);
  REQUIRE(obs.values.rows() == 2);
  REQUIRE(obs.values.cols() == 3);
  CHECK(obs.observed.all());
  CHECK(obs.site_ids == std::vector<std::string>{"a", "b"});
  CHECK(obs.times == std::vector<std::string>{"1", "2", "3"});
  CHECK(obs.values(1, 2) == 1.7);
  CHECK(obs.sites[1].x == 6.0);
  CHECK(obs.sites[1].y == 2.0);
}

TEST_CASE("ingest: a missing entry sets its mask bit") {
  std::istringstream in(
      "site_id,lon,lat,time,value\n"
      "a,0,0,10,1\n"
      "a,0,0,2,2\n"
      "b,1,0,2,3\n"
      "b,1,0,10,NA\n");
  const auto obs = io::read_observations(in);
  CHECK(obs.times == std::vector<std::string>{"2", "10"});
  CHECK(obs.observed(0, 0));
  CHECK(obs.observed(0, 1));
  CHECK(obs.observed(1, 0));
  CHECK_FALSE(obs.observed(1, 1));

  // Absent rows are missing too.
  std::istringstream sparse_in("site_id,lon,lat,time,value\na,0,0,1,1\nb,1,0,2,3\n");
  const auto s = io::read_observations(sparse_in);
  CHECK(s.observed.count() == 2);
}

TEST_CASE("ingest errors carry the line number") {
  const auto dup = [] {
    std::istringstream in("site_id,lon,lat,time,value\na,0,0,1,1\nb,1,0,1,2\na,0,0,1,3\n");
    io::read_observations(in, 1.0, 1.0, "obs.csv");
  };
  CHECK_THROWS_AS(dup(), DataError);
  CHECK(error_message(dup).find("obs.csv:4") != std::string::npos);

  const auto bad = [] {
    std::istringstream in("site_id,lon,lat,time,value\na,0,0,1,1\na,zero,0,2,1\n");
    io::read_observations(in, 1.0, 1.0, "obs.csv");
  };
  CHECK_THROWS_AS(bad(), DataError);
  CHECK(error_message(bad).find("obs.csv:3") != std::string::npos);

  const auto short_row = [] {
    std::istringstream in("site_id,lon,lat,time,value\na,0,0,1\n");
    io::read_observations(in);
  };
  CHECK_THROWS_AS(short_row(), DataError);

  const auto header = [] {
    std::istringstream in("site,lon,lat,time,value\n");
    io::read_observations(in);
  };
  CHECK_THROWS_AS(header(), DataError);

  const auto moved = [] {
    std::istringstream in("site_id,lon,lat,time,value\na,0,0,1,1\na,5,0,2,1\n");
    io::read_observations(in);
  };
  CHECK_THROWS_AS(moved(), DataError);
}

TEST_CASE("observations survive a write/read round trip") {
  std::istringstream in("site_id,lon,lat,time,value\na,0.25,1,2001-06-01,1\nb,1,0,2001-06-01,\nb,1,0,2001-06-02,2.5\n");
  const auto obs = io::read_observations(in);
  std::ostringstream out;
  io::write_observations(out, obs);
  std::istringstream back(out.str());
  const auto again = io::read_observations(back);
  CHECK(again.site_ids == obs.site_ids);
  CHECK(again.times == obs.times);
  CHECK((again.observed == obs.observed).all());
  for (int i = 0; i < 2; ++i)
    for (int t = 0; t < 2; ++t)
      if (obs.observed(i, t)) CHECK(again.values(i, t) == obs.values(i, t));
}

TEST_CASE("year boundaries") {
  const std::vector<std::string> t{"1990-07-30", "1990-07-31", "1991-06-01", "1991-06-02", "1995-06-01"};
  CHECK(io::year_boundaries(t) == std::vector<int>{2, 4});
  CHECK(io::year_boundaries({"1", "2", "3"}).empty());
}

TEST_CASE("marginal JSON records lambda_v and round-trips") {
  Rng rng(9);
  std::vector<double> sample(400);
  for (auto& v : sample) v = rng.normal();
  const auto m = marginals::fit_gpd(sample, 0.95);
  const std::string text = io::marginals_json({"site-1"}, {m});
  const auto j = nlohmann::json::parse(text).at("marginals");
  REQUIRE(j.is_array());
  CHECK(j[0]["site_id"] == "site-1");
  CHECK(j[0]["lambda_v"].get<double>() == 0.05);
  const auto back = io::parse_marginals_json(text);
  REQUIRE(back.size() == 1);
  CHECK(back[0].threshold() == m.threshold());
  CHECK(back[0].gpd_scale() == m.gpd_scale());
  CHECK(back[0].gpd_shape() == m.gpd_shape());
  CHECK(back[0].exceed_prob() == m.exceed_prob());
  for (double y : {-2.0, 0.0, m.threshold(), 3.0})
    CHECK(marginals::to_laplace(y, back[0]) == marginals::to_laplace(y, m));
  CHECK_THROWS_AS(io::parse_marginals_json("{\"site_id\": 1}"), DataError);
}

TEST_CASE("episodes CSV round trip") {
  const auto eps = toy::random_episodes(4, 3, 2, 1, 1.5, 0.2, 5);
  const std::vector<std::string> ids{"w", "x", "y", "z"};
  std::ostringstream out;
  io::write_episodes(out, eps, ids);
  CHECK(out.str().rfind("episode_id,site_id,time_offset,laplace_value,is_conditioning\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = io::read_episodes(in, ids, eps.u);
  REQUIRE(back.size() == eps.size());
  CHECK(back.s0 == eps.s0);
  CHECK(back.ell == eps.ell);
  for (int j = 0; j < eps.size(); ++j) {
    const auto& a = eps.episodes[static_cast<std::size_t>(j)];
    const auto& b = back.episodes[static_cast<std::size_t>(j)];
    CHECK(a.x == b.x);
    CHECK((a.observed == b.observed).all());
    for (int i = 0; i < 4; ++i)
      for (int t = 0; t < 2; ++t)
        if (a.observed(i, t)) CHECK(a.values(i, t) == b.values(i, t));
  }
}

TEST_CASE("content hash and error JSON") {
  CHECK(io::content_hash("") == "cbf29ce484222325");
  CHECK(io::content_hash("a") == "af63dc4c8601ec8c");
  CHECK(io::content_hash("abc") != io::content_hash("abd"));
  const auto j = nlohmann::json::parse(io::error_json("data", "duplicate_entry", "x:3: duplicate"));
  CHECK(j["error"] == "duplicate_entry");
  CHECK(j["category"] == "data");
}

TEST_CASE("write_text replaces atomically") {
  const auto dir = scratch_dir("write");
  io::write_text(dir / "a.txt", "one");
  io::write_text(dir / "a.txt", "two");
  CHECK(io::read_text(dir / "a.txt") == "two");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config parsing and validation") {
  using config::KeyValueFile;
  const auto kv = KeyValueFile::parse("# run\nmodel.number = 3\nmarginal.quantile = 0.9\n\nprior.noise_sd = 0.2, 0.4\n");
  CHECK(kv.get_int("model.number", 0) == 3);
  CHECK(kv.get_double("marginal.quantile", 0.0) == 0.9);
  CHECK(kv.get_doubles("prior.noise_sd", {}) == std::vector<double>{0.2, 0.4});

  const auto syntax = [] { KeyValueFile::parse("a = 1\njust words\n", "run.cfg"); };
  CHECK_THROWS_AS(syntax(), ConfigError);
  CHECK(error_message(syntax).find("run.cfg:2") != std::string::npos);
  CHECK_THROWS_AS(KeyValueFile::parse("a = 1\na = 2\n"), ConfigError);

  CHECK_THROWS_AS(config::run_config(KeyValueFile::parse("model.numbr = 3\n")), ConfigError);
  CHECK_THROWS_AS(config::run_config(KeyValueFile::parse("marginal.quantile = 0.4\n")), ConfigError);
  CHECK_THROWS_AS(config::run_config(KeyValueFile::parse("marginal.quantile = lots\n")), ConfigError);

  const auto dir = scratch_dir("config");
  {
    std::ofstream(dir / "run.cfg") << "data.input = missing.csv\n";
  }
  CHECK_THROWS_AS(config::load_run_config(dir / "run.cfg"), ConfigError);
  {
    std::ofstream(dir / "data.csv") << "site_id,lon,lat,time,value\n";
    std::ofstream(dir / "run.cfg") << "data.input = data.csv\noutput.dir = results\n";
  }
  const auto rc = config::load_run_config(dir / "run.cfg");
  CHECK(rc.input == dir / "data.csv");
  CHECK(rc.output_dir == dir / "results");
  CHECK(rc.marginal_quantile == 0.95);
  CHECK(rc.run_length == 12);
  CHECK(rc.spec.ell == 7);
  CHECK(rc.spec.interior_knots == 14);
  std::filesystem::remove_all(dir);
}
