#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "condex/config.hpp"
#include "condex/error.hpp"
#include "condex/io.hpp"
#include "pipeline.hpp"

using namespace condex;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numerical: return 4;
  }
  return 4;
}

int fail(const std::string& category, const std::string& kind, const std::string& message, int code) {
  std::cerr << io::error_json(category, kind, message) << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional spatial extremes with latent Gaussian models"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  using Stage = std::function<pipeline::Artifacts(const config::RunConfig&, const std::filesystem::path&)>;
  std::function<int()> action;

  const auto stage = [&](const std::string& name, const std::string& help, Stage run) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "Run configuration file")->required();
    sub->add_option("-o,--out", out_dir, "Output directory (overrides output.dir)");
    sub->callback([&, run] {
      action = [&, run] {
        const auto cfg = config::load_run_config(config_path);
        const std::filesystem::path dir = out_dir.empty() ? cfg.output_dir : std::filesystem::path(out_dir);
        const auto artifacts = run(cfg, dir);
        pipeline::write_artifacts(dir, artifacts);
        for (const auto& [file, text] : artifacts) std::cout << (dir / file).lexically_normal().string() << '\n';
        return 0;
      };
    });
  };
  stage("transform", "Fit marginal models and write the Laplace-scale field",
        [](const auto& c, const auto&) { return pipeline::run_transform(c); });
  stage("decluster", "Extract episodes and tabulate cluster counts against the run length",
        [](const auto& c, const auto&) { return pipeline::run_decluster(c); });
  stage("fit", "Fit the configured model", [](const auto& c, const auto&) { return pipeline::run_fit(c); });
  stage("diagnose", "WAIC, CPO/PIT, region exceedance and model chi",
        [](const auto& c, const auto& dir) { return pipeline::run_diagnose(c, dir); });
  stage("cv", "Hold-out RMSE for quadrant and episode-fold hold-outs",
        [](const auto& c, const auto&) { return pipeline::run_cv(c); });
  stage("simulate", "Simulate episodes from the fitted or a specified model",
        [](const auto& c, const auto&) { return pipeline::run_simulate(c); });
  stage("chi", "Empirical chi_q against distance from the conditioning site",
        [](const auto& c, const auto&) { return pipeline::run_chi(c); });

  pipeline::SynthOptions synth;
  std::string synth_out;
  auto* sy = app.add_subcommand("synth", "Write a synthetic observation CSV");
  sy->add_option("-o,--out", synth_out, "Output CSV path")->required();
  sy->add_option("--side", synth.side, "Sites per grid side")->capture_default_str();
  sy->add_option("--spacing", synth.spacing, "Grid spacing")->capture_default_str();
  sy->add_option("--years", synth.years, "Number of summers")->capture_default_str();
  sy->add_option("--range", synth.range, "Spatial correlation range")->capture_default_str();
  sy->add_option("--rho", synth.time_correlation, "Day-to-day correlation")->capture_default_str();
  sy->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  sy->callback([&] {
    action = [&] {
      io::write_text(synth_out, pipeline::synthetic_csv(synth));
      std::cout << synth_out << '\n';
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", "invalid_arguments", e.what(), 2);
  }

  try {
    return action();
  } catch (const Error& e) {
    return fail(to_string(e.category()), e.kind(), e.what(), exit_code(e.category()));
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("data", "io_error", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("numerical", "internal_error", e.what(), 4);
  }
}
