#include <benchmark/benchmark.h>

#include <vector>

#include "condex/gmrf.hpp"
#include "condex/inference.hpp"
#include "condex/mesh.hpp"
#include "condex/model.hpp"
#include "toy.hpp"

using namespace condex;

namespace {

mesh::Mesh2D square_mesh(double edge) {
  const std::vector<Point> corners{{0, 0}, {100, 0}, {0, 100}, {100, 100}};
  return mesh::build_mesh_2d(corners, edge, 2.0 * edge, 15.0);
}

void BM_SpdeAssembly(benchmark::State& state) {
  const auto m = square_mesh(100.0 / static_cast<double>(state.range(0)));
  const auto p = gmrf::matern_to_spde(25.0, 1.0, 0.5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(gmrf::spde_precision(m, p));
  state.counters["vertices"] = m.size();
}
BENCHMARK(BM_SpdeAssembly)->Arg(10)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_Factorize(benchmark::State& state) {
  const auto m = square_mesh(100.0 / static_cast<double>(state.range(0)));
  const auto q = gmrf::spde_precision(m, gmrf::matern_to_spde(25.0, 1.0, 0.5, 2));
  for (auto _ : state) benchmark::DoNotOptimize(gmrf::CholeskyFactor(q).log_determinant());
  state.counters["vertices"] = m.size();
}
BENCHMARK(BM_Factorize)->Arg(10)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

// Exact conditional log-likelihood of a model-3 toy problem at fixed hyperparameters.
void BM_LogLikelihood(benchmark::State& state) {
  auto spec = toy::small_spec(model::table_model(3));
  spec.ell = static_cast<int>(state.range(1));
  const int side = static_cast<int>(state.range(0));
  const auto t = toy::make_toy(spec, side, 20, 0.1, 5);
  inference::Evaluator ev(std::make_shared<const model::AssembledModel>(t.model));
  const auto theta = t.model.hyper.from_internal(Eigen::VectorXd::Zero(t.model.hyper.size()), {});
  for (auto _ : state) benchmark::DoNotOptimize(ev.conditional(theta, false).log_marginal);
  state.counters["latent"] = t.model.layout.total;
}
BENCHMARK(BM_LogLikelihood)->Args({6, 1})->Args({10, 1})->Args({6, 3})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
