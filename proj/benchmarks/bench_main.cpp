#include <benchmark/benchmark.h>

#include <random>

#include "lattice/distributions.hpp"
#include "lattice/harness.hpp"
#include "lattice/parametric.hpp"
#include "lattice/semiparametric.hpp"
#include "lattice/simulation.hpp"

using namespace lattice;

static void BM_BivariateNormalCdf(benchmark::State& state) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0), r(-0.95, 0.95);
  std::vector<std::array<double, 3>> pts(1024);
  for (auto& p : pts) p = {u(gen), u(gen), r(gen)};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& p = pts[i++ & 1023];
    benchmark::DoNotOptimize(bivariate_normal_cdf(p[0], p[1], Correlation(p[2])));
  }
}
BENCHMARK(BM_BivariateNormalCdf);

static void BM_LogLikelihoodGradient(benchmark::State& state) {
  const DgpSpec spec = builtin_spec("param-design-1", 3);
  const Dataset data = generate(spec, static_cast<std::size_t>(state.range(0)));
  const ParamVector theta = true_params(spec);
  Eigen::VectorXd g;
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(data, theta, &g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogLikelihoodGradient)->Arg(1000)->Arg(10000);

static void BM_ParametricFit(benchmark::State& state) {
  const DgpSpec spec = builtin_spec("param-design-1", 4);
  const Dataset data = generate(spec, 1000);
  for (auto _ : state) benchmark::DoNotOptimize(fit(data).estimate);
}
BENCHMARK(BM_ParametricFit)->Unit(benchmark::kMillisecond);

static void BM_KernelFit(benchmark::State& state) {
  const DgpSpec spec = builtin_spec("twostep-5.1", 5);
  const Dataset data = generate(spec, 1000);
  const auto axis = evaluation_axis();
  KernelConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(kernel_smoothing_fit(data, spec.lattice, spec.model, cfg, axis, axis).h1);
}
BENCHMARK(BM_KernelFit)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
