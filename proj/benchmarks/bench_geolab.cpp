#include <benchmark/benchmark.h>

#include "geolab/geometry.hpp"
#include "geolab/learners.hpp"
#include "geolab/rng.hpp"
#include "geolab/synthlab.hpp"

using namespace geolab;

namespace {

ManifoldPair bench_pair(int dim, int n) {
  SynthSpec spec;
  spec.dim = dim;
  spec.n_per_class = n;
  spec.separation = 1.0;
  spec.spectrum.assign(static_cast<std::size_t>(dim), 1.0);
  spec.seed = 1;
  return gen_gaussian_manifolds(spec).pair;
}

NormalizedStream bench_stream(int len, int dim) {
  const CounterRng rng(2);
  Matrix z(len, dim);
  std::vector<int> labels(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 2;
    for (int j = 0; j < dim; ++j) z(i, j) = rng.normal(static_cast<std::uint64_t>(i * dim + j));
  }
  return normalize_stream(z, Vector::Zero(dim), labels);
}

void BM_ProbeQp(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const PreprocessedPair pre = preprocess_manifolds(bench_pair(32, n));
  const ProbeQp qp(pre.samples[0], 0.0);
  const ProbeSource probes = gaussian_probes(3);
  std::int64_t j = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qp.solve(probes(0, j++, pre.samples[0].cols())));
  }
}
BENCHMARK(BM_ProbeQp)->Arg(10)->Arg(50)->Arg(100);

void BM_Capacity(benchmark::State& state) {
  const ManifoldPair pair = bench_pair(16, 50);
  CapacityOptions opt;
  opt.n_probes = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(capacity(pair, opt).capacity);
}
BENCHMARK(BM_Capacity)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Learner(benchmark::State& state) {
  const NormalizedStream s = bench_stream(500, 64);
  const LearnerKind kind = kAllLearners[static_cast<std::size_t>(state.range(0))];
  const LearnerConfig cfg = default_grid(kind).front();
  state.SetLabel(to_string(kind));
  for (auto _ : state) benchmark::DoNotOptimize(run_learner(cfg, s).diffs.data());
}
BENCHMARK(BM_Learner)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
