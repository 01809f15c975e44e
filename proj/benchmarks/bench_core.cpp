#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cityprobe/features.hpp"
#include "cityprobe/gateway.hpp"
#include "cityprobe/ml.hpp"
#include "cityprobe/parsing.hpp"
#include "cityprobe/rng.hpp"

using namespace cityprobe;

namespace {

HiddenStateTensor random_tensor(uint32_t tokens, uint32_t dim, uint64_t seed) {
  HiddenStateTensor tensor;
  tensor.place = PlaceId{"bench", ""};
  tensor.n_tokens = tokens;
  tensor.hidden_dim = dim;
  tensor.data.resize(size_t(tokens) * dim);
  std::mt19937_64 rng(seed);
  for (auto& v : tensor.data) v = static_cast<float>(2.0 * unit_uniform(rng) - 1.0);
  return tensor;
}

void BM_MeanMaxPool(benchmark::State& state) {
  auto tensor = random_tensor(37, static_cast<uint32_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mean_max_pool(tensor));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MeanMaxPool)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

void BM_Projection(benchmark::State& state) {
  auto tensor = random_tensor(37, static_cast<uint32_t>(state.range(0)), 2);
  auto pooled = mean_max_pool(tensor);
  auto projection = Projection::make(pooled.size(), 32, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(project(pooled, projection));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Projection)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

void BM_ProjectionMatrixBuild(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(Projection::make(8192, 32, 7));
  }
}
BENCHMARK(BM_ProjectionMatrixBuild);

void BM_ExtractJson(benchmark::State& state) {
  std::string raw = "Sure! Here is the answer you asked for:\n```json\n"
                    "{\"population_density\": 7.5, \"traffic_volume\": 6.0, "
                    "\"green_spaces\": 3.5, \"note\": \"braces } inside { strings\"}\n```\n"
                    "Let me know if you need anything else.";
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_json_object(raw));
  }
}
BENCHMARK(BM_ExtractJson);

void BM_Fingerprint(benchmark::State& state) {
  std::string prompt(512, 'p');
  for (auto _ : state) {
    benchmark::DoNotOptimize(request_fingerprint("gpt-4o", 0.01, prompt, 3));
  }
}
BENCHMARK(BM_Fingerprint);

void BM_TreeFit(benchmark::State& state) {
  std::mt19937_64 rng(5);
  Rows X;
  std::vector<double> y;
  for (int i = 0; i < state.range(0); ++i) {
    X.push_back({10.0 * unit_uniform(rng), 10.0 * unit_uniform(rng),
                 10.0 * unit_uniform(rng), 10.0 * unit_uniform(rng)});
    y.push_back(3.0 * X.back()[0] - 2.0 * X.back()[1] + unit_uniform(rng));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(RegressorSpec::decision_tree(), X, y));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TreeFit)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_ForestFit(benchmark::State& state) {
  std::mt19937_64 rng(6);
  Rows X;
  std::vector<double> y;
  for (int i = 0; i < 128; ++i) {
    X.push_back({10.0 * unit_uniform(rng), 10.0 * unit_uniform(rng),
                 10.0 * unit_uniform(rng), 10.0 * unit_uniform(rng)});
    y.push_back(3.0 * X.back()[0] - 2.0 * X.back()[1] + unit_uniform(rng));
  }
  auto spec = RegressorSpec::random_forest(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(spec, X, y));
  }
}
BENCHMARK(BM_ForestFit)->Arg(10)->Arg(50)->Arg(100);

}  // namespace

int main(int argc, char** argv) {
  ::benchmark::Initialize(&argc, argv);
  if (::benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  ::benchmark::RunSpecifiedBenchmarks();
  ::benchmark::Shutdown();
  return 0;
}
