#include <benchmark/benchmark.h>

#include "dnlkit/bench.hpp"
#include "dnlkit/lesion.hpp"
#include "dnlkit/nnengine.hpp"

namespace {

using namespace dnlkit;

nnengine::Model desk_model() {
  auto arch = bench::desk_manifest(8, 16);
  return nnengine::make_model(arch, bench::init_params(arch, 1));
}

void BM_forward(benchmark::State& state) {
  const auto model = desk_model();
  const auto net = nnengine::CompiledNet::compile(model.manifest, model.params);
  std::vector<float> tape(net.tape_size, 0.1f);
  for (auto _ : state) {
    net.run(tape);
    benchmark::DoNotOptimize(tape.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_forward);

void BM_grad_sum_logits(benchmark::State& state) {
  const auto model = desk_model();
  for (auto _ : state) {
    auto g = nnengine::grad_sum_logits(model, 42);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_grad_sum_logits);

void BM_plan_dnl(benchmark::State& state) {
  const auto model = desk_model();
  for (auto _ : state) {
    auto plan = lesion::plan_dnl(model.manifest, model.params, 10, 10);
    benchmark::DoNotOptimize(plan);
  }
}
BENCHMARK(BM_plan_dnl);

void BM_plan_random(benchmark::State& state) {
  const auto model = desk_model();
  for (auto _ : state) {
    auto plan = lesion::plan_random(model.manifest, model.params, 100, 7);
    benchmark::DoNotOptimize(plan);
  }
}
BENCHMARK(BM_plan_random);

}  // namespace

BENCHMARK_MAIN();
