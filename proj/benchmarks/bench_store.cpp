#include <benchmark/benchmark.h>

#include "dnlkit/bench.hpp"
#include "dnlkit/tensorstore.hpp"

namespace {

using namespace dnlkit;

void BM_write_archive(benchmark::State& state) {
  const auto arch = bench::desk_manifest(8, 16);
  const auto params = bench::init_params(arch, 1);
  for (auto _ : state) {
    auto bytes = tensorstore::write_archive(params);
    benchmark::DoNotOptimize(bytes.data());
  }
}
BENCHMARK(BM_write_archive);

void BM_read_archive(benchmark::State& state) {
  const auto arch = bench::desk_manifest(8, 16);
  const auto bytes = tensorstore::write_archive(bench::init_params(arch, 1));
  for (auto _ : state) {
    auto a = tensorstore::read_archive(bytes);
    benchmark::DoNotOptimize(a);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_read_archive);

void BM_candidate_params(benchmark::State& state) {
  const auto arch = bench::desk_manifest(8, 16);
  const auto params = bench::init_params(arch, 1);
  for (auto _ : state) {
    auto cands = tensorstore::candidate_params(arch, params, 10);
    benchmark::DoNotOptimize(cands.data());
  }
}
BENCHMARK(BM_candidate_params);

}  // namespace
