#include <benchmark/benchmark.h>

#include "dnlkit/bench.hpp"
#include "dnlkit/scoring.hpp"
#include "dnlkit/shield.hpp"

namespace {

using namespace dnlkit;

struct Setup {
  tensorstore::ModelManifest arch = bench::desk_manifest(8, 16);
  tensorstore::WeightArchive params = bench::init_params(arch, 1);
  shield::ProtectionRegistry reg;

  Setup() {
    const auto cands = tensorstore::candidate_params(arch, params, 10);
    reg = shield::select_protected(scoring::score_magnitude(cands), 0.2f);
  }
};

void BM_encode_replicate3(benchmark::State& state) {
  Setup s;
  for (auto _ : state) {
    auto side = shield::encode(s.params, s.reg, shield::Scheme::replicate3);
    benchmark::DoNotOptimize(side.payload.data());
  }
}
BENCHMARK(BM_encode_replicate3);

void BM_encode_hamming(benchmark::State& state) {
  Setup s;
  for (auto _ : state) {
    auto side = shield::encode(s.params, s.reg, shield::Scheme::hamming_secded);
    benchmark::DoNotOptimize(side.payload.data());
  }
}
BENCHMARK(BM_encode_hamming);

void BM_verify_and_repair_clean(benchmark::State& state) {
  Setup s;
  const auto side = shield::encode(s.params, s.reg, shield::Scheme::hamming_secded);
  for (auto _ : state) {
    auto rep = shield::verify_and_repair(s.params, s.reg, side);
    benchmark::DoNotOptimize(rep.corrected);
  }
}
BENCHMARK(BM_verify_and_repair_clean);

}  // namespace
