#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dnlkit::cli {

struct TrainConfig {
  std::string out_dir;
  std::uint64_t seed = 42;
  int epochs = 10;
  float lr = 0.05f;
  float momentum = 0.9f;
  int batch = 32;
  int classes = 8;
  int samples_per_class = 500;
  int image_size = 16;
  float noise_sigma = 0.3f;
  std::uint64_t data_seed = 1234;
  int jobs = 0;
};

struct InspectConfig {
  std::string archive;
  std::string manifest;
  int top = 10;
  std::string scores_out;  // magnitude score table CSV (needs the manifest)
};

struct AttackConfig {
  std::string manifest;
  std::string archive;
  std::string method = "dnl";
  std::uint64_t k = 1;
  int L = 10;
  std::uint64_t seed = 42;
  float alpha = 1.0f;
  float beta = 1.0f;
  bool any_bit = false;  // random: draw bit positions beyond the sign
  std::string plan_out;
  std::string apply_out;
};

struct EvalConfig {
  std::string manifest;
  std::string archive;
  std::string dataset;
  std::string split = "test";
  std::uint64_t subsample = 0;  // 0 = whole split
  std::string plan;             // evaluate an existing plan
  std::string method = "dnl";   // or plan a fresh one
  std::uint64_t N = 10;
  int L = 10;
  std::uint64_t seed_count = 100;
  std::uint64_t seed_base = 0;
  std::uint64_t probe_seed = 42;
  float alpha = 1.0f;
  float beta = 1.0f;
  std::string csv_out;
  std::string json_out;
  int jobs = 0;
};

struct DefendConfig {
  std::string manifest;
  std::string archive;
  bool verify = false;
  // build mode
  double fraction = 0.1;
  std::string selection = "by_score";
  std::uint64_t seed = 0;
  std::string scheme = "replicate3";
  int L = 0;  // 0 = all layers
  std::string registry_out;
  std::string sidecar_out;
  // verify mode
  std::string registry;
  std::string sidecar;
  std::string repaired_out;
  std::string report_out;
};

struct StressConfig {
  std::string manifest;
  std::string archive;
  std::string dataset;
  std::string split = "test";
  std::uint64_t subsample = 0;
  std::vector<double> fractions = {0, 1, 5, 10, 20};  // percent of candidates
  std::uint64_t seeds = 20;
  std::uint64_t seed_base = 0;
  double flip_fraction = 0.1;  // of the candidate population
  std::uint64_t n_flips = 0;   // overrides flip_fraction when nonzero
  std::string scheme = "replicate3";
  std::string selection = "by_score";
  bool full_word = false;
  std::string csv_out;
  int jobs = 0;
};

int cmd_train(const TrainConfig& cfg);
int cmd_inspect(const InspectConfig& cfg);
int cmd_attack(const AttackConfig& cfg);
int cmd_eval(const EvalConfig& cfg);
int cmd_defend(const DefendConfig& cfg);
int cmd_stress(const StressConfig& cfg);

}  // namespace dnlkit::cli
