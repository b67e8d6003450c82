#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnlkit/lesion.hpp"
#include "dnlkit/nnengine.hpp"
#include "dnlkit/tensorstore.hpp"

// Victim-model production (synthetic dataset + trainer), the AR/mAR damage
// metrics, experiment orchestration and the exhaustive single-flip oracle.
namespace dnlkit::bench {

// Desk-scale stand-in for real image data: one procedural grayscale pattern
// per class plus seeded Gaussian pixel noise. Deterministic per spec.
struct SyntheticDatasetSpec {
  int classes = 8;
  int samples_per_class = 500;
  int image_size = 16;  // square, 1 channel
  float noise_sigma = 0.3f;
  std::uint64_t seed = 1234;
};

inline constexpr int kPatternRecipes = 8;

SyntheticDatasetSpec dataset_spec_from_json(std::string_view text);
std::string dataset_spec_to_json(const SyntheticDatasetSpec& spec);
SyntheticDatasetSpec load_dataset_spec_file(const std::filesystem::path& path);
void save_dataset_spec_file(const SyntheticDatasetSpec& spec,
                            const std::filesystem::path& path);

nnengine::Dataset gen_dataset(const SyntheticDatasetSpec& spec);

// Even per-class sample index goes to train, odd to test; disjoint by
// construction.
void split_parity(const nnengine::Dataset& all, nnengine::Dataset* train,
                  nnengine::Dataset* test);

// First n samples of a dataset (the pinned evaluation subsample).
nnengine::Dataset head(const nnengine::Dataset& d, std::size_t n);

struct TrainHyper {
  int epochs = 10;
  float lr = 0.05f;
  float momentum = 0.9f;
  int batch = 32;
  std::uint64_t seed = 42;
};

// The default desk victim: conv(12,3x3,p1) relu pool2 conv(24,3x3,p1) relu
// pool2 flatten linear(128) relu linear(classes), ~53K parameters.
tensorstore::ModelManifest desk_manifest(int classes, int image_size);

// He-normal weight init from the seed; biases zero; the final classifier
// starts at zero so the untrained loss is exactly ln(classes).
tensorstore::WeightArchive init_params(const tensorstore::ModelManifest& m,
                                       std::uint64_t seed);

// Minibatch SGD with momentum on softmax cross-entropy; single-threaded and
// deterministic per seed. Throws when the loss goes non-finite, reporting
// epoch and step.
nnengine::Model train(const tensorstore::ModelManifest& arch,
                      const nnengine::Dataset& train_data,
                      const TrainHyper& hyper);

// AR(k) = (acc0 - acc_k) / acc0; requires acc0 > 0.
double ar(double acc0, double acc_k);
// mAR(N) = mean of AR(1..N); requires at least one value.
double mar(std::span<const double> ars);

enum class Method { dnl, one_pass_dnl, random, magnitude_unconstrained };

std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

struct EvalRow {
  std::uint64_t k = 0;
  std::optional<std::uint64_t> seed;  // present for stochastic methods
  double acc = 0.0;
  double ar = 0.0;
};

struct KPoint {
  std::uint64_t k = 0;
  double acc = 0.0;  // mean over seeds for stochastic methods
  double ar = 0.0;
};

struct EvalReport {
  std::string method;
  int L = 0;
  std::uint64_t N = 0;
  std::vector<std::uint64_t> seeds;
  double baseline_acc = 0.0;
  std::vector<EvalRow> rows;
  std::vector<KPoint> per_k;
  double mar_n = 0.0;
};

struct ExperimentConfig {
  Method method = Method::dnl;
  std::uint64_t N = 10;
  int L = 10;
  std::vector<std::uint64_t> seeds;  // random: one plan per seed
  std::uint64_t probe_seed = 42;     // 1p_dnl Gaussian probe
  float alpha = 1.0f;
  float beta = 1.0f;
  int jobs = 0;
};

// For k = 1..N evaluates the k-prefix of one top-N plan (deterministic
// methods) or of one fresh plan per seed (random), restoring the archive
// after every evaluation via the apply involution.
EvalReport run_experiment(const nnengine::Model& model,
                          const nnengine::Dataset& eval_data,
                          const ExperimentConfig& cfg);

// Evaluates the k-prefixes (k = 1..plan.k) of an existing plan, restoring
// the archive after each point.
EvalReport evaluate_plan(const nnengine::Model& model,
                         const nnengine::Dataset& eval_data,
                         const lesion::FlipPlan& plan, int jobs = 0);

// CSV rows method,L,k,seed,acc,ar plus one summary row per method; the
// leading comment line carries the schema version.
void write_report_csv(const EvalReport& r, std::ostream& out);
std::string report_to_json(const EvalReport& r);

struct RankedFlip {
  tensorstore::ParamCoord coord;
  double ar1 = 0.0;
};

// AR(1) of every single sign flip in the first L layers, evaluated on the
// given (sub)dataset; descending AR, ties in candidate order. Guarded to
// populations of at most 100000 candidates.
std::vector<RankedFlip> brute_force_single_flip(const nnengine::Model& model,
                                                const nnengine::Dataset& data,
                                                int L, int jobs = 0);

inline constexpr std::size_t kBruteForceGuard = 100000;

// Nearest-rank percentile (p in [0,1]) of an unsorted sample.
double percentile_nearest_rank(std::vector<double> values, double p);

}  // namespace dnlkit::bench
