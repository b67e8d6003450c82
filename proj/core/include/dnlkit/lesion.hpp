#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnlkit/nnengine.hpp"
#include "dnlkit/tensorstore.hpp"

// Attack planners and the flip applicator. Planning is deterministic and
// single-threaded; plans are serializable artifacts so that analysis and
// exploitation can happen on different machines.
namespace dnlkit::lesion {

struct Flip {
  tensorstore::ParamCoord coord;
  int bit = 31;

  friend bool operator==(const Flip&, const Flip&) = default;
};

struct FlipPlan {
  std::string method;
  std::uint64_t k = 0;
  int L = 0;
  std::optional<std::uint64_t> seed;
  std::vector<Flip> flips;  // |flips| == k, no duplicate (coord, bit)

  FlipPlan prefix(std::uint64_t first_k) const;
};

inline constexpr int kDefaultL = 10;

// Highest-|theta| parameters of the first L parameterized layers, greedily
// taken one per kernel; every flip targets the sign bit. Performs zero
// engine traversals. k beyond the number of distinct kernels is rejected.
FlipPlan plan_dnl(const tensorstore::ModelManifest& m,
                  const tensorstore::WeightArchive& a, std::uint64_t k, int L);

// Same selection driven by the hybrid score from one seeded Gaussian probe:
// exactly one forward and one backward traversal.
FlipPlan plan_1p_dnl(const nnengine::Model& model, std::uint64_t k, int L,
                     std::uint64_t seed, float alpha = 1.0f, float beta = 1.0f);

// Uniform sample of candidate parameters without replacement, all layers
// unless restrict_L is given. bit = 31 when sign_only, else uniform in
// [0, 32). Fully determined by the seed, and prefix-consistent in k.
FlipPlan plan_random(const tensorstore::ModelManifest& m,
                     const tensorstore::WeightArchive& a, std::uint64_t k,
                     std::uint64_t seed, bool sign_only = true,
                     std::optional<int> restrict_L = std::nullopt);

// Global top-k by |theta| over all layers, no kernel constraint: the naive
// magnitude strategy used as a comparison point.
FlipPlan plan_magnitude_unconstrained(const tensorstore::ModelManifest& m,
                                      const tensorstore::WeightArchive& a,
                                      std::uint64_t k);

// New archive differing from the input in exactly the planned bits.
// An involution: apply(plan, apply(plan, a)) == a.
tensorstore::WeightArchive apply(const FlipPlan& plan,
                                 const tensorstore::WeightArchive& a);

std::string plan_to_json(const FlipPlan& p);
FlipPlan plan_from_json(std::string_view text);
FlipPlan load_plan_file(const std::filesystem::path& path);
void save_plan_file(const FlipPlan& p, const std::filesystem::path& path);

}  // namespace dnlkit::lesion
