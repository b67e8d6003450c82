#include "dnlkit/lesion.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "dnlkit/bitkit.hpp"
#include "dnlkit/philox.hpp"
#include "dnlkit/scoring.hpp"

namespace dnlkit::lesion {

using tensorstore::Candidate;
using tensorstore::KernelId;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kRandomPlanStream = std::uint64_t{4} << 32;

std::uint64_t distinct_kernels(const std::vector<Candidate>& cands) {
  std::unordered_set<std::uint64_t> seen;
  for (const auto& c : cands) {
    seen.insert((std::uint64_t(c.kernel.param_layer_index) << 48) |
                c.kernel.kernel_index);
  }
  return seen.size();
}

// Scans the globally sorted candidate list and takes the first not-yet-used
// kernel each time until k flips are selected.
std::vector<Flip> greedy_one_per_kernel(const scoring::ScoreTable& table,
                                        std::uint64_t k) {
  const std::uint64_t kernels = distinct_kernels(table.candidates);
  if (k > kernels) {
    throw_precondition("plan: k=" + std::to_string(k) + " exceeds the " +
                       std::to_string(kernels) + " distinct kernels available");
  }
  const auto order = scoring::descending_order(table);
  std::unordered_set<std::uint64_t> used;
  std::vector<Flip> flips;
  flips.reserve(k);
  for (std::size_t oi = 0; oi < order.size() && flips.size() < k; ++oi) {
    const auto& c = table.candidates[order[oi]];
    const std::uint64_t key =
        (std::uint64_t(c.kernel.param_layer_index) << 48) | c.kernel.kernel_index;
    if (!used.insert(key).second) continue;
    flips.push_back(Flip{c.coord, bitkit::kSignBitPos});
  }
  return flips;
}

}  // namespace

FlipPlan FlipPlan::prefix(std::uint64_t first_k) const {
  FlipPlan p = *this;
  if (first_k < p.flips.size()) {
    p.flips.resize(first_k);
  }
  p.k = p.flips.size();
  return p;
}

FlipPlan plan_dnl(const tensorstore::ModelManifest& m,
                  const tensorstore::WeightArchive& a, std::uint64_t k, int L) {
  auto cands = tensorstore::candidate_params(m, a, L);
  const auto table = scoring::score_magnitude(std::move(cands));
  FlipPlan plan;
  plan.method = "dnl";
  plan.k = k;
  plan.L = L;
  plan.flips = greedy_one_per_kernel(table, k);
  return plan;
}

FlipPlan plan_1p_dnl(const nnengine::Model& model, std::uint64_t k, int L,
                     std::uint64_t seed, float alpha, float beta) {
  auto cands = tensorstore::candidate_params(model.manifest, model.params, L);
  const auto g = nnengine::grad_sum_logits(model, seed);  // the single pass
  const auto table = scoring::score_hybrid(std::move(cands), g, alpha, beta);
  FlipPlan plan;
  plan.method = "1p_dnl";
  plan.k = k;
  plan.L = L;
  plan.seed = seed;
  plan.flips = greedy_one_per_kernel(table, k);
  return plan;
}

FlipPlan plan_random(const tensorstore::ModelManifest& m,
                     const tensorstore::WeightArchive& a, std::uint64_t k,
                     std::uint64_t seed, bool sign_only,
                     std::optional<int> restrict_L) {
  const int L = restrict_L.value_or(m.param_layer_count());
  const auto cands = tensorstore::candidate_params(m, a, L);
  if (k > cands.size()) {
    throw_precondition("plan_random: k=" + std::to_string(k) +
                       " exceeds candidate population " +
                       std::to_string(cands.size()));
  }

  // One index draw then (optionally) one bit draw per flip keeps plans
  // prefix-consistent in k under a fixed seed.
  philox::Stream rng(seed, kRandomPlanStream);
  std::vector<std::uint64_t> idx(cands.size());
  for (std::uint64_t i = 0; i < idx.size(); ++i) idx[i] = i;

  FlipPlan plan;
  plan.method = "random";
  plan.k = k;
  plan.L = L;
  plan.seed = seed;
  plan.flips.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + rng.uniform_below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    const int bit = sign_only ? bitkit::kSignBitPos
                              : static_cast<int>(rng.uniform_below(32));
    plan.flips.push_back(Flip{cands[idx[i]].coord, bit});
  }
  return plan;
}

FlipPlan plan_magnitude_unconstrained(const tensorstore::ModelManifest& m,
                                      const tensorstore::WeightArchive& a,
                                      std::uint64_t k) {
  const int L = m.param_layer_count();
  auto cands = tensorstore::candidate_params(m, a, L);
  if (k > cands.size()) {
    throw_precondition("plan_magnitude_unconstrained: k exceeds population");
  }
  const auto table = scoring::score_magnitude(std::move(cands));
  const auto order = scoring::descending_order(table);
  FlipPlan plan;
  plan.method = "magnitude";
  plan.k = k;
  plan.L = L;
  plan.flips.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    plan.flips.push_back(Flip{table.candidates[order[i]].coord, bitkit::kSignBitPos});
  }
  return plan;
}

tensorstore::WeightArchive apply(const FlipPlan& plan,
                                 const tensorstore::WeightArchive& a) {
  tensorstore::WeightArchive out = a;
  for (const auto& f : plan.flips) {
    auto& rec = out.tensor(f.coord.tensor);
    if (f.coord.flat_index >= rec.numel()) {
      throw_precondition("apply: coordinate " + f.coord.tensor + "[" +
                         std::to_string(f.coord.flat_index) + "] out of bounds");
    }
    if (f.bit < 0 || f.bit > 31) {
      throw_precondition("apply: bit position out of range");
    }
    rec.set_word(f.coord.flat_index,
                 rec.word(f.coord.flat_index) ^ (std::uint32_t{1} << f.bit));
  }
  return out;
}

std::string plan_to_json(const FlipPlan& p) {
  ordered_json j = ordered_json::object();
  j["method"] = p.method;
  j["k"] = p.k;
  j["L"] = p.L;
  if (p.seed) {
    j["seed"] = *p.seed;
  } else {
    j["seed"] = nullptr;
  }
  ordered_json flips = ordered_json::array();
  for (const auto& f : p.flips) {
    flips.push_back({{"tensor", f.coord.tensor},
                     {"flat_index", f.coord.flat_index},
                     {"bit", f.bit}});
  }
  j["flips"] = std::move(flips);
  return j.dump(2) + "\n";
}

FlipPlan plan_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw_data(std::string("plan: not valid JSON: ") + e.what());
  }
  FlipPlan p;
  p.method = j.value("method", std::string{});
  p.k = j.value("k", std::uint64_t{0});
  p.L = j.value("L", 0);
  if (j.contains("seed") && !j["seed"].is_null()) {
    p.seed = j["seed"].get<std::uint64_t>();
  }
  if (!j.contains("flips") || !j["flips"].is_array()) {
    throw_data("plan: missing flips array");
  }
  std::set<std::pair<tensorstore::ParamCoord, int>> seen;
  for (const auto& fj : j["flips"]) {
    Flip f;
    f.coord.tensor = fj.value("tensor", std::string{});
    f.coord.flat_index = fj.value("flat_index", std::uint64_t{0});
    f.bit = fj.value("bit", 31);
    if (f.coord.tensor.empty()) throw_data("plan: flip without tensor name");
    if (f.bit < 0 || f.bit > 31) throw_data("plan: flip bit out of range");
    if (!seen.insert({f.coord, f.bit}).second) {
      throw_data("plan: duplicate flip " + f.coord.tensor + "[" +
                 std::to_string(f.coord.flat_index) + "] bit " +
                 std::to_string(f.bit));
    }
    p.flips.push_back(std::move(f));
  }
  if (p.k != p.flips.size()) {
    throw_data("plan: k=" + std::to_string(p.k) + " does not match " +
               std::to_string(p.flips.size()) + " flips");
  }
  return p;
}

FlipPlan load_plan_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open plan file '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return plan_from_json(text);
}

void save_plan_file(const FlipPlan& p, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write plan file '" + path.string() + "'");
  f << plan_to_json(p);
}

}  // namespace dnlkit::lesion
