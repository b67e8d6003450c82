#include "dnlkit/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace dnlkit::scoring {

std::string_view score_method_name(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::magnitude: return "magnitude";
    case ScoreMethod::hybrid: return "hybrid";
    case ScoreMethod::grasp: return "grasp";
    case ScoreMethod::grasp_gn: return "grasp_gn";
    case ScoreMethod::synflow: return "synflow";
    case ScoreMethod::obd: return "obd";
  }
  return "?";
}

ScoreMethod score_method_from_name(std::string_view name) {
  if (name == "magnitude") return ScoreMethod::magnitude;
  if (name == "hybrid") return ScoreMethod::hybrid;
  if (name == "grasp") return ScoreMethod::grasp;
  if (name == "grasp_gn") return ScoreMethod::grasp_gn;
  if (name == "synflow") return ScoreMethod::synflow;
  if (name == "obd") return ScoreMethod::obd;
  throw_config("unknown score method '" + std::string(name) + "'");
}

ScoreTable score_magnitude(std::vector<tensorstore::Candidate> cands) {
  ScoreTable t;
  t.method = ScoreMethod::magnitude;
  t.scores.reserve(cands.size());
  for (const auto& c : cands) t.scores.push_back(std::fabs(c.value));
  t.candidates = std::move(cands);
  return t;
}

ScoreTable score_hybrid(std::vector<tensorstore::Candidate> cands,
                        const nnengine::GradientSnapshot& g, float alpha,
                        float beta) {
  ScoreTable t;
  t.method = ScoreMethod::hybrid;
  t.alpha = alpha;
  t.beta = beta;
  t.scores.reserve(cands.size());
  for (const auto& c : cands) {
    const float gi = g.at(c.coord);  // throws when not covered
    const float theta = c.value;
    const float second = theta * gi + 0.5f * theta * theta * gi * gi;
    t.scores.push_back(alpha * std::fabs(theta) + beta * std::fabs(second));
  }
  t.candidates = std::move(cands);
  return t;
}

ScoreTable score_ablation(ScoreMethod kind,
                          std::vector<tensorstore::Candidate> cands,
                          const nnengine::GradientSnapshot& g,
                          const nnengine::GradientSnapshot* hv) {
  if (kind == ScoreMethod::magnitude || kind == ScoreMethod::hybrid) {
    throw_precondition("score_ablation: use score_magnitude / score_hybrid");
  }
  if (kind == ScoreMethod::grasp && hv == nullptr) {
    throw_precondition("score_ablation: grasp needs a Hessian-vector product");
  }

  ScoreTable t;
  t.method = kind;
  t.scores.reserve(cands.size());
  for (const auto& c : cands) {
    const float theta = c.value;
    const float gi = g.at(c.coord);
    float s = 0.0f;
    switch (kind) {
      case ScoreMethod::grasp:
        s = std::fabs(theta * hv->at(c.coord));
        break;
      case ScoreMethod::grasp_gn:
        s = std::fabs(theta * gi * gi * gi);
        break;
      case ScoreMethod::synflow:
        s = std::fabs(gi * theta);
        break;
      case ScoreMethod::obd:
        s = 0.5f * theta * theta * gi * gi;
        break;
      default:
        break;
    }
    t.scores.push_back(s);
  }
  t.candidates = std::move(cands);
  return t;
}

std::vector<std::size_t> descending_order(const ScoreTable& t) {
  std::vector<std::size_t> order(t.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return t.scores[a] > t.scores[b];
  });
  return order;
}

void write_score_csv(const ScoreTable& t, std::ostream& out) {
  out << "tensor,flat_index,layer,kernel,score,value\n";
  char buf[128];
  for (std::size_t i = 0; i < t.candidates.size(); ++i) {
    const auto& c = t.candidates[i];
    std::snprintf(buf, sizeof(buf), "%s,%llu,%d,%llu,%.9g,%.9g\n",
                  c.coord.tensor.c_str(),
                  static_cast<unsigned long long>(c.coord.flat_index),
                  c.kernel.param_layer_index,
                  static_cast<unsigned long long>(c.kernel.kernel_index),
                  static_cast<double>(t.scores[i]), static_cast<double>(c.value));
    out << buf;
  }
}

}  // namespace dnlkit::scoring
