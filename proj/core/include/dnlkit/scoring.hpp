#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "dnlkit/nnengine.hpp"
#include "dnlkit/tensorstore.hpp"

// Per-parameter saliency functions. Scores are computed only over a
// candidate set (first-L weights); every formula yields finite values >= 0.
namespace dnlkit::scoring {

enum class ScoreMethod { magnitude, hybrid, grasp, grasp_gn, synflow, obd };

std::string_view score_method_name(ScoreMethod m);
ScoreMethod score_method_from_name(std::string_view name);

struct ScoreTable {
  ScoreMethod method = ScoreMethod::magnitude;
  float alpha = 1.0f;
  float beta = 1.0f;
  std::vector<tensorstore::Candidate> candidates;  // canonical tie-break order
  std::vector<float> scores;                       // parallel to candidates
};

// S = |theta|
ScoreTable score_magnitude(std::vector<tensorstore::Candidate> cands);

// S = alpha*|theta| + beta*|theta*g + 0.5*theta^2*g^2|; the second-order
// term uses the diagonal Gauss-Newton surrogate H_ii = g_i^2.
ScoreTable score_hybrid(std::vector<tensorstore::Candidate> cands,
                        const nnengine::GradientSnapshot& g, float alpha = 1.0f,
                        float beta = 1.0f);

// Pruning-literature scoring family:
//   grasp     |theta * (Hg)|, needs the Hessian-vector product hv
//   grasp_gn  |theta * g^2 * g|   (Hg with H ~= diag(g^2))
//   synflow   |g * theta|
//   obd       0.5 * theta^2 * g^2
ScoreTable score_ablation(ScoreMethod kind,
                          std::vector<tensorstore::Candidate> cands,
                          const nnengine::GradientSnapshot& g,
                          const nnengine::GradientSnapshot* hv = nullptr);

// Candidate indices by descending score; equal scores keep candidate order
// (param layer ascending, tensor name, flat index ascending).
std::vector<std::size_t> descending_order(const ScoreTable& t);

// CSV columns: tensor,flat_index,layer,kernel,score,value
void write_score_csv(const ScoreTable& t, std::ostream& out);

}  // namespace dnlkit::scoring
