#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dnlkit/tensorstore.hpp"

// Minimal deterministic forward inference and reverse-mode gradients for
// small sequential convolutional classifiers. All accumulation is FP32 in a
// fixed loop order: identical bits in give identical bits out on one
// platform. Supported layers: conv2d, relu, maxpool2d, flatten, linear.
namespace dnlkit::nnengine {

// Monotone traversal counters. One forward() over one input is one forward
// traversal; one gradient accumulation over one input is one backward
// traversal.
struct PassCounters {
  std::atomic<std::uint64_t> forward{0};
  std::atomic<std::uint64_t> backward{0};
};

// Dot product in the engine's documented order: four interleaved lanes over
// ascending indices, lanes combined as (l0+l1)+(l2+l3), tail appended to
// lane 0, bias added last. Shared by the forward pass and by oracles that
// recompute single rows so both stay bit-identical.
inline float row_dot(const float* w, const float* x, int n, float bias) {
  float l0 = 0.0f, l1 = 0.0f, l2 = 0.0f, l3 = 0.0f;
  int c = 0;
  for (; c + 4 <= n; c += 4) {
    l0 += w[c] * x[c];
    l1 += w[c + 1] * x[c + 1];
    l2 += w[c + 2] * x[c + 2];
    l3 += w[c + 3] * x[c + 3];
  }
  for (; c < n; ++c) l0 += w[c] * x[c];
  return ((l0 + l1) + (l2 + l3)) + bias;
}

struct Dataset {
  std::vector<std::int64_t> input_shape;
  std::vector<std::vector<float>> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
};

struct Model {
  tensorstore::ModelManifest manifest;
  tensorstore::WeightArchive params;
  std::shared_ptr<PassCounters> counters;
};

// Validates the manifest against the archive and attaches fresh counters.
Model make_model(tensorstore::ModelManifest manifest,
                 tensorstore::WeightArchive params);

// Manifest resolved against one archive into flat float buffers, ready for
// repeated evaluation. The activation tape for one sample holds the network
// input followed by every layer output; layer i reads the floats at
// [input_offset[i], input_offset[i+1]) and writes its own output slot.
struct CompiledLayer {
  tensorstore::LayerKind kind;
  std::vector<float> weights;
  std::vector<float> bias;
  // conv2d / maxpool2d geometry (CHW)
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  int kh = 0, kw = 0, stride = 1, padding = 0;
  // linear geometry
  int in_features = 0, out_features = 0;

  int param_layer_index = 0;  // 0 when not parameterized
  std::string weight_tensor;
  std::string bias_tensor;

  std::size_t in_offset = 0;   // this layer's input position on the tape
  std::size_t out_offset = 0;  // this layer's output position on the tape
  std::size_t in_size = 0;
  std::size_t out_size = 0;
};

struct CompiledNet {
  std::vector<CompiledLayer> layers;
  std::size_t input_size = 0;
  std::size_t logit_count = 0;
  std::size_t tape_size = 0;

  static CompiledNet compile(const tensorstore::ModelManifest& m,
                             const tensorstore::WeightArchive& a);

  // Full forward, filling the whole tape (tape[0..input_size) must hold the
  // input on entry).
  void run(std::span<float> tape) const;
  // Recomputes layers [first_layer, end) assuming the tape is valid up to
  // first_layer's input.
  void run_from(std::size_t first_layer, std::span<float> tape) const;

  std::span<const float> logits(std::span<const float> tape) const {
    return tape.subspan(tape_size - logit_count, logit_count);
  }

  // Copies the (possibly updated) weight/bias buffers back into an archive.
  void write_back(tensorstore::WeightArchive& a) const;
};

// Per-tensor gradient buffers plus the activation-gradient tape, shaped to
// match one CompiledNet.
struct GradBuffers {
  std::vector<std::vector<float>> weight_grads;  // parallel to net.layers
  std::vector<std::vector<float>> bias_grads;
  std::vector<float> dtape;

  static GradBuffers zeros_like(const CompiledNet& net);
  void clear();
};

// Reverse-mode accumulation for one sample: tape holds the forward
// activations, dlogits the output cotangent. Weight/bias gradients add into
// the buffers.
void backward(const CompiledNet& net, std::span<const float> tape,
              std::span<const float> dlogits, GradBuffers& g);

// Deterministic: identical inputs give identical logits. Counts one forward
// traversal.
std::vector<float> forward(const Model& m, std::span<const float> input);

// Fraction of samples whose argmax logit equals the label; ties break toward
// the smallest class index. jobs = 0 means hardware concurrency.
double accuracy(const Model& m, const Dataset& data, int jobs = 0);

struct GradientSnapshot {
  // tensor name -> per-element dR/dtheta, weights and biases alike
  std::map<std::string, std::vector<float>> grads;

  float at(const tensorstore::ParamCoord& c) const;
  bool covers(const tensorstore::ParamCoord& c) const;
};

// The standard-normal probe input for grad_sum_logits: element j of batch
// sample b comes from philox::Stream(seed, stream = b), deviate j.
std::vector<float> gaussian_input(const std::vector<std::int64_t>& shape,
                                  std::uint64_t seed, std::uint64_t sample = 0);

// dR/dtheta for R = sum of all output logits on `batch` seeded Gaussian
// inputs (summed over the batch). Performs exactly `batch` forward and
// `batch` backward traversals; the default batch of 1 is the single-pass
// budget.
GradientSnapshot grad_sum_logits(const Model& m, std::uint64_t seed,
                                 int batch = 1);

// Gradient plus a Hessian-vector product Hg approximated by a forward
// difference of gradients at the same probe input:
//   Hg ~= (grad(theta + eps*g) - grad(theta)) / eps,
// eps = 1e-3 / max(1, max_i |g_i|). Costs one extra forward+backward pair on
// top of grad_sum_logits.
struct GradAndHvp {
  GradientSnapshot grad;
  GradientSnapshot hvp;
};
GradAndHvp grad_and_hvp_sum_logits(const Model& m, std::uint64_t seed);

}  // namespace dnlkit::nnengine
