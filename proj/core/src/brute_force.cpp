#include <algorithm>
#include <atomic>
#include <cstring>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "dnlkit/bench.hpp"
#include "dnlkit/bitkit.hpp"

// Exhaustive single-flip oracle. Evaluation avoids full forward passes where
// a shortcut is provably bit-exact against recomputing from the flipped
// layer: a flipped linear row only changes that row's pre-activation, and an
// unchanged ReLU output leaves every downstream bit unchanged.
namespace dnlkit::bench {

using nnengine::CompiledNet;
using nnengine::row_dot;
using tensorstore::LayerKind;

namespace {

inline float nn_row_dot(const float* w, const float* x, int n, float bias) {
  return row_dot(w, x, n, bias);
}

int argmax_smallest(const float* v, std::size_t n) {
  int best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

struct OracleContext {
  const CompiledNet* net = nullptr;
  const nnengine::Dataset* data = nullptr;
  std::vector<std::vector<float>> tapes;  // cached pristine activations
  std::vector<int> base_pred;
  double acc0 = 0.0;
};

// Number of samples predicted correctly after flipping the sign of weight
// `flat` in layer `li` of `net` (a thread-private copy).
std::size_t eval_flip(OracleContext& ctx, CompiledNet& net, std::size_t li,
                      std::uint64_t flat, std::vector<float>& scratch,
                      std::vector<float>& hbuf) {
  const auto& layers = net.layers;
  auto& layer = net.layers[li];
  const float orig = layer.weights[flat];
  const float flipped = bitkit::flip_sign(orig);
  const std::size_t n = ctx.data->size();
  const std::size_t logits_at = net.tape_size - net.logit_count;
  std::size_t correct = 0;

  const bool is_last_linear =
      layer.kind == LayerKind::linear && li + 1 == layers.size();
  const bool is_linear_relu_linear =
      layer.kind == LayerKind::linear && li + 3 == layers.size() &&
      layers[li + 1].kind == LayerKind::relu &&
      layers[li + 2].kind == LayerKind::linear;

  if (is_last_linear || is_linear_relu_linear) {
    const int r = static_cast<int>(flat / layer.in_features);
    const int cols = layer.in_features;
    // A private copy of the affected row with the flipped value, so the
    // shared row_dot reproduces the full forward bit-for-bit.
    std::vector<float> wrow(
        layer.weights.begin() + static_cast<std::ptrdiff_t>(r) * cols,
        layer.weights.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
    wrow[flat % cols] = flipped;
    const float bias_r = layer.bias.empty() ? 0.0f : layer.bias[r];

    if (is_last_linear) {
      for (std::size_t s = 0; s < n; ++s) {
        const float* tape = ctx.tapes[s].data();
        const float* x = tape + layer.in_offset;
        std::memcpy(hbuf.data(), tape + logits_at, net.logit_count * sizeof(float));
        hbuf[r] = nn_row_dot(wrow.data(), x, cols, bias_r);
        if (argmax_smallest(hbuf.data(), net.logit_count) == ctx.data->labels[s]) {
          ++correct;
        }
      }
      return correct;
    }

    const auto& relu = layers[li + 1];
    const auto& head = layers[li + 2];
    std::vector<float> hpatched(head.in_features, 0.0f);
    for (std::size_t s = 0; s < n; ++s) {
      const float* tape = ctx.tapes[s].data();
      const float* x = tape + layer.in_offset;
      const float pre = nn_row_dot(wrow.data(), x, cols, bias_r);
      const float h_new = pre > 0.0f ? pre : 0.0f;
      const float h_old = tape[relu.out_offset + static_cast<std::size_t>(r)];
      if (h_new == h_old) {
        // Downstream bits are untouched: the cached prediction stands.
        if (ctx.base_pred[s] == ctx.data->labels[s]) ++correct;
        continue;
      }
      const float* h = tape + relu.out_offset;
      std::memcpy(hpatched.data(), h, hpatched.size() * sizeof(float));
      hpatched[r] = h_new;
      for (int c = 0; c < head.out_features; ++c) {
        const float* w2 = head.weights.data() +
                          static_cast<std::size_t>(c) * head.in_features;
        hbuf[c] = nn_row_dot(w2, hpatched.data(), head.in_features,
                             head.bias.empty() ? 0.0f : head.bias[c]);
      }
      if (argmax_smallest(hbuf.data(), net.logit_count) == ctx.data->labels[s]) {
        ++correct;
      }
    }
    return correct;
  }

  // Generic path: flip in place, recompute the suffix from the cached input
  // of this layer.
  layer.weights[flat] = flipped;
  for (std::size_t s = 0; s < n; ++s) {
    const float* tape = ctx.tapes[s].data();
    std::memcpy(scratch.data() + layer.in_offset, tape + layer.in_offset,
                layer.in_size * sizeof(float));
    net.run_from(li, scratch);
    if (argmax_smallest(scratch.data() + logits_at, net.logit_count) ==
        ctx.data->labels[s]) {
      ++correct;
    }
  }
  layer.weights[flat] = orig;
  return correct;
}

}  // namespace

std::vector<RankedFlip> brute_force_single_flip(const nnengine::Model& model,
                                                const nnengine::Dataset& data,
                                                int L, int jobs) {
  const auto cands = tensorstore::candidate_params(model.manifest, model.params, L);
  if (cands.size() > kBruteForceGuard) {
    throw_precondition("brute_force_single_flip: " + std::to_string(cands.size()) +
                       " candidates exceed the guard of " +
                       std::to_string(kBruteForceGuard));
  }
  if (data.size() == 0) throw_precondition("brute_force_single_flip: empty dataset");

  OracleContext ctx;
  const CompiledNet net = CompiledNet::compile(model.manifest, model.params);
  ctx.net = &net;
  ctx.data = &data;

  std::unordered_map<std::string, std::size_t> layer_of;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].weight_tensor.empty()) {
      layer_of[net.layers[i].weight_tensor] = i;
    }
  }

  const std::size_t n = data.size();
  ctx.tapes.assign(n, std::vector<float>(net.tape_size, 0.0f));
  ctx.base_pred.assign(n, 0);
  std::size_t base_correct = 0;
  const std::size_t logits_at = net.tape_size - net.logit_count;
  for (std::size_t s = 0; s < n; ++s) {
    auto& tape = ctx.tapes[s];
    std::copy(data.inputs[s].begin(), data.inputs[s].end(), tape.begin());
    net.run(tape);
    ctx.base_pred[s] = argmax_smallest(tape.data() + logits_at, net.logit_count);
    if (ctx.base_pred[s] == data.labels[s]) ++base_correct;
  }
  model.counters->forward.fetch_add(n, std::memory_order_relaxed);
  ctx.acc0 = static_cast<double>(base_correct) / static_cast<double>(n);
  if (!(ctx.acc0 > 0.0)) {
    throw_precondition("brute_force_single_flip: baseline accuracy is zero");
  }

  std::vector<double> ar1(cands.size(), 0.0);
  const unsigned n_threads = std::min<unsigned>(
      jobs > 0 ? static_cast<unsigned>(jobs)
               : std::max(1u, std::thread::hardware_concurrency()),
      std::max<std::size_t>(1, cands.size()));

  std::atomic<std::size_t> next{0};
  constexpr std::size_t kGrain = 64;
  auto worker = [&]() {
    CompiledNet local = net;
    std::vector<float> scratch(net.tape_size, 0.0f);
    std::vector<float> hbuf(std::max<std::size_t>(net.logit_count, 1), 0.0f);
    for (;;) {
      const std::size_t begin = next.fetch_add(kGrain);
      if (begin >= cands.size()) break;
      const std::size_t end = std::min(cands.size(), begin + kGrain);
      for (std::size_t ci = begin; ci < end; ++ci) {
        const auto& c = cands[ci];
        const std::size_t li = layer_of.at(c.coord.tensor);
        const std::size_t correct =
            eval_flip(ctx, local, li, c.coord.flat_index, scratch, hbuf);
        const double acc = static_cast<double>(correct) / static_cast<double>(n);
        ar1[ci] = (ctx.acc0 - acc) / ctx.acc0;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ar1[a] > ar1[b]; });

  std::vector<RankedFlip> table;
  table.reserve(cands.size());
  for (auto i : order) table.push_back(RankedFlip{cands[i].coord, ar1[i]});
  return table;
}

}  // namespace dnlkit::bench
