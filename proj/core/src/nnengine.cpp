#include "dnlkit/nnengine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

#include "dnlkit/philox.hpp"

namespace dnlkit::nnengine {

using tensorstore::LayerKind;

Model make_model(tensorstore::ModelManifest manifest,
                 tensorstore::WeightArchive params) {
  tensorstore::validate(manifest, params);
  return Model{std::move(manifest), std::move(params),
               std::make_shared<PassCounters>()};
}

CompiledNet CompiledNet::compile(const tensorstore::ModelManifest& m,
                                 const tensorstore::WeightArchive& a) {
  tensorstore::validate(m, a);

  CompiledNet net;
  int c = 0, h = 0, w = 0;
  std::size_t flat = 0;
  bool spatial = m.input_shape.size() == 3;
  if (spatial) {
    c = static_cast<int>(m.input_shape[0]);
    h = static_cast<int>(m.input_shape[1]);
    w = static_cast<int>(m.input_shape[2]);
    net.input_size = static_cast<std::size_t>(c) * h * w;
  } else {
    flat = static_cast<std::size_t>(m.input_shape[0]);
    net.input_size = flat;
  }

  std::size_t offset = 0;
  std::size_t in_size = net.input_size;
  for (const auto& spec : m.layers) {
    CompiledLayer l;
    l.kind = spec.kind;
    l.param_layer_index = spec.param_layer_index.value_or(0);
    l.in_offset = offset;
    l.in_size = in_size;

    switch (spec.kind) {
      case LayerKind::conv2d: {
        const auto& wt = a.tensor(*spec.weight_tensor);
        l.weight_tensor = *spec.weight_tensor;
        l.in_c = c;
        l.in_h = h;
        l.in_w = w;
        l.out_c = static_cast<int>(wt.shape[0]);
        l.kh = static_cast<int>(wt.shape[2]);
        l.kw = static_cast<int>(wt.shape[3]);
        l.stride = spec.stride;
        l.padding = spec.padding;
        l.out_h = (h + 2 * l.padding - l.kh) / l.stride + 1;
        l.out_w = (w + 2 * l.padding - l.kw) / l.stride + 1;
        l.weights.resize(wt.numel());
        std::memcpy(l.weights.data(), wt.words.data(), wt.numel() * 4);
        if (spec.bias_tensor) {
          const auto& bt = a.tensor(*spec.bias_tensor);
          l.bias_tensor = *spec.bias_tensor;
          l.bias.resize(bt.numel());
          std::memcpy(l.bias.data(), bt.words.data(), bt.numel() * 4);
        }
        c = l.out_c;
        h = l.out_h;
        w = l.out_w;
        l.out_size = static_cast<std::size_t>(c) * h * w;
        break;
      }
      case LayerKind::linear: {
        const auto& wt = a.tensor(*spec.weight_tensor);
        l.weight_tensor = *spec.weight_tensor;
        l.out_features = static_cast<int>(wt.shape[0]);
        l.in_features = static_cast<int>(wt.shape[1]);
        l.weights.resize(wt.numel());
        std::memcpy(l.weights.data(), wt.words.data(), wt.numel() * 4);
        if (spec.bias_tensor) {
          const auto& bt = a.tensor(*spec.bias_tensor);
          l.bias_tensor = *spec.bias_tensor;
          l.bias.resize(bt.numel());
          std::memcpy(l.bias.data(), bt.words.data(), bt.numel() * 4);
        }
        flat = static_cast<std::size_t>(l.out_features);
        l.out_size = flat;
        break;
      }
      case LayerKind::relu: {
        l.out_size = in_size;
        break;
      }
      case LayerKind::maxpool2d: {
        l.in_c = c;
        l.in_h = h;
        l.in_w = w;
        l.kh = l.kw = spec.pool;
        l.stride = spec.stride;
        l.out_c = c;
        l.out_h = (h - spec.pool) / spec.stride + 1;
        l.out_w = (w - spec.pool) / spec.stride + 1;
        h = l.out_h;
        w = l.out_w;
        l.out_size = static_cast<std::size_t>(c) * h * w;
        break;
      }
      case LayerKind::flatten: {
        flat = static_cast<std::size_t>(c) * h * w;
        spatial = false;
        l.out_size = flat;
        break;
      }
    }

    offset += in_size;
    l.out_offset = offset;
    in_size = l.out_size;
    net.layers.push_back(std::move(l));
  }

  net.logit_count = in_size;
  net.tape_size = offset + in_size;
  return net;
}

namespace {

// Patch-matrix convolution: gather the receptive fields once, then
// accumulate one kernel position at a time across the whole output plane.
// Every output element still receives its (ic, ky, kx) contributions in
// ascending order, the documented order; out-of-bounds taps contribute a
// zero product.
void conv_forward(const CompiledLayer& l, const float* in, float* out) {
  const int oh = l.out_h, ow = l.out_w, ih = l.in_h, iw = l.in_w;
  const int plane = oh * ow;
  const int taps = l.in_c * l.kh * l.kw;

  thread_local std::vector<float> col;
  col.assign(static_cast<std::size_t>(taps) * plane, 0.0f);

  float* c = col.data();
  for (int ic = 0; ic < l.in_c; ++ic) {
    const float* in_c = in + static_cast<std::size_t>(ic) * ih * iw;
    for (int ky = 0; ky < l.kh; ++ky) {
      for (int kx = 0; kx < l.kw; ++kx, c += plane) {
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= ih) continue;
          float* crow = c + static_cast<std::size_t>(oy) * ow;
          const float* irow = in_c + static_cast<std::size_t>(iy) * iw;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix >= 0 && ix < iw) crow[ox] = irow[ix];
          }
        }
      }
    }
  }

  for (int oc = 0; oc < l.out_c; ++oc) {
    float* __restrict out_c = out + static_cast<std::size_t>(oc) * plane;
    const float b = l.bias.empty() ? 0.0f : l.bias[oc];
    std::fill(out_c, out_c + plane, b);
    const float* w_oc = l.weights.data() + static_cast<std::size_t>(oc) * taps;
    const float* __restrict ck = col.data();
    for (int k = 0; k < taps; ++k, ck += plane) {
      const float wv = w_oc[k];
      for (int p = 0; p < plane; ++p) out_c[p] += wv * ck[p];
    }
  }
}

void maxpool_forward(const CompiledLayer& l, const float* in, float* out) {
  const std::size_t in_plane = static_cast<std::size_t>(l.in_h) * l.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(l.out_h) * l.out_w;
  for (int ch = 0; ch < l.in_c; ++ch) {
    const float* in_c = in + ch * in_plane;
    float* out_c = out + ch * out_plane;
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        const int iy0 = oy * l.stride;
        const int ix0 = ox * l.stride;
        float best = in_c[iy0 * l.in_w + ix0];
        for (int ky = 0; ky < l.kh; ++ky) {
          for (int kx = 0; kx < l.kw; ++kx) {
            const float v = in_c[(iy0 + ky) * l.in_w + ix0 + kx];
            if (v > best) best = v;
          }
        }
        out_c[oy * l.out_w + ox] = best;
      }
    }
  }
}

void linear_forward(const CompiledLayer& l, const float* in, float* out) {
  for (int r = 0; r < l.out_features; ++r) {
    const float* w_row = l.weights.data() + static_cast<std::size_t>(r) * l.in_features;
    out[r] = row_dot(w_row, in, l.in_features, l.bias.empty() ? 0.0f : l.bias[r]);
  }
}

}  // namespace

void CompiledNet::run_from(std::size_t first_layer, std::span<float> tape) const {
  for (std::size_t li = first_layer; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const float* in = tape.data() + l.in_offset;
    float* out = tape.data() + l.out_offset;
    switch (l.kind) {
      case LayerKind::conv2d:
        conv_forward(l, in, out);
        break;
      case LayerKind::linear:
        linear_forward(l, in, out);
        break;
      case LayerKind::relu:
        for (std::size_t i = 0; i < l.in_size; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
        break;
      case LayerKind::maxpool2d:
        maxpool_forward(l, in, out);
        break;
      case LayerKind::flatten:
        std::memcpy(out, in, l.in_size * sizeof(float));
        break;
    }
  }
}

void CompiledNet::run(std::span<float> tape) const { run_from(0, tape); }

void CompiledNet::write_back(tensorstore::WeightArchive& a) const {
  for (const auto& l : layers) {
    if (!l.weight_tensor.empty()) {
      auto& t = a.tensor(l.weight_tensor);
      std::memcpy(t.words.data(), l.weights.data(), l.weights.size() * 4);
    }
    if (!l.bias_tensor.empty()) {
      auto& t = a.tensor(l.bias_tensor);
      std::memcpy(t.words.data(), l.bias.data(), l.bias.size() * 4);
    }
  }
}

GradBuffers GradBuffers::zeros_like(const CompiledNet& net) {
  GradBuffers g;
  g.weight_grads.resize(net.layers.size());
  g.bias_grads.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    g.weight_grads[i].assign(net.layers[i].weights.size(), 0.0f);
    g.bias_grads[i].assign(net.layers[i].bias.size(), 0.0f);
  }
  g.dtape.assign(net.tape_size, 0.0f);
  return g;
}

void GradBuffers::clear() {
  for (auto& v : weight_grads) std::fill(v.begin(), v.end(), 0.0f);
  for (auto& v : bias_grads) std::fill(v.begin(), v.end(), 0.0f);
  std::fill(dtape.begin(), dtape.end(), 0.0f);
}

namespace {

void conv_backward(const CompiledLayer& l, const float* in, const float* dout,
                   float* din, float* dw, float* db) {
  const int oh = l.out_h, ow = l.out_w, ih = l.in_h, iw = l.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_plane = static_cast<std::size_t>(ih) * iw;

  if (db != nullptr) {
    for (int oc = 0; oc < l.out_c; ++oc) {
      const float* dout_c = dout + oc * out_plane;
      float acc = 0.0f;
      for (std::size_t i = 0; i < out_plane; ++i) acc += dout_c[i];
      db[oc] += acc;
    }
  }

  for (int oc = 0; oc < l.out_c; ++oc) {
    const float* dout_c = dout + oc * out_plane;
    for (int ic = 0; ic < l.in_c; ++ic) {
      const float* in_c = in + ic * in_plane;
      float* din_c = din + ic * in_plane;
      const std::size_t w_base =
          (static_cast<std::size_t>(oc) * l.in_c + ic) * l.kh * l.kw;
      for (int ky = 0; ky < l.kh; ++ky) {
        for (int kx = 0; kx < l.kw; ++kx) {
          const float wv = l.weights[w_base + ky * l.kw + kx];
          float wacc = 0.0f;
          int ox_lo = 0;
          while (ox_lo < ow && ox_lo * l.stride - l.padding + kx < 0) ++ox_lo;
          int ox_hi = ow;
          while (ox_hi > ox_lo && (ox_hi - 1) * l.stride - l.padding + kx >= iw) --ox_hi;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * l.stride - l.padding + ky;
            if (iy < 0 || iy >= ih) continue;
            const float* in_row = in_c + static_cast<std::size_t>(iy) * iw;
            float* din_row = din_c + static_cast<std::size_t>(iy) * iw;
            const float* dout_row = dout_c + static_cast<std::size_t>(oy) * ow;
            const int base = kx - l.padding;
            for (int ox = ox_lo; ox < ox_hi; ++ox) {
              const int ix = ox * l.stride + base;
              wacc += dout_row[ox] * in_row[ix];
              din_row[ix] += wv * dout_row[ox];
            }
          }
          dw[w_base + ky * l.kw + kx] += wacc;
        }
      }
    }
  }
}

void maxpool_backward(const CompiledLayer& l, const float* in, const float* dout,
                      float* din) {
  const std::size_t in_plane = static_cast<std::size_t>(l.in_h) * l.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(l.out_h) * l.out_w;
  for (int ch = 0; ch < l.in_c; ++ch) {
    const float* in_c = in + ch * in_plane;
    const float* dout_c = dout + ch * out_plane;
    float* din_c = din + ch * in_plane;
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        const int iy0 = oy * l.stride;
        const int ix0 = ox * l.stride;
        // Gradient routes to the first maximum in scan order.
        int best_idx = iy0 * l.in_w + ix0;
        float best = in_c[best_idx];
        for (int ky = 0; ky < l.kh; ++ky) {
          for (int kx = 0; kx < l.kw; ++kx) {
            const int idx = (iy0 + ky) * l.in_w + ix0 + kx;
            if (in_c[idx] > best) {
              best = in_c[idx];
              best_idx = idx;
            }
          }
        }
        din_c[best_idx] += dout_c[oy * l.out_w + ox];
      }
    }
  }
}

void linear_backward(const CompiledLayer& l, const float* in, const float* dout,
                     float* din, float* dw, float* db) {
  for (int r = 0; r < l.out_features; ++r) {
    const float dy = dout[r];
    if (db != nullptr) db[r] += dy;
    float* dw_row = dw + static_cast<std::size_t>(r) * l.in_features;
    const float* w_row = l.weights.data() + static_cast<std::size_t>(r) * l.in_features;
    for (int col = 0; col < l.in_features; ++col) {
      dw_row[col] += dy * in[col];
      din[col] += dy * w_row[col];
    }
  }
}

}  // namespace

void backward(const CompiledNet& net, std::span<const float> tape,
              std::span<const float> dlogits, GradBuffers& g) {
  std::fill(g.dtape.begin(), g.dtape.end(), 0.0f);
  std::copy(dlogits.begin(), dlogits.end(),
            g.dtape.begin() + static_cast<std::ptrdiff_t>(net.tape_size - net.logit_count));

  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& l = net.layers[li];
    const float* in = tape.data() + l.in_offset;
    const float* dout = g.dtape.data() + l.out_offset;
    float* din = g.dtape.data() + l.in_offset;
    switch (l.kind) {
      case LayerKind::conv2d:
        conv_backward(l, in, dout, din, g.weight_grads[li].data(),
                      l.bias.empty() ? nullptr : g.bias_grads[li].data());
        break;
      case LayerKind::linear:
        linear_backward(l, in, dout, din, g.weight_grads[li].data(),
                        l.bias.empty() ? nullptr : g.bias_grads[li].data());
        break;
      case LayerKind::relu:
        for (std::size_t i = 0; i < l.in_size; ++i) {
          din[i] += in[i] > 0.0f ? dout[i] : 0.0f;
        }
        break;
      case LayerKind::maxpool2d:
        maxpool_backward(l, in, dout, din);
        break;
      case LayerKind::flatten:
        for (std::size_t i = 0; i < l.in_size; ++i) din[i] += dout[i];
        break;
    }
  }
}

std::vector<float> forward(const Model& m, std::span<const float> input) {
  const CompiledNet net = CompiledNet::compile(m.manifest, m.params);
  if (input.size() != net.input_size) {
    throw_precondition("forward: input has " + std::to_string(input.size()) +
                       " values, model expects " + std::to_string(net.input_size));
  }
  std::vector<float> tape(net.tape_size, 0.0f);
  std::copy(input.begin(), input.end(), tape.begin());
  net.run(tape);
  m.counters->forward.fetch_add(1, std::memory_order_relaxed);
  const auto lg = net.logits(tape);
  return {lg.begin(), lg.end()};
}

namespace {

int argmax_smallest(std::span<const float> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

double accuracy(const Model& m, const Dataset& data, int jobs) {
  if (data.size() == 0) throw_precondition("accuracy: empty dataset");
  const CompiledNet net = CompiledNet::compile(m.manifest, m.params);

  unsigned n_threads = jobs > 0 ? static_cast<unsigned>(jobs)
                                : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, data.size());

  std::vector<std::uint64_t> correct(n_threads, 0);
  auto worker = [&](unsigned t) {
    std::vector<float> tape(net.tape_size, 0.0f);
    for (std::size_t i = t; i < data.size(); i += n_threads) {
      const auto& x = data.inputs[i];
      std::copy(x.begin(), x.end(), tape.begin());
      net.run(tape);
      if (argmax_smallest(net.logits(tape)) == data.labels[i]) ++correct[t];
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  m.counters->forward.fetch_add(data.size(), std::memory_order_relaxed);

  std::uint64_t total = 0;
  for (auto v : correct) total += v;
  return static_cast<double>(total) / static_cast<double>(data.size());
}

float GradientSnapshot::at(const tensorstore::ParamCoord& c) const {
  auto it = grads.find(c.tensor);
  if (it == grads.end() || c.flat_index >= it->second.size()) {
    throw_precondition("gradient snapshot does not cover " + c.tensor + "[" +
                       std::to_string(c.flat_index) + "]");
  }
  return it->second[c.flat_index];
}

bool GradientSnapshot::covers(const tensorstore::ParamCoord& c) const {
  auto it = grads.find(c.tensor);
  return it != grads.end() && c.flat_index < it->second.size();
}

std::vector<float> gaussian_input(const std::vector<std::int64_t>& shape,
                                  std::uint64_t seed, std::uint64_t sample) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= static_cast<std::uint64_t>(d);
  philox::Stream rng(seed, sample);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.gaussian());
  return x;
}

namespace {

GradientSnapshot snapshot_from(const CompiledNet& net, const GradBuffers& g) {
  GradientSnapshot snap;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& l = net.layers[li];
    if (!l.weight_tensor.empty()) snap.grads[l.weight_tensor] = g.weight_grads[li];
    if (!l.bias_tensor.empty()) snap.grads[l.bias_tensor] = g.bias_grads[li];
  }
  return snap;
}

void accumulate_sum_logits_grad(const Model& m, const CompiledNet& net,
                                std::uint64_t seed, int batch, GradBuffers& g) {
  std::vector<float> tape(net.tape_size, 0.0f);
  const std::vector<float> ones(net.logit_count, 1.0f);
  for (int b = 0; b < batch; ++b) {
    const auto x = gaussian_input(m.manifest.input_shape, seed,
                                  static_cast<std::uint64_t>(b));
    std::copy(x.begin(), x.end(), tape.begin());
    net.run(tape);
    m.counters->forward.fetch_add(1, std::memory_order_relaxed);
    backward(net, tape, ones, g);
    m.counters->backward.fetch_add(1, std::memory_order_relaxed);
  }
}

}  // namespace

GradientSnapshot grad_sum_logits(const Model& m, std::uint64_t seed, int batch) {
  if (batch < 1) throw_precondition("grad_sum_logits: batch must be >= 1");
  const CompiledNet net = CompiledNet::compile(m.manifest, m.params);
  GradBuffers g = GradBuffers::zeros_like(net);
  accumulate_sum_logits_grad(m, net, seed, batch, g);
  return snapshot_from(net, g);
}

GradAndHvp grad_and_hvp_sum_logits(const Model& m, std::uint64_t seed) {
  CompiledNet net = CompiledNet::compile(m.manifest, m.params);
  GradBuffers g = GradBuffers::zeros_like(net);
  accumulate_sum_logits_grad(m, net, seed, 1, g);

  float ginf = 0.0f;
  for (const auto& v : g.weight_grads)
    for (float x : v) ginf = std::max(ginf, std::fabs(x));
  for (const auto& v : g.bias_grads)
    for (float x : v) ginf = std::max(ginf, std::fabs(x));
  const float eps = 1e-3f / std::max(1.0f, ginf);

  CompiledNet shifted = net;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    for (std::size_t i = 0; i < shifted.layers[li].weights.size(); ++i) {
      shifted.layers[li].weights[i] += eps * g.weight_grads[li][i];
    }
    for (std::size_t i = 0; i < shifted.layers[li].bias.size(); ++i) {
      shifted.layers[li].bias[i] += eps * g.bias_grads[li][i];
    }
  }
  GradBuffers g2 = GradBuffers::zeros_like(shifted);
  accumulate_sum_logits_grad(m, shifted, seed, 1, g2);

  GradBuffers hv = GradBuffers::zeros_like(net);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    for (std::size_t i = 0; i < hv.weight_grads[li].size(); ++i) {
      hv.weight_grads[li][i] =
          (g2.weight_grads[li][i] - g.weight_grads[li][i]) / eps;
    }
    for (std::size_t i = 0; i < hv.bias_grads[li].size(); ++i) {
      hv.bias_grads[li][i] = (g2.bias_grads[li][i] - g.bias_grads[li][i]) / eps;
    }
  }
  return GradAndHvp{snapshot_from(net, g), snapshot_from(net, hv)};
}

}  // namespace dnlkit::nnengine
