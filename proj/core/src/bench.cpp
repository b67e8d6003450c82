#include "dnlkit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dnlkit/lesion.hpp"
#include "dnlkit/philox.hpp"

namespace dnlkit::bench {

using nnengine::Dataset;
using nnengine::Model;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDatasetNoiseStream = std::uint64_t{1} << 32;
constexpr std::uint64_t kInitStream = std::uint64_t{2} << 32;
constexpr std::uint64_t kShuffleStream = std::uint64_t{3} << 32;

// Class pattern recipes on the [0, size) x [0, size) grid, base value in
// {0, 1}: stripes in four orientations, disk, ring, two checker phases.
float pattern_value(int cls, int x, int y, int size) {
  const float cx = (size - 1) / 2.0f;
  const float cy = (size - 1) / 2.0f;
  const float dx = x - cx;
  const float dy = y - cy;
  const float r2 = dx * dx + dy * dy;
  const float disk = (size / 4.0f) * (size / 4.0f);
  const float ring_out = (size / 2.5f) * (size / 2.5f);
  switch (cls) {
    case 0: return (y / 2) % 2 == 0 ? 1.0f : 0.0f;            // horizontal bars
    case 1: return (x / 2) % 2 == 0 ? 1.0f : 0.0f;            // vertical bars
    case 2: return ((x + y) / 2) % 2 == 0 ? 1.0f : 0.0f;      // diagonal stripes
    case 3: return ((x - y + 2 * size) / 2) % 2 == 0 ? 1.0f : 0.0f;  // anti-diagonal
    case 4: return r2 <= disk ? 1.0f : 0.0f;                  // centered disk
    case 5: return (r2 > disk && r2 <= ring_out) ? 1.0f : 0.0f;  // ring
    case 6: return ((x / 4) + (y / 4)) % 2 == 0 ? 1.0f : 0.0f;   // checker phase 0
    case 7: return ((x / 4) + (y / 4)) % 2 == 1 ? 1.0f : 0.0f;   // checker phase 1
    default: return 0.0f;
  }
}

}  // namespace

SyntheticDatasetSpec dataset_spec_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw_data(std::string("dataset spec: not valid JSON: ") + e.what());
  }
  SyntheticDatasetSpec s;
  s.classes = j.value("classes", s.classes);
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.image_size = j.value("image_size", s.image_size);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::string dataset_spec_to_json(const SyntheticDatasetSpec& spec) {
  ordered_json j = ordered_json::object();
  j["classes"] = spec.classes;
  j["samples_per_class"] = spec.samples_per_class;
  j["image_size"] = spec.image_size;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

SyntheticDatasetSpec load_dataset_spec_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open dataset spec '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return dataset_spec_from_json(text);
}

void save_dataset_spec_file(const SyntheticDatasetSpec& spec,
                            const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write dataset spec '" + path.string() + "'");
  f << dataset_spec_to_json(spec);
}

nnengine::Dataset gen_dataset(const SyntheticDatasetSpec& spec) {
  if (spec.classes < 2) throw_precondition("gen_dataset: need at least 2 classes");
  if (spec.classes > kPatternRecipes) {
    throw_precondition("gen_dataset: only " + std::to_string(kPatternRecipes) +
                       " pattern recipes, got " + std::to_string(spec.classes) +
                       " classes");
  }
  if (spec.samples_per_class < 1 || spec.image_size < 4) {
    throw_precondition("gen_dataset: degenerate spec");
  }

  const int s = spec.image_size;
  Dataset d;
  d.input_shape = {1, s, s};
  d.inputs.reserve(static_cast<std::size_t>(spec.classes) * spec.samples_per_class);
  d.labels.reserve(d.inputs.capacity());

  for (int cls = 0; cls < spec.classes; ++cls) {
    for (int i = 0; i < spec.samples_per_class; ++i) {
      const std::uint64_t global =
          static_cast<std::uint64_t>(cls) * spec.samples_per_class + i;
      philox::Stream noise(spec.seed, kDatasetNoiseStream | global);
      std::vector<float> img(static_cast<std::size_t>(s) * s);
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          float v = pattern_value(cls, x, y, s);
          if (spec.noise_sigma > 0.0f) {
            v += spec.noise_sigma * static_cast<float>(noise.gaussian());
          }
          img[static_cast<std::size_t>(y) * s + x] = v;
        }
      }
      d.inputs.push_back(std::move(img));
      d.labels.push_back(cls);
    }
  }
  return d;
}

void split_parity(const nnengine::Dataset& all, nnengine::Dataset* train,
                  nnengine::Dataset* test) {
  train->input_shape = all.input_shape;
  test->input_shape = all.input_shape;
  train->inputs.clear();
  train->labels.clear();
  test->inputs.clear();
  test->labels.clear();

  // Per-class index parity; labels arrive grouped by class so a running
  // counter per class suffices.
  std::vector<std::uint64_t> seen(
      all.labels.empty() ? 0 : *std::max_element(all.labels.begin(), all.labels.end()) + 1,
      0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int cls = all.labels[i];
    Dataset* dst = (seen[cls]++ % 2 == 0) ? train : test;
    dst->inputs.push_back(all.inputs[i]);
    dst->labels.push_back(cls);
  }
}

nnengine::Dataset head(const nnengine::Dataset& d, std::size_t n) {
  Dataset out;
  out.input_shape = d.input_shape;
  n = std::min(n, d.size());
  out.inputs.assign(d.inputs.begin(), d.inputs.begin() + static_cast<std::ptrdiff_t>(n));
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

tensorstore::ModelManifest desk_manifest(int classes, int image_size) {
  using tensorstore::LayerKind;
  using tensorstore::LayerSpec;
  tensorstore::ModelManifest m;
  m.input_shape = {1, image_size, image_size};
  m.class_count = classes;

  auto conv = [](std::string name, int param_idx, int out) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::conv2d;
    l.weight_tensor = name + ".weight";
    l.bias_tensor = name + ".bias";
    l.stride = 1;
    l.padding = 1;
    l.kernel = 3;
    l.out = out;
    l.param_layer_index = param_idx;
    return l;
  };
  auto act = [](std::string name) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::relu;
    return l;
  };
  auto pool = [](std::string name) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::maxpool2d;
    l.pool = 2;
    l.stride = 2;
    return l;
  };
  auto fc = [](std::string name, int param_idx, int out) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::linear;
    l.weight_tensor = name + ".weight";
    l.bias_tensor = name + ".bias";
    l.out = out;
    l.param_layer_index = param_idx;
    return l;
  };

  // Widths put most of the weight mass in fc1 and land near 53K parameters.
  m.layers.push_back(conv("conv1", 1, 12));
  m.layers.push_back(act("relu1"));
  m.layers.push_back(pool("pool1"));
  m.layers.push_back(conv("conv2", 2, 24));
  m.layers.push_back(act("relu2"));
  m.layers.push_back(pool("pool2"));
  {
    LayerSpec fl;
    fl.name = "flatten";
    fl.kind = LayerKind::flatten;
    m.layers.push_back(fl);
  }
  m.layers.push_back(fc("fc1", 3, 128));
  m.layers.push_back(act("relu3"));
  m.layers.push_back(fc("fc2", 4, classes));
  return m;
}

tensorstore::WeightArchive init_params(const tensorstore::ModelManifest& m,
                                       std::uint64_t seed) {
  using tensorstore::LayerKind;
  using tensorstore::TensorRecord;

  tensorstore::WeightArchive a;

  // Walk the manifest, inferring tensor shapes from the template hyperparams
  // the same way validate() will check them afterwards.
  int c = 0, h = 0, w = 0;
  std::int64_t flat = 0;
  bool spatial = m.input_shape.size() == 3;
  if (spatial) {
    c = static_cast<int>(m.input_shape[0]);
    h = static_cast<int>(m.input_shape[1]);
    w = static_cast<int>(m.input_shape[2]);
  } else {
    flat = m.input_shape[0];
  }

  const int last_param = m.param_layer_count();
  std::uint64_t tensor_ordinal = 0;
  auto fill_gaussian = [&](TensorRecord& t, float stddev) {
    philox::Stream rng(seed, kInitStream | tensor_ordinal);
    for (std::uint64_t i = 0; i < t.numel(); ++i) {
      t.set_value(i, stddev * static_cast<float>(rng.gaussian()));
    }
  };

  for (const auto& l : m.layers) {
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (l.out < 1 || l.kernel < 1) {
          throw_precondition("init_params: conv2d '" + l.name +
                             "' template needs hyperparams out and kernel");
        }
        TensorRecord wt;
        wt.shape = {l.out, c, l.kernel, l.kernel};
        wt.words.assign(wt.numel(), 0);
        if (*l.param_layer_index != last_param) {
          fill_gaussian(wt, std::sqrt(2.0f / static_cast<float>(c * l.kernel * l.kernel)));
        }
        ++tensor_ordinal;
        a.add_tensor(*l.weight_tensor, std::move(wt));
        if (l.bias_tensor) {
          TensorRecord bt;
          bt.shape = {l.out};
          bt.words.assign(l.out, 0);
          a.add_tensor(*l.bias_tensor, std::move(bt));
        }
        h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
        w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
        c = l.out;
        break;
      }
      case LayerKind::linear: {
        const int out_f = (*l.param_layer_index == last_param && l.out == 0)
                              ? static_cast<int>(m.class_count)
                              : l.out;
        if (out_f < 1) {
          throw_precondition("init_params: linear '" + l.name +
                             "' template needs hyperparams out");
        }
        TensorRecord wt;
        wt.shape = {out_f, flat};
        wt.words.assign(wt.numel(), 0);
        if (*l.param_layer_index != last_param) {
          fill_gaussian(wt, std::sqrt(2.0f / static_cast<float>(flat)));
        }
        ++tensor_ordinal;
        a.add_tensor(*l.weight_tensor, std::move(wt));
        if (l.bias_tensor) {
          TensorRecord bt;
          bt.shape = {out_f};
          bt.words.assign(out_f, 0);
          a.add_tensor(*l.bias_tensor, std::move(bt));
        }
        flat = out_f;
        break;
      }
      case LayerKind::maxpool2d:
        h = (h - l.pool) / l.stride + 1;
        w = (w - l.pool) / l.stride + 1;
        break;
      case LayerKind::flatten:
        flat = static_cast<std::int64_t>(c) * h * w;
        spatial = false;
        break;
      case LayerKind::relu:
        break;
    }
  }
  return a;
}

nnengine::Model train(const tensorstore::ModelManifest& arch,
                      const nnengine::Dataset& train_data,
                      const TrainHyper& hyper) {
  if (train_data.size() == 0) throw_precondition("train: empty dataset");
  if (hyper.batch < 1 || hyper.epochs < 0) throw_precondition("train: bad hyperparams");

  tensorstore::WeightArchive params = init_params(arch, hyper.seed);
  nnengine::CompiledNet net = nnengine::CompiledNet::compile(arch, params);

  nnengine::GradBuffers grads = nnengine::GradBuffers::zeros_like(net);
  nnengine::GradBuffers velocity = nnengine::GradBuffers::zeros_like(net);
  std::vector<float> tape(net.tape_size, 0.0f);
  std::vector<float> dlogits(net.logit_count, 0.0f);
  std::vector<float> probs(net.logit_count, 0.0f);

  std::vector<std::uint32_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0u);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    philox::Stream shuffle_rng(hyper.seed,
                               kShuffleStream | static_cast<std::uint64_t>(epoch));
    philox::shuffle(order, shuffle_rng);

    for (std::size_t start = 0, step = 0; start < order.size();
         start += hyper.batch, ++step) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
      const float inv_batch = 1.0f / static_cast<float>(stop - start);
      grads.clear();
      double batch_loss = 0.0;

      for (std::size_t bi = start; bi < stop; ++bi) {
        const auto& x = train_data.inputs[order[bi]];
        const int label = train_data.labels[order[bi]];
        std::copy(x.begin(), x.end(), tape.begin());
        net.run(tape);

        const auto logits = net.logits(tape);
        float maxv = logits[0];
        for (float v : logits) maxv = std::max(maxv, v);
        float denom = 0.0f;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          probs[i] = std::exp(logits[i] - maxv);
          denom += probs[i];
        }
        for (auto& p : probs) p /= denom;
        batch_loss += -std::log(std::max(probs[label], 1e-30f));

        for (std::size_t i = 0; i < dlogits.size(); ++i) {
          dlogits[i] = (probs[i] - (static_cast<int>(i) == label ? 1.0f : 0.0f)) *
                       inv_batch;
        }
        nnengine::backward(net, tape, dlogits, grads);
      }

      if (!std::isfinite(batch_loss)) {
        throw_precondition("train: loss diverged at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
      }

      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& wv = velocity.weight_grads[li];
        auto& wg = grads.weight_grads[li];
        auto& wt = net.layers[li].weights;
        for (std::size_t i = 0; i < wt.size(); ++i) {
          wv[i] = hyper.momentum * wv[i] + wg[i];
          wt[i] -= hyper.lr * wv[i];
        }
        auto& bv = velocity.bias_grads[li];
        auto& bg = grads.bias_grads[li];
        auto& bt = net.layers[li].bias;
        for (std::size_t i = 0; i < bt.size(); ++i) {
          bv[i] = hyper.momentum * bv[i] + bg[i];
          bt[i] -= hyper.lr * bv[i];
        }
      }
    }
  }

  net.write_back(params);
  return nnengine::make_model(arch, std::move(params));
}

double ar(double acc0, double acc_k) {
  if (!(acc0 > 0.0)) throw_precondition("ar: baseline accuracy must be positive");
  return (acc0 - acc_k) / acc0;
}

double mar(std::span<const double> ars) {
  if (ars.empty()) throw_precondition("mar: need at least one AR value");
  double sum = 0.0;
  for (double v : ars) sum += v;
  return sum / static_cast<double>(ars.size());
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::dnl: return "dnl";
    case Method::one_pass_dnl: return "1p_dnl";
    case Method::random: return "random";
    case Method::magnitude_unconstrained: return "magnitude";
  }
  return "?";
}

Method method_from_name(std::string_view name) {
  if (name == "dnl") return Method::dnl;
  if (name == "1p_dnl") return Method::one_pass_dnl;
  if (name == "random") return Method::random;
  if (name == "magnitude") return Method::magnitude_unconstrained;
  throw_config("unknown method '" + std::string(name) + "'");
}

namespace {

double eval_plan_prefix(const nnengine::Model& model,
                        const nnengine::Dataset& data,
                        const lesion::FlipPlan& plan, std::uint64_t k, int jobs) {
  const lesion::FlipPlan prefix = plan.prefix(k);
  tensorstore::WeightArchive attacked = lesion::apply(prefix, model.params);
  auto m2 = nnengine::make_model(model.manifest, attacked);
  const double acc = nnengine::accuracy(m2, data, jobs);
  // Restore through the involution and insist the baseline is intact.
  const tensorstore::WeightArchive restored = lesion::apply(prefix, attacked);
  if (!(restored == model.params)) {
    throw_precondition("run_experiment: restoration failed to reproduce baseline");
  }
  return acc;
}

}  // namespace

EvalReport run_experiment(const nnengine::Model& model,
                          const nnengine::Dataset& eval_data,
                          const ExperimentConfig& cfg) {
  EvalReport rep;
  rep.method = std::string(method_name(cfg.method));
  rep.L = cfg.L;
  rep.N = cfg.N;
  rep.seeds = cfg.seeds;
  rep.baseline_acc = nnengine::accuracy(model, eval_data, cfg.jobs);

  if (cfg.N == 0) return rep;

  if (cfg.method == Method::random) {
    if (cfg.seeds.empty()) {
      throw_precondition("run_experiment: random method needs seeds");
    }
    // Seeds are independent: shard them across workers and assemble rows in
    // (seed, k) order so the report does not depend on the job count. Each
    // worker owns one compiled copy of the net, applies the plan's flips
    // incrementally and recomputes only from the earliest flipped layer,
    // reading pristine activations from a shared per-sample cache. This is
    // bit-identical to apply-then-recompile with a full forward.
    const nnengine::CompiledNet net0 =
        nnengine::CompiledNet::compile(model.manifest, model.params);
    std::map<std::string, std::size_t> layer_of;
    for (std::size_t i = 0; i < net0.layers.size(); ++i) {
      if (!net0.layers[i].weight_tensor.empty()) {
        layer_of[net0.layers[i].weight_tensor] = i;
      }
    }

    const std::size_t n_samples = eval_data.size();
    const std::size_t logits_at = net0.tape_size - net0.logit_count;
    std::vector<std::vector<float>> pristine(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
      pristine[s].assign(net0.tape_size, 0.0f);
      std::copy(eval_data.inputs[s].begin(), eval_data.inputs[s].end(),
                pristine[s].begin());
      net0.run(pristine[s]);
    }

    std::vector<double> accs(cfg.seeds.size() * cfg.N, 0.0);
    const unsigned n_threads = std::min<std::size_t>(
        cfg.jobs > 0 ? static_cast<unsigned>(cfg.jobs)
                     : std::max(1u, std::thread::hardware_concurrency()),
        cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      nnengine::CompiledNet net = net0;
      std::vector<float> scratch(net.tape_size, 0.0f);
      auto xor_flip = [&](const lesion::Flip& f) {
        auto& w = net.layers[layer_of.at(f.coord.tensor)].weights;
        w[f.coord.flat_index] = std::bit_cast<float>(
            std::bit_cast<std::uint32_t>(w[f.coord.flat_index]) ^
            (std::uint32_t{1} << f.bit));
      };
      for (;;) {
        const std::size_t si = next.fetch_add(1);
        if (si >= cfg.seeds.size()) break;
        const auto plan = lesion::plan_random(model.manifest, model.params,
                                              cfg.N, cfg.seeds[si],
                                              /*sign_only=*/true);
        std::uint64_t applied = 0;
        std::size_t first_layer = net.layers.size();
        for (std::uint64_t k = 1; k <= cfg.N; ++k) {
          for (; applied < k; ++applied) {
            xor_flip(plan.flips[applied]);
            first_layer = std::min(first_layer,
                                   layer_of.at(plan.flips[applied].coord.tensor));
          }
          const auto& entry = net.layers[first_layer];
          std::uint64_t correct = 0;
          for (std::size_t s = 0; s < n_samples; ++s) {
            std::memcpy(scratch.data() + entry.in_offset,
                        pristine[s].data() + entry.in_offset,
                        entry.in_size * sizeof(float));
            net.run_from(first_layer, scratch);
            int best = 0;
            const float* lg = scratch.data() + logits_at;
            for (std::size_t i = 1; i < net.logit_count; ++i) {
              if (lg[i] > lg[best]) best = static_cast<int>(i);
            }
            if (best == eval_data.labels[s]) ++correct;
          }
          accs[si * cfg.N + k - 1] =
              static_cast<double>(correct) / static_cast<double>(n_samples);
        }
        for (std::uint64_t i = 0; i < applied; ++i) xor_flip(plan.flips[i]);
      }
    };
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    model.counters->forward.fetch_add(
        cfg.seeds.size() * cfg.N * eval_data.size() + n_samples,
        std::memory_order_relaxed);

    std::vector<double> mean_acc(cfg.N, 0.0);
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      for (std::uint64_t k = 1; k <= cfg.N; ++k) {
        const double acc = accs[si * cfg.N + k - 1];
        rep.rows.push_back(EvalRow{k, cfg.seeds[si], acc, ar(rep.baseline_acc, acc)});
        mean_acc[k - 1] += acc;
      }
    }
    for (std::uint64_t k = 1; k <= cfg.N; ++k) {
      const double acc = mean_acc[k - 1] / static_cast<double>(cfg.seeds.size());
      rep.per_k.push_back(KPoint{k, acc, ar(rep.baseline_acc, acc)});
    }
  } else {
    lesion::FlipPlan plan;
    switch (cfg.method) {
      case Method::dnl:
        plan = lesion::plan_dnl(model.manifest, model.params, cfg.N, cfg.L);
        break;
      case Method::one_pass_dnl:
        plan = lesion::plan_1p_dnl(model, cfg.N, cfg.L, cfg.probe_seed, cfg.alpha,
                                   cfg.beta);
        break;
      case Method::magnitude_unconstrained:
        plan = lesion::plan_magnitude_unconstrained(model.manifest, model.params,
                                                    cfg.N);
        break;
      default:
        break;
    }
    for (std::uint64_t k = 1; k <= cfg.N; ++k) {
      const double acc = eval_plan_prefix(model, eval_data, plan, k, cfg.jobs);
      rep.rows.push_back(EvalRow{k, std::nullopt, acc, ar(rep.baseline_acc, acc)});
      rep.per_k.push_back(KPoint{k, acc, ar(rep.baseline_acc, acc)});
    }
  }

  std::vector<double> ars;
  ars.reserve(rep.per_k.size());
  for (const auto& p : rep.per_k) ars.push_back(p.ar);
  rep.mar_n = mar(ars);
  return rep;
}

EvalReport evaluate_plan(const nnengine::Model& model,
                         const nnengine::Dataset& eval_data,
                         const lesion::FlipPlan& plan, int jobs) {
  EvalReport rep;
  rep.method = plan.method;
  rep.L = plan.L;
  rep.N = plan.k;
  if (plan.seed) rep.seeds.push_back(*plan.seed);
  rep.baseline_acc = nnengine::accuracy(model, eval_data, jobs);

  for (std::uint64_t k = 1; k <= plan.k; ++k) {
    const double acc = eval_plan_prefix(model, eval_data, plan, k, jobs);
    rep.rows.push_back(EvalRow{k, std::nullopt, acc, ar(rep.baseline_acc, acc)});
    rep.per_k.push_back(KPoint{k, acc, ar(rep.baseline_acc, acc)});
  }
  if (!rep.per_k.empty()) {
    std::vector<double> ars;
    for (const auto& p : rep.per_k) ars.push_back(p.ar);
    rep.mar_n = mar(ars);
  }
  return rep;
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  out << "# dnlkit eval-report v1\n";
  out << "method,L,k,seed,acc,ar\n";
  char buf[192];
  for (const auto& row : r.rows) {
    if (row.seed) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%llu,%llu,%.9g,%.9g\n",
                    r.method.c_str(), r.L,
                    static_cast<unsigned long long>(row.k),
                    static_cast<unsigned long long>(*row.seed), row.acc, row.ar);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%d,%llu,,%.9g,%.9g\n", r.method.c_str(),
                    r.L, static_cast<unsigned long long>(row.k), row.acc, row.ar);
    }
    out << buf;
  }
  // Summary row: k = N, seed column "summary", acc = baseline, ar = mAR(N).
  std::snprintf(buf, sizeof(buf), "%s,%d,%llu,summary,%.9g,%.9g\n",
                r.method.c_str(), r.L, static_cast<unsigned long long>(r.N),
                r.baseline_acc, r.mar_n);
  out << buf;
}

std::string report_to_json(const EvalReport& r) {
  ordered_json j = ordered_json::object();
  j["method"] = r.method;
  j["L"] = r.L;
  j["N"] = r.N;
  j["seeds"] = r.seeds;
  j["baseline_acc"] = r.baseline_acc;
  ordered_json rows = ordered_json::array();
  for (const auto& row : r.rows) {
    ordered_json rj = ordered_json::object();
    rj["k"] = row.k;
    if (row.seed) {
      rj["seed"] = *row.seed;
    } else {
      rj["seed"] = nullptr;
    }
    rj["acc"] = row.acc;
    rj["ar"] = row.ar;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  ordered_json per_k = ordered_json::array();
  for (const auto& p : r.per_k) {
    per_k.push_back({{"k", p.k}, {"acc", p.acc}, {"ar", p.ar}});
  }
  j["per_k"] = std::move(per_k);
  j["mar"] = r.mar_n;
  return j.dump(2) + "\n";
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw_precondition("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p * static_cast<double>(values.size()));
  const std::size_t idx =
      std::min(values.size() - 1,
               static_cast<std::size_t>(std::max(1.0, rank)) - 1);
  return values[idx];
}

}  // namespace dnlkit::bench
