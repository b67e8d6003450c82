#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "dnlkit/bench.hpp"
#include "dnlkit/bitkit.hpp"
#include "dnlkit/error.hpp"
#include "dnlkit/lesion.hpp"
#include "dnlkit/nnengine.hpp"
#include "dnlkit/scoring.hpp"
#include "dnlkit/shield.hpp"
#include "dnlkit/tensorstore.hpp"

namespace dnlkit::cli {

namespace fs = std::filesystem;
namespace ts = dnlkit::tensorstore;
namespace nn = dnlkit::nnengine;

namespace {

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw_config(std::string("missing required path: ") + what);
  if (!fs::exists(path)) {
    throw_data(std::string(what) + " file not found: " + path);
  }
}

nn::Dataset load_split(const std::string& dataset_path, const std::string& split,
                       std::uint64_t subsample) {
  require_file(dataset_path, "dataset spec");
  const auto spec = bench::load_dataset_spec_file(dataset_path);
  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);

  nn::Dataset out;
  if (split == "train") {
    out = train;
  } else if (split == "test") {
    out = test;
  } else if (split == "all") {
    out = all;
  } else {
    throw_config("unknown split '" + split + "' (train|test|all)");
  }
  if (subsample > 0) out = bench::head(out, subsample);
  return out;
}

std::vector<std::uint64_t> seed_range(std::uint64_t base, std::uint64_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::uint64_t i = 0; i < count; ++i) seeds[i] = base + i;
  return seeds;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write '" + path + "'");
  f << text;
}

}  // namespace

int cmd_train(const TrainConfig& cfg) {
  bench::SyntheticDatasetSpec spec;
  spec.classes = cfg.classes;
  spec.samples_per_class = cfg.samples_per_class;
  spec.image_size = cfg.image_size;
  spec.noise_sigma = cfg.noise_sigma;
  spec.seed = cfg.data_seed;

  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);

  const auto arch = bench::desk_manifest(cfg.classes, cfg.image_size);
  bench::TrainHyper hyper;
  hyper.epochs = cfg.epochs;
  hyper.lr = cfg.lr;
  hyper.momentum = cfg.momentum;
  hyper.batch = cfg.batch;
  hyper.seed = cfg.seed;

  const auto model = bench::train(arch, train, hyper);
  const double train_acc = nn::accuracy(model, train, cfg.jobs);
  const double test_acc = nn::accuracy(model, test, cfg.jobs);

  const fs::path out_dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  fs::create_directories(out_dir);
  ts::save_archive_file(model.params, out_dir / "model.safetensors");
  ts::save_manifest_file(model.manifest, out_dir / "manifest.json");
  bench::save_dataset_spec_file(spec, out_dir / "dataset.json");

  std::printf("train: epochs=%d lr=%g momentum=%g batch=%d seed=%llu\n",
              cfg.epochs, cfg.lr, cfg.momentum, cfg.batch,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("train: train_accuracy=%.4f test_accuracy=%.4f\n", train_acc, test_acc);
  std::printf("wrote: %s\n", (out_dir / "model.safetensors").c_str());
  std::printf("wrote: %s\n", (out_dir / "manifest.json").c_str());
  std::printf("wrote: %s\n", (out_dir / "dataset.json").c_str());
  return 0;
}

int cmd_inspect(const InspectConfig& cfg) {
  require_file(cfg.archive, "archive");
  const auto a = ts::load_archive_file(cfg.archive);

  std::printf("archive: %s\n", cfg.archive.c_str());
  std::printf("%-24s %-16s %12s\n", "tensor", "shape", "values");
  for (const auto& name : a.names()) {
    const auto& rec = a.tensor(name);
    std::string shape = "[";
    for (std::size_t i = 0; i < rec.shape.size(); ++i) {
      shape += std::to_string(rec.shape[i]);
      if (i + 1 < rec.shape.size()) shape += ",";
    }
    shape += "]";
    std::printf("%-24s %-16s %12llu\n", name.c_str(), shape.c_str(),
                static_cast<unsigned long long>(rec.numel()));
  }

  if (!cfg.manifest.empty()) {
    require_file(cfg.manifest, "manifest");
    const auto m = ts::load_manifest_file(cfg.manifest);
    ts::validate(m, a);
    const auto cands = ts::candidate_params(m, a, m.param_layer_count());
    auto table = scoring::score_magnitude(cands);
    const auto order = scoring::descending_order(table);
    const int top = std::min<int>(cfg.top, static_cast<int>(order.size()));
    std::printf("top %d parameters by |theta| (layer, kernel, tensor, index, value)\n",
                top);
    for (int i = 0; i < top; ++i) {
      const auto& c = table.candidates[order[i]];
      std::printf("%4d  L%d k%-6llu %-20s %8llu % .6g\n", i + 1,
                  c.kernel.param_layer_index,
                  static_cast<unsigned long long>(c.kernel.kernel_index),
                  c.coord.tensor.c_str(),
                  static_cast<unsigned long long>(c.coord.flat_index),
                  static_cast<double>(c.value));
    }
    if (!cfg.scores_out.empty()) {
      std::ostringstream out;
      scoring::write_score_csv(table, out);
      write_text(cfg.scores_out, out.str());
      std::printf("wrote: %s\n", cfg.scores_out.c_str());
    }
  } else if (!cfg.scores_out.empty()) {
    throw_config("--scores-out needs --manifest for layer and kernel ids");
  }
  return 0;
}

int cmd_attack(const AttackConfig& cfg) {
  require_file(cfg.manifest, "manifest");
  require_file(cfg.archive, "archive");
  const auto m = ts::load_manifest_file(cfg.manifest);
  const auto a = ts::load_archive_file(cfg.archive);
  ts::validate(m, a);

  lesion::FlipPlan plan;
  std::uint64_t fwd = 0, bwd = 0;
  if (cfg.method == "dnl") {
    plan = lesion::plan_dnl(m, a, cfg.k, cfg.L);
  } else if (cfg.method == "1p_dnl") {
    auto model = nn::make_model(m, a);
    plan = lesion::plan_1p_dnl(model, cfg.k, cfg.L, cfg.seed, cfg.alpha, cfg.beta);
    fwd = model.counters->forward.load();
    bwd = model.counters->backward.load();
  } else if (cfg.method == "random") {
    plan = lesion::plan_random(m, a, cfg.k, cfg.seed, !cfg.any_bit);
  } else if (cfg.method == "magnitude") {
    plan = lesion::plan_magnitude_unconstrained(m, a, cfg.k);
  } else {
    throw_config("unknown attack method '" + cfg.method + "'");
  }

  std::printf("# engine-passes: forward=%llu backward=%llu\n",
              static_cast<unsigned long long>(fwd),
              static_cast<unsigned long long>(bwd));

  if (!cfg.plan_out.empty()) {
    lesion::save_plan_file(plan, cfg.plan_out);
    std::printf("wrote: %s\n", cfg.plan_out.c_str());
  }
  if (!cfg.apply_out.empty()) {
    const auto attacked = lesion::apply(plan, a);
    ts::save_archive_file(attacked, cfg.apply_out);
    std::printf("wrote: %s\n", cfg.apply_out.c_str());
  }

  for (const auto& f : plan.flips) {
    std::printf("flip: %s[%llu] bit %d\n", f.coord.tensor.c_str(),
                static_cast<unsigned long long>(f.coord.flat_index), f.bit);
  }
  return 0;
}

int cmd_eval(const EvalConfig& cfg) {
  require_file(cfg.manifest, "manifest");
  require_file(cfg.archive, "archive");
  const auto m = ts::load_manifest_file(cfg.manifest);
  const auto a = ts::load_archive_file(cfg.archive);
  auto model = nn::make_model(m, a);
  const auto data = load_split(cfg.dataset, cfg.split, cfg.subsample);

  bench::EvalReport rep;
  if (!cfg.plan.empty()) {
    const auto plan = lesion::load_plan_file(cfg.plan);
    rep = bench::evaluate_plan(model, data, plan, cfg.jobs);
  } else {
    bench::ExperimentConfig ec;
    ec.method = bench::method_from_name(cfg.method);
    ec.N = cfg.N;
    ec.L = cfg.L;
    ec.probe_seed = cfg.probe_seed;
    ec.alpha = cfg.alpha;
    ec.beta = cfg.beta;
    ec.jobs = cfg.jobs;
    if (ec.method == bench::Method::random) {
      ec.seeds = seed_range(cfg.seed_base, cfg.seed_count);
    }
    rep = bench::run_experiment(model, data, ec);
  }

  std::printf("eval: method=%s L=%d N=%llu baseline_acc=%.6g mAR=%.6g\n",
              rep.method.c_str(), rep.L, static_cast<unsigned long long>(rep.N),
              rep.baseline_acc, rep.mar_n);
  for (const auto& p : rep.per_k) {
    std::printf("eval: k=%llu acc=%.6g ar=%.6g\n",
                static_cast<unsigned long long>(p.k), p.acc, p.ar);
  }

  if (!cfg.csv_out.empty()) {
    std::ostringstream out;
    bench::write_report_csv(rep, out);
    write_text(cfg.csv_out, out.str());
    std::printf("wrote: %s\n", cfg.csv_out.c_str());
  }
  if (!cfg.json_out.empty()) {
    write_text(cfg.json_out, bench::report_to_json(rep));
    std::printf("wrote: %s\n", cfg.json_out.c_str());
  }
  return 0;
}

int cmd_defend(const DefendConfig& cfg) {
  require_file(cfg.archive, "archive");
  const auto a = ts::load_archive_file(cfg.archive);

  if (cfg.verify) {
    require_file(cfg.registry, "registry");
    require_file(cfg.sidecar, "sidecar");
    const auto reg = shield::load_registry_file(cfg.registry);
    const auto side = shield::load_sidecar_file(cfg.sidecar);
    const auto rep = shield::verify_and_repair(a, reg, side);
    std::printf("verify: corrected=%zu alarms=%zu\n", rep.corrected.size(),
                rep.alarms.size());
    for (const auto& c : rep.corrected) {
      std::printf("corrected: %s[%llu]\n", c.tensor.c_str(),
                  static_cast<unsigned long long>(c.flat_index));
    }
    for (auto b : rep.alarms) {
      std::printf("alarm: uncorrectable block %llu\n",
                  static_cast<unsigned long long>(b));
    }
    if (!cfg.repaired_out.empty()) {
      ts::save_archive_file(rep.repaired, cfg.repaired_out);
      std::printf("wrote: %s\n", cfg.repaired_out.c_str());
    }
    if (!cfg.report_out.empty()) {
      std::string json = "{\n  \"corrected\": [";
      for (std::size_t i = 0; i < rep.corrected.size(); ++i) {
        if (i) json += ",";
        json += "\n    {\"tensor\": \"" + rep.corrected[i].tensor +
                "\", \"flat_index\": " + std::to_string(rep.corrected[i].flat_index) +
                "}";
      }
      json += rep.corrected.empty() ? "],\n" : "\n  ],\n";
      json += "  \"alarms\": [";
      for (std::size_t i = 0; i < rep.alarms.size(); ++i) {
        if (i) json += ", ";
        json += std::to_string(rep.alarms[i]);
      }
      json += "]\n}\n";
      write_text(cfg.report_out, json);
      std::printf("wrote: %s\n", cfg.report_out.c_str());
    }
    return rep.alarms.empty() ? 0 : 3;
  }

  require_file(cfg.manifest, "manifest");
  const auto m = ts::load_manifest_file(cfg.manifest);
  ts::validate(m, a);
  const int L = cfg.L > 0 ? cfg.L : m.param_layer_count();
  const auto cands = ts::candidate_params(m, a, L);

  shield::ProtectionRegistry reg;
  if (cfg.selection == "by_score") {
    const auto table = scoring::score_magnitude(cands);
    reg = shield::select_protected(table, static_cast<float>(cfg.fraction));
  } else if (cfg.selection == "random") {
    reg = shield::select_protected_random(cands, static_cast<float>(cfg.fraction),
                                          cfg.seed);
  } else {
    throw_config("unknown selection '" + cfg.selection + "'");
  }

  const auto scheme = shield::scheme_from_name(cfg.scheme);
  const auto side = shield::encode(a, reg, scheme);

  std::printf("defend: fraction=%g selection=%s scheme=%s protected=%zu payload_bytes=%zu\n",
              cfg.fraction, cfg.selection.c_str(), cfg.scheme.c_str(),
              reg.protected_coords.size(), side.payload.size());

  if (cfg.registry_out.empty() || cfg.sidecar_out.empty()) {
    throw_config("defend build mode needs --registry-out and --sidecar-out");
  }
  shield::save_registry_file(reg, cfg.registry_out);
  shield::save_sidecar_file(side, cfg.sidecar_out);
  std::printf("wrote: %s\n", cfg.registry_out.c_str());
  std::printf("wrote: %s\n", cfg.sidecar_out.c_str());
  return 0;
}

int cmd_stress(const StressConfig& cfg) {
  require_file(cfg.manifest, "manifest");
  require_file(cfg.archive, "archive");
  const auto m = ts::load_manifest_file(cfg.manifest);
  const auto a = ts::load_archive_file(cfg.archive);
  auto model = nn::make_model(m, a);
  const auto data = load_split(cfg.dataset, cfg.split, cfg.subsample);

  const auto cands = ts::candidate_params(m, a, m.param_layer_count());
  const std::uint64_t n_flips =
      cfg.n_flips > 0
          ? cfg.n_flips
          : static_cast<std::uint64_t>(
                std::llround(cfg.flip_fraction * static_cast<double>(cands.size())));
  const auto scheme = shield::scheme_from_name(cfg.scheme);

  std::ostringstream csv;
  csv << "# dnlkit stress-report v1\n";
  csv << "fraction,selection,scheme,seed,n_flips,corrected,alarms,acc,ar\n";
  char buf[256];

  std::printf("stress: n_flips=%llu seeds=%llu candidates=%zu\n",
              static_cast<unsigned long long>(n_flips),
              static_cast<unsigned long long>(cfg.seeds), cands.size());

  for (const double percent : cfg.fractions) {
    std::optional<shield::ProtectionRegistry> reg;
    std::optional<shield::SignSidecar> side;
    if (percent > 0.0) {
      const float fraction = static_cast<float>(percent / 100.0);
      if (cfg.selection == "by_score") {
        const auto table = scoring::score_magnitude(cands);
        reg = shield::select_protected(table, fraction);
      } else if (cfg.selection == "random") {
        reg = shield::select_protected_random(cands, fraction, cfg.seed_base);
      } else {
        throw_config("unknown selection '" + cfg.selection + "'");
      }
      side = shield::encode(a, *reg, scheme);
    }

    double mean_ar = 0.0;
    for (std::uint64_t i = 0; i < cfg.seeds; ++i) {
      const std::uint64_t seed = cfg.seed_base + i;
      const auto res = shield::stress(model, data, reg, side, n_flips, seed,
                                      !cfg.full_word, cfg.jobs);
      mean_ar += res.ar;
      std::snprintf(buf, sizeof(buf), "%g,%s,%s,%llu,%llu,%zu,%zu,%.9g,%.9g\n",
                    percent, cfg.selection.c_str(), cfg.scheme.c_str(),
                    static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(res.n_flips), res.corrected,
                    res.alarms, res.post_acc, res.ar);
      csv << buf;
    }
    mean_ar /= static_cast<double>(cfg.seeds);
    std::snprintf(buf, sizeof(buf), "%g,%s,%s,mean,%llu,,,,%.9g\n", percent,
                  cfg.selection.c_str(), cfg.scheme.c_str(),
                  static_cast<unsigned long long>(n_flips), mean_ar);
    csv << buf;
    std::printf("stress: fraction=%g%% mean_ar=%.6g\n", percent, mean_ar);
  }

  if (!cfg.csv_out.empty()) {
    write_text(cfg.csv_out, csv.str());
    std::printf("wrote: %s\n", cfg.csv_out.c_str());
  }
  return 0;
}

}  // namespace dnlkit::cli
