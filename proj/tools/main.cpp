#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "dnlkit/error.hpp"
#include "dnlkit/shield.hpp"
#include "dnlkit/version.hpp"

namespace {

using dnlkit::cli::AttackConfig;
using dnlkit::cli::DefendConfig;
using dnlkit::cli::EvalConfig;
using dnlkit::cli::InspectConfig;
using dnlkit::cli::StressConfig;
using dnlkit::cli::TrainConfig;
using ordered_json = nlohmann::ordered_json;

std::string config_hash(const ordered_json& j) {
  const std::string text = j.dump();
  const auto digest = dnlkit::shield::sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (int i = 0; i < 16; ++i) {  // 128-bit prefix is plenty for auditing
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// Every run starts with an auditable header: version, subcommand, the
// effective configuration digest and all seeds in play.
void provenance(const std::string& cmd, const ordered_json& cfg) {
  std::printf("# dnlkit %s\n", dnlkit::kVersion);
  std::printf("# command: %s\n", cmd.c_str());
  std::printf("# config-hash: %s\n", config_hash(cfg).c_str());
  std::string seeds;
  for (const auto& [k, v] : cfg.items()) {
    if (k.find("seed") != std::string::npos) {
      if (!seeds.empty()) seeds += " ";
      seeds += k + "=" + v.dump();
    }
  }
  std::printf("# seeds: %s\n", seeds.empty() ? "none" : seeds.c_str());
}

int dispatch(CLI::App& app);

int run_config_file(CLI::App& app, const std::string& path) {
  std::ifstream f(path);
  if (!f) dnlkit::throw_data("cannot open config file '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const std::exception& e) {
    dnlkit::throw_config(std::string("config file is not valid JSON: ") + e.what());
  }
  const std::string sub = j.value("subcommand", std::string{});
  if (sub.empty() || sub == "run") {
    dnlkit::throw_config("config file needs a subcommand other than 'run'");
  }
  std::vector<std::string> args;
  if (j.contains("args")) {
    for (const auto& [k, v] : j["args"].items()) {
      if (v.is_boolean()) {
        if (v.get<bool>()) args.push_back("--" + k);
      } else if (v.is_array()) {
        for (const auto& item : v) {
          args.push_back("--" + k);
          args.push_back(item.is_string() ? item.get<std::string>() : item.dump());
        }
      } else {
        args.push_back("--" + k);
        args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
    }
  }
  // CLI11 consumes arguments in reverse order.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  reversed.push_back(sub);
  app.clear();
  app.parse(reversed);
  return dispatch(app);
}

TrainConfig g_train;
InspectConfig g_inspect;
AttackConfig g_attack;
EvalConfig g_eval;
DefendConfig g_defend;
StressConfig g_stress;
std::string g_run_config;

ordered_json train_json(const TrainConfig& c) {
  return {{"out_dir", c.out_dir},       {"seed", c.seed},
          {"epochs", c.epochs},         {"lr", c.lr},
          {"momentum", c.momentum},     {"batch", c.batch},
          {"classes", c.classes},       {"samples_per_class", c.samples_per_class},
          {"image_size", c.image_size}, {"noise_sigma", c.noise_sigma},
          {"data_seed", c.data_seed},   {"jobs", c.jobs}};
}

ordered_json attack_json(const AttackConfig& c) {
  return {{"manifest", c.manifest}, {"archive", c.archive}, {"method", c.method},
          {"k", c.k},               {"L", c.L},             {"seed", c.seed},
          {"alpha", c.alpha},       {"beta", c.beta},       {"any_bit", c.any_bit},
          {"plan_out", c.plan_out}, {"apply_out", c.apply_out}};
}

ordered_json eval_json(const EvalConfig& c) {
  return {{"manifest", c.manifest},   {"archive", c.archive},
          {"dataset", c.dataset},     {"split", c.split},
          {"subsample", c.subsample}, {"plan", c.plan},
          {"method", c.method},       {"N", c.N},
          {"L", c.L},                 {"seed_count", c.seed_count},
          {"seed_base", c.seed_base}, {"probe_seed", c.probe_seed},
          {"alpha", c.alpha},         {"beta", c.beta},
          {"csv_out", c.csv_out},     {"json_out", c.json_out},
          {"jobs", c.jobs}};
}

ordered_json defend_json(const DefendConfig& c) {
  return {{"manifest", c.manifest},         {"archive", c.archive},
          {"verify", c.verify},             {"fraction", c.fraction},
          {"selection", c.selection},       {"seed", c.seed},
          {"scheme", c.scheme},             {"L", c.L},
          {"registry_out", c.registry_out}, {"sidecar_out", c.sidecar_out},
          {"registry", c.registry},         {"sidecar", c.sidecar},
          {"repaired_out", c.repaired_out}, {"report_out", c.report_out}};
}

ordered_json stress_json(const StressConfig& c) {
  return {{"manifest", c.manifest},     {"archive", c.archive},
          {"dataset", c.dataset},       {"split", c.split},
          {"subsample", c.subsample},   {"fractions", c.fractions},
          {"seeds", c.seeds},           {"seed_base", c.seed_base},
          {"flip_fraction", c.flip_fraction}, {"n_flips", c.n_flips},
          {"scheme", c.scheme},         {"selection", c.selection},
          {"full_word", c.full_word},   {"csv_out", c.csv_out},
          {"jobs", c.jobs}};
}

int dispatch(CLI::App& app) {
  if (app.got_subcommand("train")) {
    provenance("train", train_json(g_train));
    return dnlkit::cli::cmd_train(g_train);
  }
  if (app.got_subcommand("inspect")) {
    provenance("inspect", {{"archive", g_inspect.archive},
                           {"manifest", g_inspect.manifest},
                           {"top", g_inspect.top},
                           {"scores_out", g_inspect.scores_out}});
    return dnlkit::cli::cmd_inspect(g_inspect);
  }
  if (app.got_subcommand("attack")) {
    provenance("attack", attack_json(g_attack));
    return dnlkit::cli::cmd_attack(g_attack);
  }
  if (app.got_subcommand("eval")) {
    provenance("eval", eval_json(g_eval));
    return dnlkit::cli::cmd_eval(g_eval);
  }
  if (app.got_subcommand("defend")) {
    provenance("defend", defend_json(g_defend));
    return dnlkit::cli::cmd_defend(g_defend);
  }
  if (app.got_subcommand("stress")) {
    provenance("stress", stress_json(g_stress));
    return dnlkit::cli::cmd_stress(g_stress);
  }
  if (app.got_subcommand("run")) {
    return run_config_file(app, g_run_config);
  }
  std::fprintf(stderr, "%s", app.help().c_str());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dnlkit: locate, flip and defend critical sign bits in FP32 weight archives"};
  app.require_subcommand(0, 1);

  const char* env_out = std::getenv("DNLKIT_OUT");
  g_train.out_dir = env_out ? env_out : ".";

  auto* train = app.add_subcommand("train", "train a desk-scale victim CNN");
  train->add_option("--out-dir", g_train.out_dir, "output directory");
  train->add_option("--seed", g_train.seed, "training seed");
  train->add_option("--epochs", g_train.epochs);
  train->add_option("--lr", g_train.lr);
  train->add_option("--momentum", g_train.momentum);
  train->add_option("--batch", g_train.batch);
  train->add_option("--classes", g_train.classes);
  train->add_option("--samples-per-class", g_train.samples_per_class);
  train->add_option("--image-size", g_train.image_size);
  train->add_option("--noise-sigma", g_train.noise_sigma);
  train->add_option("--data-seed", g_train.data_seed);
  train->add_option("--jobs", g_train.jobs);

  auto* inspect = app.add_subcommand("inspect", "print tensors and top |theta| parameters");
  inspect->add_option("--archive", g_inspect.archive)->required();
  inspect->add_option("--manifest", g_inspect.manifest);
  inspect->add_option("--top", g_inspect.top);
  inspect->add_option("--scores-out", g_inspect.scores_out,
                      "write the magnitude score table as CSV");

  auto* attack = app.add_subcommand("attack", "plan (and optionally apply) sign-bit flips");
  attack->add_option("--manifest", g_attack.manifest)->required();
  attack->add_option("--archive", g_attack.archive)->required();
  attack->add_option("--method", g_attack.method, "dnl|1p_dnl|random|magnitude");
  attack->add_option("--k", g_attack.k)->required();
  attack->add_option("--L", g_attack.L);
  attack->add_option("--seed", g_attack.seed);
  attack->add_option("--alpha", g_attack.alpha);
  attack->add_option("--beta", g_attack.beta);
  attack->add_flag("--any-bit", g_attack.any_bit, "random method may hit any bit");
  attack->add_option("--plan-out", g_attack.plan_out);
  attack->add_option("--apply-out", g_attack.apply_out);

  auto* eval = app.add_subcommand("eval", "evaluate AR(k)/mAR over flip plans");
  eval->add_option("--manifest", g_eval.manifest)->required();
  eval->add_option("--archive", g_eval.archive)->required();
  eval->add_option("--dataset", g_eval.dataset)->required();
  eval->add_option("--split", g_eval.split, "train|test|all");
  eval->add_option("--subsample", g_eval.subsample, "0 = whole split");
  eval->add_option("--plan", g_eval.plan, "evaluate an existing plan file");
  eval->add_option("--method", g_eval.method);
  eval->add_option("--N", g_eval.N);
  eval->add_option("--L", g_eval.L);
  eval->add_option("--seeds", g_eval.seed_count, "seed count for random");
  eval->add_option("--seed-base", g_eval.seed_base);
  eval->add_option("--probe-seed", g_eval.probe_seed);
  eval->add_option("--alpha", g_eval.alpha);
  eval->add_option("--beta", g_eval.beta);
  eval->add_option("--csv-out", g_eval.csv_out);
  eval->add_option("--json-out", g_eval.json_out);
  eval->add_option("--jobs", g_eval.jobs);

  auto* defend = app.add_subcommand("defend", "build or verify sign-bit protection");
  defend->add_option("--manifest", g_defend.manifest);
  defend->add_option("--archive", g_defend.archive)->required();
  defend->add_flag("--verify", g_defend.verify, "verify and repair instead of building");
  defend->add_option("--fraction", g_defend.fraction, "protected fraction in (0,1]");
  defend->add_option("--selection", g_defend.selection, "by_score|random");
  defend->add_option("--seed", g_defend.seed);
  defend->add_option("--scheme", g_defend.scheme, "replicate3|hamming_secded");
  defend->add_option("--L", g_defend.L, "restrict scoring to first L layers (0 = all)");
  defend->add_option("--registry-out", g_defend.registry_out);
  defend->add_option("--sidecar-out", g_defend.sidecar_out);
  defend->add_option("--registry", g_defend.registry);
  defend->add_option("--sidecar", g_defend.sidecar);
  defend->add_option("--repaired-out", g_defend.repaired_out);
  defend->add_option("--report-out", g_defend.report_out);

  auto* stress = app.add_subcommand("stress", "random sign-flip barrage over a protection grid");
  stress->add_option("--manifest", g_stress.manifest)->required();
  stress->add_option("--archive", g_stress.archive)->required();
  stress->add_option("--dataset", g_stress.dataset)->required();
  stress->add_option("--split", g_stress.split);
  stress->add_option("--subsample", g_stress.subsample);
  stress->add_option("--fractions", g_stress.fractions, "percent coverages")
      ->delimiter(',');
  stress->add_option("--seeds", g_stress.seeds);
  stress->add_option("--seed-base", g_stress.seed_base);
  stress->add_option("--flip-frac", g_stress.flip_fraction);
  stress->add_option("--n-flips", g_stress.n_flips);
  stress->add_option("--scheme", g_stress.scheme);
  stress->add_option("--selection", g_stress.selection);
  stress->add_flag("--full-word", g_stress.full_word);
  stress->add_option("--csv-out", g_stress.csv_out);
  stress->add_option("--jobs", g_stress.jobs);

  auto* run = app.add_subcommand("run", "execute a declarative JSON experiment config");
  run->add_option("--config", g_run_config)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "error: kind=config msg=\"%s\"\n", e.what());
    return 2;
  }

  try {
    return dispatch(app);
  } catch (const dnlkit::Error& e) {
    const char* kind = e.kind() == dnlkit::ErrorKind::config        ? "config"
                       : e.kind() == dnlkit::ErrorKind::data        ? "data"
                                                                    : "precondition";
    std::fprintf(stderr, "error: kind=%s msg=\"%s\"\n", kind, e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: kind=internal msg=\"%s\"\n", e.what());
    return 1;
  }
}
