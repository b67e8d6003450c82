#include "doctest.h"

#include <cmath>
#include <sstream>

#include "dnlkit/bench.hpp"
#include "dnlkit/lesion.hpp"
#include "dnlkit/philox.hpp"
#include "testutil.hpp"

using namespace dnlkit;
using namespace testutil;
namespace ts = dnlkit::tensorstore;

TEST_CASE("ar and mar arithmetic") {
  CHECK(bench::ar(0.80, 0.20) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(bench::ar(0.5, 0.5) == 0.0);
  // Headline-scale illustration: near-total collapse.
  CHECK(bench::ar(0.76, 0.000152 * 7.6) == doctest::Approx(0.9985).epsilon(1e-3));
  CHECK_THROWS_AS((void)bench::ar(0.0, 0.0), Error);

  const double v1[] = {0.5, 1.0};
  CHECK(bench::mar(v1) == 0.75);
  const double v2[] = {0.3, 0.3, 0.3, 0.3};
  CHECK(bench::mar(v2) == doctest::Approx(0.3).epsilon(1e-12));
  const double v3[] = {0.0, 0.0};
  CHECK(bench::mar(v3) == 0.0);
  CHECK_THROWS_AS((void)bench::mar(std::span<const double>{}), Error);
}

TEST_CASE("dataset generation is deterministic and class-limited") {
  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 6;
  spec.image_size = 8;
  spec.noise_sigma = 0.25f;
  spec.seed = 9;

  const auto d1 = bench::gen_dataset(spec);
  const auto d2 = bench::gen_dataset(spec);
  REQUIRE(d1.size() == 24);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    REQUIRE(d1.labels[i] == d2.labels[i]);
    REQUIRE(d1.inputs[i] == d2.inputs[i]);
  }

  spec.noise_sigma = 0.0f;
  const auto clean = bench::gen_dataset(spec);
  for (int c = 0; c < 4; ++c) {
    const auto& first = clean.inputs[c * 6];
    for (int s = 1; s < 6; ++s) {
      CHECK(clean.inputs[c * 6 + s] == first);
    }
  }
  // Distinct classes give distinct clean patterns.
  CHECK(clean.inputs[0] != clean.inputs[6]);

  auto bad = spec;
  bad.classes = bench::kPatternRecipes + 1;
  CHECK_THROWS_AS((void)bench::gen_dataset(bad), Error);
  bad.classes = 1;
  CHECK_THROWS_AS((void)bench::gen_dataset(bad), Error);
}

TEST_CASE("parity split is disjoint and balanced") {
  bench::SyntheticDatasetSpec spec;
  spec.classes = 3;
  spec.samples_per_class = 10;
  spec.image_size = 8;
  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);
  CHECK(train.size() == 15);
  CHECK(test.size() == 15);
  int train_counts[3] = {}, test_counts[3] = {};
  for (int l : train.labels) ++train_counts[l];
  for (int l : test.labels) ++test_counts[l];
  for (int c = 0; c < 3; ++c) {
    CHECK(train_counts[c] == 5);
    CHECK(test_counts[c] == 5);
  }
}

TEST_CASE("dataset spec JSON round-trip") {
  TempDir tmp;
  bench::SyntheticDatasetSpec spec;
  spec.classes = 5;
  spec.samples_per_class = 7;
  spec.image_size = 12;
  spec.noise_sigma = 0.125f;
  spec.seed = 77;
  bench::save_dataset_spec_file(spec, tmp.file("data.json"));
  const auto s2 = bench::load_dataset_spec_file(tmp.file("data.json"));
  CHECK(s2.classes == 5);
  CHECK(s2.samples_per_class == 7);
  CHECK(s2.image_size == 12);
  CHECK(s2.noise_sigma == 0.125f);
  CHECK(s2.seed == 77);
}

TEST_CASE("untrained loss is exactly ln C thanks to the zero head") {
  const int classes = 8;
  auto arch = bench::desk_manifest(classes, 16);
  auto params = bench::init_params(arch, 42);
  auto model = nn::make_model(arch, params);

  bench::SyntheticDatasetSpec spec;
  spec.classes = classes;
  spec.samples_per_class = 2;
  const auto data = bench::gen_dataset(spec);

  // Zero-initialized classifier gives all-zero logits: softmax is uniform
  // and the cross-entropy equals ln(classes) for every sample.
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = nn::forward(model, data.inputs[i]);
    for (float l : logits) REQUIRE(l == 0.0f);
    loss += std::log(static_cast<double>(classes));
  }
  loss /= static_cast<double>(data.size());
  CHECK(loss == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  CHECK(std::fabs(loss - std::log(8.0)) / std::log(8.0) < 0.20);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  auto arch = bench::desk_manifest(4, 8);
  const auto init = bench::init_params(arch, 5);

  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 4;
  spec.image_size = 8;
  const auto data = bench::gen_dataset(spec);

  bench::TrainHyper hyper;
  hyper.epochs = 2;
  hyper.lr = 0.0f;
  hyper.seed = 5;
  const auto model = bench::train(arch, data, hyper);
  CHECK(ts::write_archive(model.params) == ts::write_archive(init));
}

TEST_CASE("a small CNN learns the synthetic patterns") {
  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 60;
  spec.image_size = 8;
  spec.noise_sigma = 0.2f;
  spec.seed = 21;
  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);

  auto arch = bench::desk_manifest(4, 8);
  bench::TrainHyper hyper;
  hyper.epochs = 6;
  hyper.lr = 0.05f;
  hyper.batch = 16;
  hyper.seed = 3;
  const auto model = bench::train(arch, train, hyper);
  const double acc = nn::accuracy(model, test);
  CHECK(acc > 0.75);

  // Determinism: the same hyperparameters reproduce the archive bit-exactly.
  const auto again = bench::train(arch, train, hyper);
  CHECK(ts::write_archive(model.params) == ts::write_archive(again.params));
}

TEST_CASE("run_experiment with N = 0 reports only the baseline") {
  auto arch = bench::desk_manifest(4, 8);
  auto model = nn::make_model(arch, bench::init_params(arch, 6));
  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 4;
  spec.image_size = 8;
  const auto data = bench::gen_dataset(spec);

  bench::ExperimentConfig cfg;
  cfg.method = bench::Method::dnl;
  cfg.N = 0;
  const auto rep = bench::run_experiment(model, data, cfg);
  CHECK(rep.rows.empty());
  CHECK(rep.per_k.empty());
  CHECK(rep.baseline_acc >= 0.0);
}

TEST_CASE("deterministic experiments reproduce byte-identical reports") {
  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 30;
  spec.image_size = 8;
  spec.seed = 2;
  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);

  auto arch = bench::desk_manifest(4, 8);
  bench::TrainHyper hyper;
  hyper.epochs = 3;
  hyper.batch = 16;
  const auto model = bench::train(arch, train, hyper);

  bench::ExperimentConfig cfg;
  cfg.method = bench::Method::dnl;
  cfg.N = 5;
  cfg.L = 10;
  const auto r1 = bench::run_experiment(model, test, cfg);
  const auto r2 = bench::run_experiment(model, test, cfg);
  CHECK(bench::report_to_json(r1) == bench::report_to_json(r2));

  std::ostringstream c1, c2;
  bench::write_report_csv(r1, c1);
  bench::write_report_csv(r2, c2);
  CHECK(c1.str() == c2.str());
  CHECK(c1.str().rfind("# dnlkit eval-report v1\n", 0) == 0);

  // mAR consistency with the per-k table.
  std::vector<double> ars;
  for (const auto& p : r1.per_k) ars.push_back(p.ar);
  CHECK(bench::mar(ars) == r1.mar_n);
}

TEST_CASE("random experiments aggregate over seeds") {
  auto arch = bench::desk_manifest(4, 8);
  auto model = nn::make_model(arch, bench::init_params(arch, 30));
  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 6;
  spec.image_size = 8;
  const auto data = bench::gen_dataset(spec);

  bench::ExperimentConfig cfg;
  cfg.method = bench::Method::random;
  cfg.N = 3;
  cfg.seeds = {1, 2, 3, 4};
  const auto rep = bench::run_experiment(model, data, cfg);
  CHECK(rep.rows.size() == 12);
  REQUIRE(rep.per_k.size() == 3);
  for (std::uint64_t k = 1; k <= 3; ++k) {
    double mean = 0.0;
    int n = 0;
    for (const auto& row : rep.rows) {
      if (row.k == k) {
        mean += row.acc;
        ++n;
      }
    }
    CHECK(n == 4);
    mean /= 4.0;
    CHECK(rep.per_k[k - 1].acc == doctest::Approx(mean).epsilon(1e-12));
  }

  bench::ExperimentConfig no_seeds = cfg;
  no_seeds.seeds.clear();
  CHECK_THROWS_AS((void)bench::run_experiment(model, data, no_seeds), Error);
}

TEST_CASE("brute force on a single weight gives a single row") {
  auto m = linear_manifest(1, 1);
  auto a = archive({{"fc.weight", {1, 1}, {2.0f}}});
  auto model = nn::make_model(m, a);
  nn::Dataset data;
  data.input_shape = {1};
  data.inputs = {{1.0f}, {2.0f}};
  data.labels = {0, 0};
  const auto table = bench::brute_force_single_flip(model, data, 1);
  REQUIRE(table.size() == 1);
  CHECK(table[0].coord.tensor == "fc.weight");
}

TEST_CASE("flipping signs of zero weights changes nothing") {
  auto m = linear_manifest(2, 3);
  auto a = archive({{"fc.weight", {3, 2}, {0, 0, 0, 0, 0, 0}}});
  auto model = nn::make_model(m, a);
  nn::Dataset data;
  data.input_shape = {2};
  data.inputs = {{1.0f, -1.0f}, {0.5f, 2.0f}};
  data.labels = {0, 0};  // all-zero logits predict class 0
  const auto table = bench::brute_force_single_flip(model, data, 1);
  REQUIRE(table.size() == 6);
  for (const auto& row : table) CHECK(row.ar1 == 0.0);
}

TEST_CASE("brute force agrees with the product evaluation path") {
  bench::SyntheticDatasetSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 30;
  spec.image_size = 8;
  spec.seed = 3;
  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);

  auto arch = bench::desk_manifest(4, 8);
  bench::TrainHyper hyper;
  hyper.epochs = 3;
  hyper.batch = 16;
  const auto model = bench::train(arch, train, hyper);

  const auto eval = bench::head(test, 40);
  const auto table = bench::brute_force_single_flip(model, eval, 10);
  const double acc0 = nn::accuracy(model, eval);

  // Spot-check a spread of ranks against apply + accuracy.
  for (std::size_t pick : {std::size_t{0}, table.size() / 2, table.size() - 1}) {
    lesion::FlipPlan plan;
    plan.method = "dnl";
    plan.k = 1;
    plan.L = 10;
    plan.flips.push_back(lesion::Flip{table[pick].coord, 31});
    auto m2 = nn::make_model(arch, lesion::apply(plan, model.params));
    const double acc = nn::accuracy(m2, eval);
    CHECK(table[pick].ar1 == doctest::Approx(bench::ar(acc0, acc)).epsilon(1e-12));
  }

  // Guard trips on oversized candidate sets.
  CHECK(bench::kBruteForceGuard == 100000);
}

TEST_CASE("pinned desk model: learnability and 1p vs pass-free at k=2") {
  bench::SyntheticDatasetSpec spec;  // the pinned defaults
  const auto all = bench::gen_dataset(spec);
  nn::Dataset train, test;
  bench::split_parity(all, &train, &test);
  const auto arch = bench::desk_manifest(spec.classes, spec.image_size);
  const auto model = bench::train(arch, train, bench::TrainHyper{});

  CHECK(nn::accuracy(model, test) >= 0.90);

  const auto eval = bench::head(test, 512);
  const double acc0 = nn::accuracy(model, eval);
  const auto pd = lesion::plan_dnl(model.manifest, model.params, 2, 10);
  const auto p1 = lesion::plan_1p_dnl(model, 2, 10, 42);
  auto md = nn::make_model(arch, lesion::apply(pd, model.params));
  auto m1 = nn::make_model(arch, lesion::apply(p1, model.params));
  const double ar_dnl = bench::ar(acc0, nn::accuracy(md, eval));
  const double ar_1p = bench::ar(acc0, nn::accuracy(m1, eval));
  CHECK(ar_1p >= ar_dnl);
}

TEST_CASE("percentile uses nearest-rank semantics") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(bench::percentile_nearest_rank(v, 0.95) == 95.0);
  CHECK(bench::percentile_nearest_rank(v, 1.0) == 100.0);
  CHECK(bench::percentile_nearest_rank({5.0}, 0.5) == 5.0);
}
