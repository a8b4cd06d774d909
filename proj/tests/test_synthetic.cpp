#include <doctest.h>

#include <cmath>
#include <numeric>

#include "thd/eval.hpp"
#include "thd/trainer.hpp"
#include "thd/synthetic.hpp"

using namespace thd;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.n_samples = 48;
  cfg.n_classes = 4;
  cfg.latent_dim = 4;
  cfg.patch_dim = 12;
  cfg.bag_min = 3;
  cfg.bag_max = 6;
  cfg.gene_count = 8;
  cfg.noise = 0.4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generation is seed-deterministic and stratified") {
  GeneratorConfig cfg = small_config();
  auto a = generate_dataset(cfg);
  auto b = generate_dataset(cfg);
  REQUIRE(a.size() == 48);
  int counts[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].bag.patches.data == b[i].bag.patches.data);
    CHECK(a[i].survival.time == b[i].survival.time);
    counts[a[i].label]++;
  }
  for (int c = 0; c < 4; ++c) CHECK(counts[c] == 12);

  GeneratorConfig other = cfg;
  other.seed = 6;
  auto c = generate_dataset(other);
  bool any_diff = false;
  for (size_t i = 0; i < a.size() && !any_diff; ++i)
    any_diff = a[i].bag.patches.data != c[i].bag.patches.data;
  CHECK(any_diff);
}

TEST_CASE("zero noise with unit bags collapses a class to one point") {
  GeneratorConfig cfg = small_config();
  cfg.noise = 0.0;
  cfg.label_noise = 0.0;
  cfg.bag_min = 1;
  cfg.bag_max = 1;
  cfg.n_classes = 2;
  cfg.n_samples = 8;
  auto samples = generate_dataset(cfg);
  for (size_t i = 2; i < samples.size(); ++i) {
    const auto& ref = samples[static_cast<size_t>(samples[i].label)].bag.patches;
    CHECK(samples[i].bag.patches.data == ref.data);
  }
}

TEST_CASE("censor_rate zero observes every event") {
  GeneratorConfig cfg = small_config();
  cfg.censor_rate = 0.0;
  for (const PairedSample& s : generate_dataset(cfg)) {
    CHECK(s.survival.event == 1);
    CHECK(s.survival.time > 0.0);
  }
  cfg.censor_rate = 0.5;
  int censored = 0;
  for (const PairedSample& s : generate_dataset(cfg)) censored += 1 - s.survival.event;
  CHECK(censored > 5);
}

TEST_CASE("bag sizes stay inside the configured range") {
  GeneratorConfig cfg = small_config();
  for (const PairedSample& s : generate_dataset(cfg)) {
    CHECK(s.bag.patches.rows >= cfg.bag_min);
    CHECK(s.bag.patches.rows <= cfg.bag_max);
    CHECK(s.bag.patches.cols == cfg.patch_dim);
  }
}

TEST_CASE("the planted structure is linearly separable from raw bag means") {
  GeneratorConfig cfg = small_config();
  cfg.n_samples = 80;
  cfg.noise = 0.3;
  auto samples = generate_dataset(cfg);
  Matrix means(80, cfg.patch_dim);
  std::vector<int> labels;
  for (size_t i = 0; i < samples.size(); ++i) {
    labels.push_back(samples[i].label);
    for (int p = 0; p < samples[i].bag.patches.rows; ++p)
      for (int j = 0; j < cfg.patch_dim; ++j)
        means.at(static_cast<int>(i), j) +=
            samples[i].bag.patches.at(p, j) / samples[i].bag.patches.rows;
  }
  LinearClassifier clf = fit_logistic_probe(means, labels);
  CHECK(balanced_accuracy(clf.predict(means), labels) >= 0.95);
}

TEST_CASE("holdout recall: chance for random encoders") {
  GeneratorConfig cfg = small_config();
  cfg.n_samples = 40;
  auto samples = generate_dataset(cfg);

  ModelConfig mc;
  mc.slide.input_dim = cfg.patch_dim;
  mc.slide.hidden_dim = 8;
  mc.slide.heads = 2;
  mc.slide.output_dim = 8;
  mc.mode = MolecularMode::Genomic;
  mc.genomic.gene_count = cfg.gene_count;
  mc.genomic.hidden_dim = 8;
  mc.genomic.output_dim = 8;

  // untrained encoders stay near chance (0.25 for four balanced classes);
  // average a few seeds to keep the band tight
  double recall_sum = 0.0;
  for (uint64_t seed = 0; seed < 4; ++seed)
    recall_sum += holdout_pair_recall(init_model(mc, 40 + seed), samples, 1);
  const double mean_recall = recall_sum / 4.0;
  CHECK(mean_recall > 0.10);
  CHECK(mean_recall < 0.45);

  CHECK_THROWS_AS(holdout_pair_recall(init_model(mc, 1), {}, 1), ValidationError);
}

TEST_CASE("holdout recall: trained model beats chance, shuffled pairing restores it") {
  GeneratorConfig cfg = small_config();
  cfg.n_samples = 72;
  cfg.noise = 0.5;
  auto samples = generate_dataset(cfg);
  std::vector<PairedSample> train(samples.begin(), samples.begin() + 48);
  std::vector<PairedSample> held(samples.begin() + 48, samples.end());

  ModelConfig mc;
  mc.slide.input_dim = cfg.patch_dim;
  mc.slide.hidden_dim = 12;
  mc.slide.heads = 2;
  mc.slide.output_dim = 8;
  mc.mode = MolecularMode::Genomic;
  mc.genomic.gene_count = cfg.gene_count;
  mc.genomic.hidden_dim = 16;
  mc.genomic.output_dim = 8;
  TrainConfig tc;
  tc.batch_size = 12;
  tc.max_epochs = 14;
  tc.warmup_epochs = 3;
  tc.patches_per_slide = 4;
  tc.peak_lr = 3e-3;
  tc.final_lr = 1e-5;
  tc.seed = 5;
  std::vector<TrainPair> pairs;
  for (const PairedSample& s : train) pairs.push_back({s.bag, s.molecular});
  PretrainResult result = pretrain_fit(pairs, mc, tc);

  const double trained = holdout_pair_recall(result.state, held, 1);
  CHECK(trained >= 0.5);  // chance is 0.25

  // break the pairing: profiles move to other samples, labels stay with bags
  Rng perm_rng(17);
  double shuffled_mean = 0.0;
  const int n_perm = 20;
  for (int p = 0; p < n_perm; ++p) {
    std::vector<PairedSample> broken = held;
    std::vector<int> order(held.size());
    std::iota(order.begin(), order.end(), 0);
    perm_rng.shuffle(order);
    for (size_t i = 0; i < held.size(); ++i)
      broken[i].molecular = held[static_cast<size_t>(order[i])].molecular;
    shuffled_mean += holdout_pair_recall(result.state, broken, 1) / n_perm;
  }
  CHECK(shuffled_mean > 0.13);
  CHECK(shuffled_mean < 0.37);
}
