#include <doctest.h>

#include <cmath>
#include <set>

#include "thd/eval.hpp"
#include "thd/rng.hpp"

using namespace thd;

namespace {

// two gaussian blobs, margin controlled by separation in units of sigma
void make_blobs(int n, double separation, uint64_t seed, Matrix& x,
                std::vector<int>& y) {
  Rng rng(seed);
  x = Matrix(n, 2);
  y.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    y[static_cast<size_t>(i)] = cls;
    const double cx = cls == 0 ? 0.0 : separation;
    x.at(i, 0) = cx + rng.normal();
    x.at(i, 1) = rng.normal();
  }
}

}  // namespace

TEST_CASE("logistic probe: tiny cost shrinks the weights") {
  Matrix x;
  std::vector<int> y;
  make_blobs(40, 4.0, 51, x, y);
  LogisticProbeConfig cfg;
  cfg.cost = 1e-6;
  LinearClassifier clf = fit_logistic_probe(x, y, cfg);
  CHECK(frobenius_norm(clf.weights) < 1e-2);
}

TEST_CASE("logistic probe: separable blobs reach 0.99 train accuracy") {
  Matrix x;
  std::vector<int> y;
  make_blobs(100, 8.0, 52, x, y);  // centers 8 sigma apart: a 4-sigma margin
  LinearClassifier clf = fit_logistic_probe(x, y);
  std::vector<int> pred = clf.predict(x);
  int correct = 0;
  for (size_t i = 0; i < y.size(); ++i)
    if (pred[i] == y[i]) ++correct;
  CHECK(static_cast<double>(correct) / static_cast<double>(y.size()) >= 0.99);
}

TEST_CASE("logistic probe: permuted labels give chance-level held-out AUC") {
  double auc_sum = 0.0;
  int runs = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    Matrix x(60, 3);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) {
      y[static_cast<size_t>(i)] = i % 2;
      for (int j = 0; j < 3; ++j) x.at(i, j) = rng.normal();
    }
    // train on the first 40, evaluate on the rest
    Matrix train_x(40, 3), test_x(20, 3);
    std::vector<int> train_y(40), test_y(20);
    for (int i = 0; i < 40; ++i) {
      train_y[static_cast<size_t>(i)] = y[static_cast<size_t>(i)];
      for (int j = 0; j < 3; ++j) train_x.at(i, j) = x.at(i, j);
    }
    for (int i = 0; i < 20; ++i) {
      test_y[static_cast<size_t>(i)] = y[static_cast<size_t>(40 + i)];
      for (int j = 0; j < 3; ++j) test_x.at(i, j) = x.at(40 + i, j);
    }
    LinearClassifier clf = fit_logistic_probe(train_x, train_y);
    Matrix proba = clf.predict_proba(test_x);
    std::vector<double> scores(20);
    for (int i = 0; i < 20; ++i) scores[static_cast<size_t>(i)] = proba.at(i, 1);
    auc_sum += auc_binary(scores, test_y);
    ++runs;
  }
  const double mean_auc = auc_sum / runs;
  CHECK(mean_auc > 0.4);
  CHECK(mean_auc < 0.6);
}

TEST_CASE("logistic probe: zero-variance features are tolerated") {
  Matrix x;
  std::vector<int> y;
  make_blobs(40, 8.0, 59, x, y);
  Matrix with_constant(40, 3);
  for (int i = 0; i < 40; ++i) {
    with_constant.at(i, 0) = x.at(i, 0);
    with_constant.at(i, 1) = x.at(i, 1);
    with_constant.at(i, 2) = 7.0;  // degenerate column
  }
  LinearClassifier clf = fit_logistic_probe(with_constant, y);
  CHECK(balanced_accuracy(clf.predict(with_constant), y) >= 0.99);
}

TEST_CASE("logistic probe: balanced weights and label relabeling") {
  Matrix x;
  std::vector<int> y;
  make_blobs(60, 4.0, 53, x, y);
  LinearClassifier clf = fit_logistic_probe(x, y);
  std::vector<int> flipped(y.size());
  for (size_t i = 0; i < y.size(); ++i) flipped[i] = 1 - y[i];
  LinearClassifier clf2 = fit_logistic_probe(x, flipped);
  std::vector<int> p1 = clf.predict(x);
  std::vector<int> p2 = clf2.predict(x);
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == 1 - p2[i]);

  CHECK_THROWS_AS(fit_logistic_probe(x, std::vector<int>(60, 0)), ValidationError);
}

TEST_CASE("coxnet: zero-variance features stay at beta = 0") {
  Matrix x = Matrix::full(30, 3, 2.5);
  std::vector<SurvivalRecord> recs;
  Rng rng(54);
  for (int i = 0; i < 30; ++i) recs.push_back({0.5 + rng.uniform(), 1});
  CoxModel model = fit_coxnet(x, recs, CoxnetConfig{});
  for (double b : model.beta) CHECK(std::abs(b) < 1e-6);
}

TEST_CASE("coxnet: a feature equal to -time earns positive beta and high C") {
  Rng rng(55);
  const int n = 60;
  Matrix x(n, 1);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < n; ++i) {
    const double t = 0.1 + 5.0 * rng.uniform();
    x.at(i, 0) = -t;
    recs.push_back({t, 1});
  }
  CoxModel model = fit_coxnet(x, recs, CoxnetConfig{});
  CHECK(model.beta[0] > 0.0);
  CHECK(concordance_index(model.risk(x), recs) >= 0.95);
}

TEST_CASE("coxnet: a huge penalty crushes beta") {
  Rng rng(56);
  Matrix x(40, 2);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 40; ++i) {
    x.at(i, 0) = rng.normal();
    x.at(i, 1) = rng.normal();
    recs.push_back({0.1 + rng.uniform(), 1});
  }
  CoxnetConfig cfg;
  cfg.alpha = 1e6;
  CoxModel model = fit_coxnet(x, recs, cfg);
  CHECK(std::sqrt(model.beta[0] * model.beta[0] + model.beta[1] * model.beta[1]) < 1e-3);

  std::vector<SurvivalRecord> no_events(40, SurvivalRecord{1.0, 0});
  CHECK_THROWS_AS(fit_coxnet(x, no_events, cfg), ValidationError);
}

TEST_CASE("kmeans: separated blobs, degenerate k = n, determinism") {
  Rng rng(57);
  const int n = 40;
  Matrix x(n, 2);
  std::vector<int> truth(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    truth[static_cast<size_t>(i)] = cls;
    x.at(i, 0) = (cls == 0 ? 0.0 : 20.0) + rng.normal();
    x.at(i, 1) = rng.normal();
  }
  std::vector<int> assign = kmeans(x, 2, 7);
  CHECK(clustering_agreement(assign, truth).ari == doctest::Approx(1.0));

  Matrix tiny(3, 1, {0.0, 5.0, 9.0});
  std::vector<int> each_own = kmeans(tiny, 3, 7);
  std::set<int> distinct(each_own.begin(), each_own.end());
  CHECK(distinct.size() == 3);

  std::vector<int> again = kmeans(x, 2, 7);
  CHECK(assign == again);

  CHECK_THROWS_AS(kmeans(tiny, 4, 7), ValidationError);
}

TEST_CASE("class prompts: means, single-profile classes, tie rule") {
  Matrix emb(4, 2, {0, 0, 2, 2, 10, 0, 12, 2});
  std::vector<int> labels{0, 0, 1, 1};
  PromptSet prompts = build_class_prompts(emb, labels);
  CHECK(prompts.prototypes.at(0, 0) == doctest::Approx(1.0));
  CHECK(prompts.prototypes.at(0, 1) == doctest::Approx(1.0));
  CHECK(prompts.prototypes.at(1, 0) == doctest::Approx(11.0));

  Matrix one_each(2, 2, {1, 2, 5, 6});
  PromptSet single = build_class_prompts(one_each, {3, 9});
  CHECK(single.prototypes.at(0, 0) == 1.0);
  CHECK(single.class_ids == std::vector<int>{3, 9});

  Matrix q(1, 2, {1, 1});
  CHECK(prompt_classify(q, prompts) == 0);
  Matrix equidistant(1, 2, {6, 1});
  CHECK(prompt_classify(equidistant, prompts) == 0);  // tie -> lowest class index
}

TEST_CASE("prompt classification is invariant to a global isometry") {
  Rng rng(58);
  Matrix emb(12, 2);
  std::vector<int> labels(12);
  for (int i = 0; i < 12; ++i) {
    labels[static_cast<size_t>(i)] = i % 3;
    emb.at(i, 0) = 4.0 * labels[static_cast<size_t>(i)] + rng.normal();
    emb.at(i, 1) = rng.normal();
  }
  PromptSet prompts = build_class_prompts(emb, labels);

  const double theta = 0.83;
  auto rotate = [&](const Matrix& m) {
    Matrix out = m;
    for (int i = 0; i < m.rows; ++i) {
      const double a = m.at(i, 0), b = m.at(i, 1);
      out.at(i, 0) = std::cos(theta) * a - std::sin(theta) * b + 5.0;
      out.at(i, 1) = std::sin(theta) * a + std::cos(theta) * b - 3.0;
    }
    return out;
  };
  PromptSet rotated = build_class_prompts(rotate(emb), labels);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix q(1, 2, {rng.uniform(-5.0, 13.0), rng.uniform(-4.0, 4.0)});
    CHECK(prompt_classify(q, prompts) == prompt_classify(rotate(q), rotated));
  }
}

TEST_CASE("survival prompts: quartile construction and risk sign") {
  Matrix emb(8, 1, {1, 2, 3, 4, 5, 6, 7, 8});
  std::vector<SurvivalRecord> recs;
  for (int i = 1; i <= 8; ++i) recs.push_back({static_cast<double>(i), 1});
  SurvivalPrompts prompts = build_survival_prompts(emb, recs);
  // times 1..8: high risk = mean of {1, 2} rows, low risk = mean of {7, 8}
  CHECK(prompts.high_risk.at(0, 0) == doctest::Approx(1.5));
  CHECK(prompts.low_risk.at(0, 0) == doctest::Approx(7.5));

  Matrix at_high = prompts.high_risk;
  Matrix at_low = prompts.low_risk;
  const double gap = std::abs(prompts.high_risk.at(0, 0) - prompts.low_risk.at(0, 0));
  CHECK(prompt_risk_score(at_high, prompts) == doctest::Approx(-gap));
  CHECK(prompt_risk_score(at_low, prompts) == doctest::Approx(gap));
  Matrix mid(1, 1, {(1.5 + 7.5) / 2.0});
  CHECK(prompt_risk_score(mid, prompts) == doctest::Approx(0.0));

  std::vector<SurvivalRecord> few{{1, 1}, {2, 1}, {3, 1}, {4, 0}};
  CHECK_THROWS_AS(build_survival_prompts(Matrix(4, 1), few), ValidationError);
}

TEST_CASE("splits: stratified kfold counts, patient grouping, coverage") {
  LabeledEmbeddingSet set;
  const int n = 100;
  set.embeddings = Matrix(n, 2);
  for (int i = 0; i < n; ++i) {
    set.ids.push_back("s" + std::to_string(i));
    set.labels.push_back(i % 2);
    set.patients.push_back("p" + std::to_string(i));
  }
  SplitSpec spec;
  spec.scheme = SplitScheme::KFold;
  spec.folds = 5;
  spec.seed = 3;
  std::vector<Split> folds = make_splits(set, spec);
  REQUIRE(folds.size() == 5);
  std::set<int> all_test;
  for (const Split& f : folds) {
    CHECK(f.test.size() == 20);
    int per_class[2] = {0, 0};
    for (int i : f.test) {
      per_class[set.labels[static_cast<size_t>(i)]]++;
      all_test.insert(i);
      CHECK(std::find(f.train.begin(), f.train.end(), i) == f.train.end());
    }
    CHECK(per_class[0] == 10);
    CHECK(per_class[1] == 10);
    CHECK(f.train.size() + f.test.size() == static_cast<size_t>(n));
  }
  CHECK(all_test.size() == static_cast<size_t>(n));  // folds partition the data
}

TEST_CASE("splits: a patient's slides never straddle train and test") {
  LabeledEmbeddingSet set;
  const int n = 30;
  set.embeddings = Matrix(n, 1);
  for (int i = 0; i < n; ++i) {
    set.ids.push_back("s" + std::to_string(i));
    set.labels.push_back(i % 2);
    set.patients.push_back("p" + std::to_string(i / 3));  // 3 slides per patient
  }
  SplitSpec spec;
  spec.scheme = SplitScheme::MonteCarlo;
  spec.folds = 8;
  spec.seed = 4;
  std::vector<Split> folds = make_splits(set, spec);
  REQUIRE(folds.size() == 8);
  for (const Split& f : folds) {
    std::set<std::string> train_patients, test_patients;
    for (int i : f.train) train_patients.insert(set.patients[static_cast<size_t>(i)]);
    for (int i : f.test) test_patients.insert(set.patients[static_cast<size_t>(i)]);
    for (const std::string& p : test_patients) CHECK(train_patients.count(p) == 0);
  }
}

TEST_CASE("splits: fewshot keeps k per class, test set unchanged") {
  LabeledEmbeddingSet set;
  const int n = 60;
  set.embeddings = Matrix(n, 1);
  for (int i = 0; i < n; ++i) {
    set.ids.push_back("s" + std::to_string(i));
    set.labels.push_back(i % 3);
  }
  SplitSpec spec;
  spec.scheme = SplitScheme::KFold;
  spec.folds = 5;
  spec.seed = 5;
  std::vector<Split> parents = make_splits(set, spec);
  std::vector<Split> shrunk = make_fewshot(parents, set.labels, 2, 6);
  REQUIRE(shrunk.size() == parents.size());
  for (size_t f = 0; f < shrunk.size(); ++f) {
    CHECK(shrunk[f].test == parents[f].test);
    CHECK(shrunk[f].train.size() == 6);  // 2 per class, 3 classes
    int per_class[3] = {0, 0, 0};
    for (int i : shrunk[f].train) {
      per_class[set.labels[static_cast<size_t>(i)]]++;
      CHECK(std::find(parents[f].train.begin(), parents[f].train.end(), i) !=
            parents[f].train.end());
    }
    for (int c = 0; c < 3; ++c) CHECK(per_class[c] == 2);
  }
  CHECK_THROWS_AS(make_fewshot(parents, set.labels, 100, 6), ValidationError);
}

TEST_CASE("splits: infeasible stratification is rejected") {
  LabeledEmbeddingSet set;
  set.embeddings = Matrix(6, 1);
  for (int i = 0; i < 6; ++i) {
    set.ids.push_back("s" + std::to_string(i));
    set.labels.push_back(i == 0 ? 1 : 0);  // class 1 has one member
  }
  SplitSpec spec;
  spec.scheme = SplitScheme::KFold;
  spec.folds = 5;
  CHECK_THROWS_AS(make_splits(set, spec), ValidationError);
}

TEST_CASE("official-single scheme yields one fold") {
  LabeledEmbeddingSet set;
  set.embeddings = Matrix(20, 1);
  for (int i = 0; i < 20; ++i) {
    set.ids.push_back("s" + std::to_string(i));
    set.labels.push_back(i % 2);
  }
  SplitSpec spec;
  spec.scheme = SplitScheme::OfficialSingle;
  spec.seed = 8;
  std::vector<Split> folds = make_splits(set, spec);
  REQUIRE(folds.size() == 1);
  CHECK(folds[0].test.size() == 4);  // 20% of each class
}

TEST_CASE("bootstrap: constant metric, coverage, determinism") {
  auto constant = [](const std::vector<int>&) { return 0.7; };
  BootstrapCi flat = bootstrap_ci(constant, 50, 100, 1);
  CHECK(flat.mean == doctest::Approx(0.7));
  CHECK(flat.lo95 == doctest::Approx(0.7));
  CHECK(flat.hi95 == doctest::Approx(0.7));

  std::vector<double> values(100);
  for (int i = 0; i < 100; ++i) values[static_cast<size_t>(i)] = i + 1.0;
  auto mean_metric = [&](const std::vector<int>& idx) {
    double s = 0.0;
    for (int i : idx) s += values[static_cast<size_t>(i)];
    return s / static_cast<double>(idx.size());
  };
  BootstrapCi ci = bootstrap_ci(mean_metric, 100, 100, 2);
  CHECK(ci.lo95 < 50.5);
  CHECK(ci.hi95 > 50.5);

  BootstrapCi again = bootstrap_ci(mean_metric, 100, 100, 2);
  CHECK(ci.mean == again.mean);
  CHECK(ci.lo95 == again.lo95);
  CHECK(ci.hi95 == again.hi95);

  // metrics that always throw exhaust the retry budget
  auto broken = [](const std::vector<int>&) -> double {
    throw ValidationError("undefined");
  };
  CHECK_THROWS(bootstrap_ci(broken, 10, 5, 3));
}
