#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thd/matrix.hpp"

namespace thd {

struct SurvivalRecord {
  double time = 0.0;
  int event = 0;  // 1 = observed, 0 = censored
};

struct LabeledEmbeddingSet {
  std::vector<std::string> ids;
  Matrix embeddings;                     // n x d
  std::vector<int> labels;               // optional, class indices
  std::vector<SurvivalRecord> survival;  // optional
  std::vector<std::string> patients;     // optional, defaults to ids

  int count() const { return embeddings.rows; }
  void validate() const;
};

// ---- linear probing ----

struct LogisticProbeConfig {
  double cost = 0.5;  // inverse regularization; penalty strength is 1/cost
  int max_iter = 10000;
  double tol = 1e-6;
};

struct LinearClassifier {
  Matrix weights;  // k x d
  Matrix bias;     // 1 x k
  int classes = 0;

  Matrix predict_proba(const Matrix& x) const;  // n x k
  std::vector<int> predict(const Matrix& x) const;
};

// Multinomial logistic regression, L2 penalty 1/cost, balanced class weights
// n / (k * n_c), optimized to gradient tolerance or max_iter.
LinearClassifier fit_logistic_probe(const Matrix& x, const std::vector<int>& labels,
                                    const LogisticProbeConfig& cfg = {});

// ---- metrics ----

// Rank-based AUC with ties credited 0.5. labels are 0/1.
double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);
// Unweighted mean of one-vs-rest AUCs; scores is n x k. With k = 2 this equals
// the binary AUC on the positive-class score.
double macro_auc(const Matrix& scores, const std::vector<int>& labels);
double balanced_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);
double quadratic_weighted_kappa(const std::vector<int>& pred,
                                const std::vector<int>& truth, int n_classes);
// Comparable pair: the earlier time has event = 1 (time ties excluded).
// Concordant pairs score 1, risk ties 0.5.
double concordance_index(const std::vector<double>& risks,
                         const std::vector<SurvivalRecord>& records);

// ---- survival regression ----

struct CoxnetConfig {
  double alpha = 0.07;  // 0.07 for overall survival, 0.01 for progression-free
  double tol = 1e-6;
  int max_iter = 10000;
};

struct CoxModel {
  std::vector<double> beta;
  std::vector<double> risk(const Matrix& x) const;  // beta^T x per row
};

// Maximizes the Breslow partial likelihood (mean over samples) minus
// alpha * ||beta||^2 / 2.
CoxModel fit_coxnet(const Matrix& x, const std::vector<SurvivalRecord>& records,
                    const CoxnetConfig& cfg = {});

// ---- retrieval ----

// Neighbors by ascending L2 distance, ties broken by reference index.
double map_at_k(const Matrix& queries, const std::vector<int>& query_labels,
                const Matrix& references, const std::vector<int>& reference_labels,
                int k);

// ---- molecular prompting ----

struct PromptSet {
  Matrix prototypes;            // one row per class
  std::vector<int> class_ids;   // label for each row
};

struct SurvivalPrompts {
  Matrix low_risk;   // 1 x d, longest-surviving uncensored quartile
  Matrix high_risk;  // 1 x d, shortest-surviving uncensored quartile
};

PromptSet build_class_prompts(const Matrix& embeddings, const std::vector<int>& labels);
// Quartile prompts over uncensored records; needs >= 4 uncensored. The group
// size is max(1, floor(n_uncensored / 4)); sorting ties break by index.
SurvivalPrompts build_survival_prompts(const Matrix& embeddings,
                                       const std::vector<SurvivalRecord>& records);

// argmin L2 distance; ties resolve to the lowest class index.
int prompt_classify(const Matrix& query, const PromptSet& prompts);
// d(query, high_risk) - d(query, low_risk). Note the sign: a query close to
// the high-risk prompt gets a *negative* score; downstream concordance is
// computed on the score as defined.
double prompt_risk_score(const Matrix& query, const SurvivalPrompts& prompts);

// ---- clustering ----

// Lloyd's algorithm with k-means++ seeding, 20 restarts, best inertia kept.
std::vector<int> kmeans(const Matrix& x, int k, uint64_t seed);

struct ClusterAgreement {
  double ari = 0.0;
  double mi = 0.0;  // nats
};
ClusterAgreement clustering_agreement(const std::vector<int>& a,
                                      const std::vector<int>& b);

// ---- survival curves ----

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
};
// Product-limit estimator; one point per distinct event time.
std::vector<KmPoint> kaplan_meier(const std::vector<SurvivalRecord>& records);
double km_survival_at(const std::vector<KmPoint>& curve, double time);

struct LogrankResult {
  double chi2 = 0.0;
  double p = 1.0;
};
LogrankResult logrank(const std::vector<SurvivalRecord>& group_a,
                      const std::vector<SurvivalRecord>& group_b);

// ---- splits ----

enum class SplitScheme { KFold, MonteCarlo, OfficialSingle };

struct SplitSpec {
  SplitScheme scheme = SplitScheme::KFold;
  int folds = 5;               // 50 for MonteCarlo per the protocol
  double test_fraction = 0.2;  // 80:20
  bool stratify = true;
  bool group_by_patient = true;
  std::optional<int> fewshot_k;
  uint64_t seed = 0;
};

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

// Label-stratified, patient-grouped splits. With fewshot_k set, the train
// sides are shrunk to k examples per class (test sets unchanged).
std::vector<Split> make_splits(const LabeledEmbeddingSet& set, const SplitSpec& spec);
std::vector<Split> make_fewshot(const std::vector<Split>& parents,
                                const std::vector<int>& labels, int k, uint64_t seed);

// ---- bootstrap ----

struct BootstrapCi {
  double mean = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

// Percentile bootstrap over resampled prediction indices. A resample on which
// the metric throws is redrawn (up to 10 retries), after which the error
// propagates.
BootstrapCi bootstrap_ci(const std::function<double(const std::vector<int>&)>& metric,
                         int n_samples, int replicates, uint64_t seed);

}  // namespace thd
