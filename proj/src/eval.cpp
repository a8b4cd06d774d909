#include "thd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "thd/optim.hpp"
#include "thd/rng.hpp"

namespace thd {

void LabeledEmbeddingSet::validate() const {
  const size_t n = static_cast<size_t>(embeddings.rows);
  if (n == 0) throw ValidationError("embedding set: empty");
  if (ids.size() != n) throw ValidationError("embedding set: ids/count mismatch");
  if (!labels.empty() && labels.size() != n)
    throw ValidationError("embedding set: labels/count mismatch");
  if (!survival.empty() && survival.size() != n)
    throw ValidationError("embedding set: survival/count mismatch");
  if (!patients.empty() && patients.size() != n)
    throw ValidationError("embedding set: patients/count mismatch");
  for (const SurvivalRecord& r : survival)
    if (!(r.time > 0.0) || (r.event != 0 && r.event != 1))
      throw ValidationError("embedding set: survival needs time > 0 and event in {0,1}");
}

// ---- linear probing ----

Matrix LinearClassifier::predict_proba(const Matrix& x) const {
  Matrix logits = matmul(x, transpose(weights));
  logits = add_row_broadcast(logits, bias);
  return softmax_rows(logits);
}

std::vector<int> LinearClassifier::predict(const Matrix& x) const {
  Matrix p = predict_proba(x);
  std::vector<int> out(static_cast<size_t>(p.rows), 0);
  for (int i = 0; i < p.rows; ++i) {
    int best = 0;
    for (int c = 1; c < p.cols; ++c)
      if (p.at(i, c) > p.at(i, best)) best = c;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

LinearClassifier fit_logistic_probe(const Matrix& x, const std::vector<int>& labels,
                                    const LogisticProbeConfig& cfg) {
  if (static_cast<size_t>(x.rows) != labels.size() || x.rows == 0)
    throw ValidationError("fit_logistic_probe: rows/labels mismatch");
  if (cfg.cost <= 0.0) throw ValidationError("fit_logistic_probe: cost must be > 0");
  int k = 0;
  for (int y : labels) {
    if (y < 0) throw ValidationError("fit_logistic_probe: negative label");
    k = std::max(k, y + 1);
  }
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2)
    throw ValidationError("fit_logistic_probe: need at least two classes present");

  const int n = x.rows, d = x.cols;
  std::vector<double> class_w(static_cast<size_t>(k), 0.0);
  std::vector<int> counts(static_cast<size_t>(k), 0);
  for (int y : labels) counts[static_cast<size_t>(y)]++;
  for (int c = 0; c < k; ++c)
    if (counts[static_cast<size_t>(c)] > 0)
      class_w[static_cast<size_t>(c)] =
          static_cast<double>(n) /
          (static_cast<double>(present.size()) * counts[static_cast<size_t>(c)]);

  const double penalty = 1.0 / cfg.cost;
  const size_t nw = static_cast<size_t>(k) * d;
  std::vector<double> theta(nw + static_cast<size_t>(k), 0.0);  // W row-major, then bias

  auto objective = [&](const std::vector<double>& t, std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
    double loss = 0.0;
    std::vector<double> logits(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) {
        double z = t[nw + static_cast<size_t>(c)];
        for (int j = 0; j < d; ++j)
          z += t[static_cast<size_t>(c) * d + j] * x.at(i, j);
        logits[static_cast<size_t>(c)] = z;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        logits[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - mx);
        sum += logits[static_cast<size_t>(c)];
      }
      const int y = labels[static_cast<size_t>(i)];
      const double w = class_w[static_cast<size_t>(y)];
      loss -= w * std::log(std::max(logits[static_cast<size_t>(y)] / sum, 1e-300));
      for (int c = 0; c < k; ++c) {
        const double p = logits[static_cast<size_t>(c)] / sum;
        const double delta = w * (p - (c == y ? 1.0 : 0.0));
        g[nw + static_cast<size_t>(c)] += delta;
        for (int j = 0; j < d; ++j)
          g[static_cast<size_t>(c) * d + j] += delta * x.at(i, j);
      }
    }
    for (size_t idx = 0; idx < nw; ++idx) {  // bias excluded from the penalty
      loss += 0.5 * penalty * t[idx] * t[idx];
      g[idx] += penalty * t[idx];
    }
    return loss;
  };

  LbfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.tol;
  lbfgs_minimize(theta, objective, opts);

  LinearClassifier out;
  out.classes = k;
  out.weights = Matrix(k, d);
  out.bias = Matrix(1, k);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j)
      out.weights.at(c, j) = theta[static_cast<size_t>(c) * d + j];
    out.bias.at(0, c) = theta[nw + static_cast<size_t>(c)];
  }
  return out;
}

// ---- metrics ----

double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("auc_binary: scores/labels mismatch");
  size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1)
      ++n_pos;
    else if (y == 0)
      ++n_neg;
    else
      throw ValidationError("auc_binary: labels must be 0/1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("auc_binary: both classes must be present");

  // mid-rank formulation; tied scores share the average rank (0.5 credit)
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size(), 0.0);
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (size_t t = 0; t < scores.size(); ++t)
    if (labels[t] == 1) rank_sum += rank[t];
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double macro_auc(const Matrix& scores, const std::vector<int>& labels) {
  if (static_cast<size_t>(scores.rows) != labels.size() || scores.rows == 0)
    throw ValidationError("macro_auc: scores/labels mismatch");
  const int k = scores.cols;
  if (k < 2) throw ValidationError("macro_auc: need at least two score columns");
  std::vector<int> counts(static_cast<size_t>(k), 0);
  for (int y : labels) {
    if (y < 0 || y >= k) throw ValidationError("macro_auc: label out of range");
    counts[static_cast<size_t>(y)]++;
  }
  for (int c = 0; c < k; ++c)
    if (counts[static_cast<size_t>(c)] == 0)
      throw ValidationError("macro_auc: class " + std::to_string(c) + " absent");
  if (k == 2) {
    std::vector<double> col(labels.size());
    for (size_t r = 0; r < labels.size(); ++r) col[r] = scores.at(static_cast<int>(r), 1);
    return auc_binary(col, labels);
  }
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> col(labels.size());
    std::vector<int> onevs(labels.size());
    for (size_t r = 0; r < labels.size(); ++r) {
      col[r] = scores.at(static_cast<int>(r), c);
      onevs[r] = labels[r] == c ? 1 : 0;
    }
    total += auc_binary(col, onevs);
  }
  return total / k;
}

double balanced_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw ValidationError("balanced_accuracy: empty or mismatched inputs");
  std::map<int, std::pair<int, int>> per_class;  // class -> (correct, total)
  for (size_t i = 0; i < truth.size(); ++i) {
    auto& [correct, total] = per_class[truth[i]];
    ++total;
    if (pred[i] == truth[i]) ++correct;
  }
  double recall_sum = 0.0;
  for (const auto& [cls, ct] : per_class)
    recall_sum += static_cast<double>(ct.first) / ct.second;
  return recall_sum / static_cast<double>(per_class.size());
}

double quadratic_weighted_kappa(const std::vector<int>& pred,
                                const std::vector<int>& truth, int n_classes) {
  if (pred.size() != truth.size() || pred.empty())
    throw ValidationError("quadratic_weighted_kappa: empty or mismatched inputs");
  if (n_classes < 2) throw ValidationError("quadratic_weighted_kappa: need k >= 2");
  const double n = static_cast<double>(pred.size());
  Matrix observed(n_classes, n_classes);
  std::vector<double> truth_marginal(static_cast<size_t>(n_classes), 0.0);
  std::vector<double> pred_marginal(static_cast<size_t>(n_classes), 0.0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes)
      throw ValidationError("quadratic_weighted_kappa: label out of range");
    observed.at(truth[i], pred[i]) += 1.0;
    truth_marginal[static_cast<size_t>(truth[i])] += 1.0;
    pred_marginal[static_cast<size_t>(pred[i])] += 1.0;
  }
  const double denom_w = static_cast<double>(n_classes - 1) * (n_classes - 1);
  double wo = 0.0, we = 0.0;
  for (int a = 0; a < n_classes; ++a)
    for (int b = 0; b < n_classes; ++b) {
      const double w = static_cast<double>(a - b) * (a - b) / denom_w;
      wo += w * observed.at(a, b);
      we += w * truth_marginal[static_cast<size_t>(a)] *
            pred_marginal[static_cast<size_t>(b)] / n;
    }
  if (we == 0.0)
    throw ValidationError("quadratic_weighted_kappa: degenerate marginals");
  return 1.0 - wo / we;
}

double concordance_index(const std::vector<double>& risks,
                         const std::vector<SurvivalRecord>& records) {
  if (risks.size() != records.size() || risks.empty())
    throw ValidationError("concordance_index: risks/records mismatch");
  double comparable = 0.0, score = 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    for (size_t j = 0; j < records.size(); ++j) {
      if (i == j) continue;
      // pair (i earlier, j later) is comparable when the earlier has the event
      if (!(records[i].time < records[j].time) || records[i].event != 1) continue;
      comparable += 1.0;
      if (risks[i] > risks[j])
        score += 1.0;
      else if (risks[i] == risks[j])
        score += 0.5;
    }
  }
  if (comparable == 0.0)
    throw ValidationError("concordance_index: no comparable pairs");
  return score / comparable;
}

// ---- survival regression ----

std::vector<double> CoxModel::risk(const Matrix& x) const {
  if (static_cast<size_t>(x.cols) != beta.size())
    throw ValidationError("CoxModel::risk: dimension mismatch");
  std::vector<double> out(static_cast<size_t>(x.rows), 0.0);
  for (int i = 0; i < x.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < x.cols; ++j) s += beta[static_cast<size_t>(j)] * x.at(i, j);
    out[static_cast<size_t>(i)] = s;
  }
  return out;
}

CoxModel fit_coxnet(const Matrix& x, const std::vector<SurvivalRecord>& records,
                    const CoxnetConfig& cfg) {
  if (static_cast<size_t>(x.rows) != records.size() || x.rows == 0)
    throw ValidationError("fit_coxnet: rows/records mismatch");
  int n_events = 0;
  for (const SurvivalRecord& r : records) {
    if (!(r.time > 0.0)) throw ValidationError("fit_coxnet: times must be > 0");
    n_events += r.event;
  }
  if (n_events == 0) throw ValidationError("fit_coxnet: no observed events");
  if (cfg.alpha < 0.0) throw ValidationError("fit_coxnet: alpha must be >= 0");

  const int n = x.rows, d = x.cols;
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // descending time so the risk set of each event is a prefix
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (records[static_cast<size_t>(a)].time != records[static_cast<size_t>(b)].time)
      return records[static_cast<size_t>(a)].time > records[static_cast<size_t>(b)].time;
    return a < b;
  });

  // negative mean Breslow partial log-likelihood plus ridge penalty
  auto objective = [&](const std::vector<double>& beta, std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
    std::vector<double> eta(static_cast<size_t>(n), 0.0);
    double eta_max = -1e300;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += beta[static_cast<size_t>(j)] * x.at(i, j);
      eta[static_cast<size_t>(i)] = s;
      eta_max = std::max(eta_max, s);
    }
    double ll = 0.0;
    double denom = 0.0;
    std::vector<double> weighted_x(static_cast<size_t>(d), 0.0);
    size_t pos = 0;
    while (pos < order.size()) {
      const double t = records[static_cast<size_t>(order[pos])].time;
      size_t group_end = pos;
      while (group_end < order.size() &&
             records[static_cast<size_t>(order[group_end])].time == t)
        ++group_end;
      // ties join the risk set before their events are scored (Breslow)
      for (size_t q = pos; q < group_end; ++q) {
        const int idx = order[q];
        const double w = std::exp(eta[static_cast<size_t>(idx)] - eta_max);
        denom += w;
        for (int j = 0; j < d; ++j)
          weighted_x[static_cast<size_t>(j)] += w * x.at(idx, j);
      }
      for (size_t q = pos; q < group_end; ++q) {
        const int idx = order[q];
        if (records[static_cast<size_t>(idx)].event != 1) continue;
        ll += eta[static_cast<size_t>(idx)] - (eta_max + std::log(denom));
        for (int j = 0; j < d; ++j)
          g[static_cast<size_t>(j)] -=
              x.at(idx, j) - weighted_x[static_cast<size_t>(j)] / denom;
      }
      pos = group_end;
    }
    double obj = -ll / n;
    for (int j = 0; j < d; ++j) {
      g[static_cast<size_t>(j)] /= n;
      obj += 0.5 * cfg.alpha * beta[static_cast<size_t>(j)] * beta[static_cast<size_t>(j)];
      g[static_cast<size_t>(j)] += cfg.alpha * beta[static_cast<size_t>(j)];
    }
    return obj;
  };

  CoxModel model;
  model.beta.assign(static_cast<size_t>(d), 0.0);
  LbfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.tol;
  lbfgs_minimize(model.beta, objective, opts);
  return model;
}

// ---- retrieval ----

double map_at_k(const Matrix& queries, const std::vector<int>& query_labels,
                const Matrix& references, const std::vector<int>& reference_labels,
                int k) {
  if (references.rows == 0) throw ValidationError("map_at_k: empty reference set");
  if (k < 1 || k > references.rows)
    throw ValidationError("map_at_k: need 1 <= k <= reference count");
  if (queries.cols != references.cols)
    throw ValidationError("map_at_k: embedding dims differ");
  if (static_cast<size_t>(queries.rows) != query_labels.size() ||
      static_cast<size_t>(references.rows) != reference_labels.size())
    throw ValidationError("map_at_k: labels misaligned");
  if (queries.rows == 0) throw ValidationError("map_at_k: empty query set");

  double total = 0.0;
  for (int qi = 0; qi < queries.rows; ++qi) {
    std::vector<std::pair<double, int>> dist(static_cast<size_t>(references.rows));
    for (int ri = 0; ri < references.rows; ++ri)
      dist[static_cast<size_t>(ri)] = {l2_distance_rows(queries, qi, references, ri), ri};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double hits = 0.0, ap = 0.0;
    for (int j = 0; j < k; ++j) {
      const int rlabel = reference_labels[static_cast<size_t>(dist[static_cast<size_t>(j)].second)];
      if (rlabel == query_labels[static_cast<size_t>(qi)]) {
        hits += 1.0;
        ap += hits / static_cast<double>(j + 1);
      }
    }
    total += ap / static_cast<double>(k);
  }
  return total / static_cast<double>(queries.rows);
}

// ---- molecular prompting ----

PromptSet build_class_prompts(const Matrix& embeddings, const std::vector<int>& labels) {
  if (static_cast<size_t>(embeddings.rows) != labels.size() || embeddings.rows == 0)
    throw ValidationError("build_class_prompts: embeddings/labels mismatch");
  std::map<int, std::vector<int>> members;
  for (size_t i = 0; i < labels.size(); ++i)
    members[labels[i]].push_back(static_cast<int>(i));
  PromptSet prompts;
  prompts.prototypes = Matrix(static_cast<int>(members.size()), embeddings.cols);
  int row = 0;
  for (const auto& [cls, idx] : members) {
    prompts.class_ids.push_back(cls);
    for (int i : idx)
      for (int j = 0; j < embeddings.cols; ++j)
        prompts.prototypes.at(row, j) += embeddings.at(i, j);
    for (int j = 0; j < embeddings.cols; ++j)
      prompts.prototypes.at(row, j) /= static_cast<double>(idx.size());
    ++row;
  }
  return prompts;
}

SurvivalPrompts build_survival_prompts(const Matrix& embeddings,
                                       const std::vector<SurvivalRecord>& records) {
  if (static_cast<size_t>(embeddings.rows) != records.size())
    throw ValidationError("build_survival_prompts: embeddings/records mismatch");
  std::vector<int> uncensored;
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].event == 1) uncensored.push_back(static_cast<int>(i));
  if (uncensored.size() < 4)
    throw ValidationError("build_survival_prompts: need >= 4 uncensored patients");
  std::sort(uncensored.begin(), uncensored.end(), [&](int a, int b) {
    if (records[static_cast<size_t>(a)].time != records[static_cast<size_t>(b)].time)
      return records[static_cast<size_t>(a)].time < records[static_cast<size_t>(b)].time;
    return a < b;
  });
  const int q = std::max<int>(1, static_cast<int>(uncensored.size()) / 4);

  auto mean_rows = [&](const std::vector<int>& idx) {
    Matrix m(1, embeddings.cols);
    for (int i : idx)
      for (int j = 0; j < embeddings.cols; ++j) m.at(0, j) += embeddings.at(i, j);
    for (int j = 0; j < embeddings.cols; ++j) m.at(0, j) /= static_cast<double>(idx.size());
    return m;
  };

  SurvivalPrompts out;
  // shortest-surviving quartile is the high-risk prompt
  out.high_risk = mean_rows(std::vector<int>(uncensored.begin(), uncensored.begin() + q));
  out.low_risk = mean_rows(std::vector<int>(uncensored.end() - q, uncensored.end()));
  return out;
}

int prompt_classify(const Matrix& query, const PromptSet& prompts) {
  if (prompts.prototypes.rows < 2)
    throw ValidationError("prompt_classify: need at least two prompts");
  if (query.rows != 1 || query.cols != prompts.prototypes.cols)
    throw ValidationError("prompt_classify: query/prompt dimension mismatch");
  int best = 0;
  double best_d = l2_distance_rows(query, 0, prompts.prototypes, 0);
  for (int r = 1; r < prompts.prototypes.rows; ++r) {
    const double d = l2_distance_rows(query, 0, prompts.prototypes, r);
    if (d < best_d) {  // ties keep the lowest class index
      best_d = d;
      best = r;
    }
  }
  return prompts.class_ids[static_cast<size_t>(best)];
}

double prompt_risk_score(const Matrix& query, const SurvivalPrompts& prompts) {
  if (query.rows != 1 || query.cols != prompts.high_risk.cols)
    throw ValidationError("prompt_risk_score: dimension mismatch");
  return l2_distance_rows(query, 0, prompts.high_risk, 0) -
         l2_distance_rows(query, 0, prompts.low_risk, 0);
}

// ---- clustering ----

namespace {

double point_center_dist2(const Matrix& x, int i, const Matrix& centers, int c) {
  double s = 0.0;
  for (int j = 0; j < x.cols; ++j) {
    const double d = x.at(i, j) - centers.at(c, j);
    s += d * d;
  }
  return s;
}

struct KmeansRun {
  std::vector<int> assign;
  double inertia = 0.0;
};

KmeansRun kmeans_once(const Matrix& x, int k, Rng rng) {
  const int n = x.rows;
  Matrix centers(k, x.cols);

  // k-means++ seeding
  std::vector<double> d2(static_cast<size_t>(n), 0.0);
  int first = rng.uniform_int(n);
  for (int j = 0; j < x.cols; ++j) centers.at(0, j) = x.at(first, j);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = point_center_dist2(x, i, centers, 0);
      for (int cc = 1; cc < c; ++cc)
        best = std::min(best, point_center_dist2(x, i, centers, cc));
      d2[static_cast<size_t>(i)] = best;
      total += best;
    }
    int chosen = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total, acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[static_cast<size_t>(i)];
        if (u <= acc) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = rng.uniform_int(n);
    }
    for (int j = 0; j < x.cols; ++j) centers.at(c, j) = x.at(chosen, j);
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = point_center_dist2(x, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = point_center_dist2(x, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;

    centers = Matrix(k, x.cols);
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      counts[static_cast<size_t>(assign[static_cast<size_t>(i)])]++;
      for (int j = 0; j < x.cols; ++j)
        centers.at(assign[static_cast<size_t>(i)], j) += x.at(i, j);
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<size_t>(c)] > 0)
        for (int j = 0; j < x.cols; ++j)
          centers.at(c, j) /= static_cast<double>(counts[static_cast<size_t>(c)]);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      // revive an empty cluster at the point farthest from its (final) center
      int far = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d =
            point_center_dist2(x, i, centers, assign[static_cast<size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      for (int j = 0; j < x.cols; ++j) centers.at(c, j) = x.at(far, j);
    }
  }

  KmeansRun run;
  run.assign = assign;
  for (int i = 0; i < n; ++i)
    run.inertia += point_center_dist2(x, i, centers, assign[static_cast<size_t>(i)]);
  return run;
}

}  // namespace

std::vector<int> kmeans(const Matrix& x, int k, uint64_t seed) {
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (x.rows < k) throw ValidationError("kmeans: need n >= k points");
  Rng root(seed);
  KmeansRun best;
  best.inertia = 1e300;
  for (int restart = 0; restart < 20; ++restart) {
    KmeansRun run = kmeans_once(x, k, root.fork(static_cast<uint64_t>(restart)));
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best.assign;
}

ClusterAgreement clustering_agreement(const std::vector<int>& a,
                                      const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw ValidationError("clustering_agreement: length mismatch or empty");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ma, mb;
  const double n = static_cast<double>(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ma[a[i]] += 1.0;
    mb[b[i]] += 1.0;
  }
  auto choose2 = [](double c) { return c * (c - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, c] : joint) index += choose2(c);
  for (const auto& [key, c] : ma) sum_a += choose2(c);
  for (const auto& [key, c] : mb) sum_b += choose2(c);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);

  ClusterAgreement out;
  out.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);
  for (const auto& [key, c] : joint) {
    const double pij = c / n;
    out.mi += pij * std::log(pij / ((ma[key.first] / n) * (mb[key.second] / n)));
  }
  return out;
}

// ---- survival curves ----

std::vector<KmPoint> kaplan_meier(const std::vector<SurvivalRecord>& records) {
  if (records.empty()) throw ValidationError("kaplan_meier: empty group");
  std::vector<double> event_times;
  for (const SurvivalRecord& r : records)
    if (r.event == 1) event_times.push_back(r.time);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()),
                    event_times.end());
  std::vector<KmPoint> curve;
  double s = 1.0;
  for (double t : event_times) {
    double at_risk = 0.0, deaths = 0.0;
    for (const SurvivalRecord& r : records) {
      if (r.time >= t) at_risk += 1.0;
      if (r.event == 1 && r.time == t) deaths += 1.0;
    }
    s *= 1.0 - deaths / at_risk;
    curve.push_back(KmPoint{t, s});
  }
  return curve;
}

double km_survival_at(const std::vector<KmPoint>& curve, double time) {
  double s = 1.0;
  for (const KmPoint& p : curve) {
    if (p.time > time) break;
    s = p.survival;
  }
  return s;
}

LogrankResult logrank(const std::vector<SurvivalRecord>& group_a,
                      const std::vector<SurvivalRecord>& group_b) {
  if (group_a.empty() || group_b.empty())
    throw ValidationError("logrank: both groups must be nonempty");
  std::vector<double> times;
  for (const SurvivalRecord& r : group_a)
    if (r.event == 1) times.push_back(r.time);
  for (const SurvivalRecord& r : group_b)
    if (r.event == 1) times.push_back(r.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  double observed_a = 0.0, expected_a = 0.0, variance = 0.0;
  for (double t : times) {
    double n1 = 0.0, n2 = 0.0, d1 = 0.0, d2 = 0.0;
    for (const SurvivalRecord& r : group_a) {
      if (r.time >= t) n1 += 1.0;
      if (r.event == 1 && r.time == t) d1 += 1.0;
    }
    for (const SurvivalRecord& r : group_b) {
      if (r.time >= t) n2 += 1.0;
      if (r.event == 1 && r.time == t) d2 += 1.0;
    }
    const double n = n1 + n2, d = d1 + d2;
    if (n < 2.0) continue;
    observed_a += d1;
    expected_a += d * n1 / n;
    variance += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1.0);
  }
  LogrankResult out;
  if (variance > 0.0) {
    const double diff = observed_a - expected_a;
    out.chi2 = diff * diff / variance;
    out.p = std::erfc(std::sqrt(out.chi2 / 2.0));  // chi-square survival, 1 dof
  }
  return out;
}

// ---- splits ----

namespace {

struct PatientGroup {
  std::vector<int> items;
  int label = 0;
};

std::vector<PatientGroup> collect_groups(const LabeledEmbeddingSet& set,
                                         const SplitSpec& spec) {
  std::map<std::string, std::vector<int>> by_patient;
  for (int i = 0; i < set.count(); ++i) {
    const std::string key =
        spec.group_by_patient
            ? (set.patients.empty() ? set.ids[static_cast<size_t>(i)]
                                    : set.patients[static_cast<size_t>(i)])
            : set.ids[static_cast<size_t>(i)] + "#" + std::to_string(i);
    by_patient[key].push_back(i);
  }
  std::vector<PatientGroup> groups;
  for (const auto& [key, items] : by_patient) {
    PatientGroup g;
    g.items = items;
    g.label = spec.stratify && !set.labels.empty()
                  ? set.labels[static_cast<size_t>(items.front())]
                  : 0;
    groups.push_back(std::move(g));
  }
  return groups;
}

Split fold_from_test_groups(const std::vector<PatientGroup>& groups,
                            const std::vector<char>& in_test) {
  Split s;
  for (size_t g = 0; g < groups.size(); ++g)
    for (int item : groups[g].items)
      (in_test[g] ? s.test : s.train).push_back(item);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace

std::vector<Split> make_splits(const LabeledEmbeddingSet& set, const SplitSpec& spec) {
  set.validate();
  if (spec.stratify && set.labels.empty())
    throw ValidationError("make_splits: stratified split needs labels");
  if (spec.folds < 1) throw ValidationError("make_splits: folds must be >= 1");
  if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0)
    throw ValidationError("make_splits: test_fraction must be in (0, 1)");

  std::vector<PatientGroup> groups = collect_groups(set, spec);
  std::map<int, std::vector<int>> strata;  // label -> group indices
  for (size_t g = 0; g < groups.size(); ++g)
    strata[groups[g].label].push_back(static_cast<int>(g));

  Rng root(spec.seed);
  std::vector<Split> splits;

  if (spec.scheme == SplitScheme::KFold) {
    for (const auto& [label, members] : strata)
      if (static_cast<int>(members.size()) < spec.folds)
        throw ValidationError("make_splits: infeasible stratification, class " +
                              std::to_string(label) + " has " +
                              std::to_string(members.size()) + " patients for " +
                              std::to_string(spec.folds) + " folds");
    // shuffle within each stratum, then deal members round-robin to folds
    for (auto& [label, members] : strata) {
      Rng r = root.fork(0xF0, static_cast<uint64_t>(label));
      r.shuffle(members);
    }
    for (int f = 0; f < spec.folds; ++f) {
      std::vector<char> in_test(groups.size(), 0);
      for (const auto& [label, members] : strata)
        for (size_t i = static_cast<size_t>(f); i < members.size();
             i += static_cast<size_t>(spec.folds))
          in_test[static_cast<size_t>(members[i])] = 1;
      splits.push_back(fold_from_test_groups(groups, in_test));
    }
  } else {
    const int n_folds = spec.scheme == SplitScheme::OfficialSingle ? 1 : spec.folds;
    for (const auto& [label, members] : strata)
      if (members.size() < 2)
        throw ValidationError("make_splits: infeasible stratification, class " +
                              std::to_string(label) + " has fewer than 2 patients");
    for (int f = 0; f < n_folds; ++f) {
      std::vector<char> in_test(groups.size(), 0);
      for (const auto& [label, members] : strata) {
        std::vector<int> shuffled = members;
        Rng rr = root.fork(static_cast<uint64_t>(f) + 1, static_cast<uint64_t>(label));
        rr.shuffle(shuffled);
        const int n_c = static_cast<int>(shuffled.size());
        int n_test = static_cast<int>(std::lround(spec.test_fraction * n_c));
        n_test = std::max(1, std::min(n_test, n_c - 1));
        for (int i = 0; i < n_test; ++i)
          in_test[static_cast<size_t>(shuffled[static_cast<size_t>(i)])] = 1;
      }
      splits.push_back(fold_from_test_groups(groups, in_test));
    }
  }

  if (spec.fewshot_k) {
    if (set.labels.empty())
      throw ValidationError("make_splits: fewshot needs labels");
    splits = make_fewshot(splits, set.labels, *spec.fewshot_k, spec.seed);
  }
  return splits;
}

std::vector<Split> make_fewshot(const std::vector<Split>& parents,
                                const std::vector<int>& labels, int k, uint64_t seed) {
  if (k < 1) throw ValidationError("make_fewshot: k must be >= 1");
  Rng root(seed);
  std::vector<Split> out;
  for (size_t f = 0; f < parents.size(); ++f) {
    std::map<int, std::vector<int>> per_class;
    for (int item : parents[f].train)
      per_class[labels[static_cast<size_t>(item)]].push_back(item);
    Split s;
    s.test = parents[f].test;
    for (auto& [cls, items] : per_class) {
      if (static_cast<int>(items.size()) < k)
        throw ValidationError("make_fewshot: class " + std::to_string(cls) +
                              " has only " + std::to_string(items.size()) +
                              " train examples, needs " + std::to_string(k));
      Rng r = root.fork(0xF5, static_cast<uint64_t>(f)).fork(static_cast<uint64_t>(cls));
      r.shuffle(items);
      items.resize(static_cast<size_t>(k));
      for (int item : items) s.train.push_back(item);
    }
    std::sort(s.train.begin(), s.train.end());
    out.push_back(std::move(s));
  }
  return out;
}

// ---- bootstrap ----

BootstrapCi bootstrap_ci(const std::function<double(const std::vector<int>&)>& metric,
                         int n_samples, int replicates, uint64_t seed) {
  if (n_samples < 2) throw ValidationError("bootstrap_ci: need >= 2 samples");
  if (replicates < 1) throw ValidationError("bootstrap_ci: need >= 1 replicates");
  Rng root(seed);
  std::vector<double> values;
  values.reserve(static_cast<size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    double v = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt <= 10; ++attempt) {
      Rng rng = root.fork(static_cast<uint64_t>(r), static_cast<uint64_t>(attempt));
      std::vector<int> idx(static_cast<size_t>(n_samples));
      for (int i = 0; i < n_samples; ++i) idx[static_cast<size_t>(i)] = rng.uniform_int(n_samples);
      try {
        v = metric(idx);
        ok = true;
        break;
      } catch (const std::exception&) {
        if (attempt == 10) throw;
      }
    }
    if (ok) values.push_back(v);
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  BootstrapCi ci;
  for (double v : values) ci.mean += v;
  ci.mean /= static_cast<double>(values.size());
  ci.lo95 = quantile(0.025);
  ci.hi95 = quantile(0.975);
  return ci;
}

}  // namespace thd
