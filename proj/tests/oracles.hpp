#pragma once

// Test-only reference implementations, kept independent of the production
// code paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "thd/matrix.hpp"

namespace oracle {

// plain ijk triple loop
inline thd::Matrix naive_matmul(const thd::Matrix& a, const thd::Matrix& b) {
  thd::Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

// One-sided Jacobi SVD: orthogonalize column pairs, singular values are the
// final column norms. Distinct from the production eigendecomposition of the
// Gram matrix.
inline std::vector<double> singular_values(thd::Matrix a) {
  const int n = a.cols;
  for (int sweep = 0; sweep < 128; ++sweep) {
    bool converged = true;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < a.rows; ++i) {
          alpha += a.at(i, p) * a.at(i, p);
          beta += a.at(i, q) * a.at(i, q);
          gamma += a.at(i, p) * a.at(i, q);
        }
        if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta) || gamma == 0.0)
          continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < a.rows; ++i) {
          const double ap = a.at(i, p), aq = a.at(i, q);
          a.at(i, p) = c * ap - s * aq;
          a.at(i, q) = s * ap + c * aq;
        }
      }
    }
    if (converged) break;
  }
  std::vector<double> sv(static_cast<size_t>(n), 0.0);
  for (int p = 0; p < n; ++p) {
    double norm = 0.0;
    for (int i = 0; i < a.rows; ++i) norm += a.at(i, p) * a.at(i, p);
    sv[static_cast<size_t>(p)] = std::sqrt(norm);
  }
  std::sort(sv.begin(), sv.end(), std::greater<double>());
  return sv;
}

inline double rankme(const thd::Matrix& h, double eps) {
  const std::vector<double> sv = singular_values(h);
  double total = 0.0;
  for (double s : sv) total += s;
  double entropy = 0.0;
  for (int k = 0; k < h.cols; ++k) {
    const double s = k < static_cast<int>(sv.size()) ? sv[static_cast<size_t>(k)] : 0.0;
    const double p = s / total + eps;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

// pairwise enumeration, ties 0.5
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double pairs = 0.0, wins = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / pairs;
}

inline double concordance(const std::vector<double>& risks,
                          const std::vector<double>& times,
                          const std::vector<int>& events) {
  double pairs = 0.0, score = 0.0;
  for (size_t i = 0; i < risks.size(); ++i)
    for (size_t j = 0; j < risks.size(); ++j) {
      if (i == j || !(times[i] < times[j]) || events[i] != 1) continue;
      pairs += 1.0;
      if (risks[i] > risks[j])
        score += 1.0;
      else if (risks[i] == risks[j])
        score += 0.5;
    }
  return score / pairs;
}

// direct transcription of the displayed mAP@k formula
inline double map_at_k(const std::vector<std::vector<int>>& retrieved_labels,
                       const std::vector<int>& query_labels, int k) {
  double total = 0.0;
  for (size_t i = 0; i < query_labels.size(); ++i) {
    double inner = 0.0;
    for (int j = 1; j <= k; ++j) {
      if (retrieved_labels[i][static_cast<size_t>(j - 1)] != query_labels[i]) continue;
      double prefix = 0.0;
      for (int s = 1; s <= j; ++s)
        if (retrieved_labels[i][static_cast<size_t>(s - 1)] == query_labels[i])
          prefix += 1.0;
      inner += prefix / j;
    }
    total += inner / k;
  }
  return total / static_cast<double>(query_labels.size());
}

// ARI from the four pair-concordance counts
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  double n11 = 0.0, n00 = 0.0, n10 = 0.0, n01 = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = i + 1; j < a.size(); ++j) {
      const bool same_a = a[i] == a[j];
      const bool same_b = b[i] == b[j];
      if (same_a && same_b) n11 += 1.0;
      else if (same_a) n10 += 1.0;
      else if (same_b) n01 += 1.0;
      else n00 += 1.0;
    }
  const double num = 2.0 * (n11 * n00 - n10 * n01);
  const double den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
  return den == 0.0 ? 1.0 : num / den;
}

inline double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::vector<std::vector<double>> joint(32, std::vector<double>(32, 0.0));
  std::vector<double> pa(32, 0.0), pb(32, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<size_t>(a[i])][static_cast<size_t>(b[i])] += 1.0;
    pa[static_cast<size_t>(a[i])] += 1.0;
    pb[static_cast<size_t>(b[i])] += 1.0;
  }
  double mi = 0.0;
  for (size_t x = 0; x < 32; ++x)
    for (size_t y = 0; y < 32; ++y) {
      if (joint[x][y] == 0.0) continue;
      mi += (joint[x][y] / n) * std::log((joint[x][y] / n) / ((pa[x] / n) * (pb[y] / n)));
    }
  return mi;
}

}  // namespace oracle
