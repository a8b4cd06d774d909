#include "thd/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace thd {

std::vector<double> symmetric_eigenvalues(const Matrix& input) {
  if (input.rows != input.cols)
    throw ValidationError("symmetric_eigenvalues: matrix must be square");
  if (!input.all_finite())
    throw ValidationError("symmetric_eigenvalues: non-finite entries");
  const int n = input.rows;
  Matrix a = input;

  auto off_norm = [&] {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) s += a.at(p, q) * a.at(p, q);
    return std::sqrt(2.0 * s);
  };

  double scale = frobenius_norm(a);
  if (scale == 0.0) return std::vector<double>(static_cast<size_t>(n), 0.0);
  const double tol = 1e-14 * scale;

  for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) <= tol * 1e-2) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }

  std::vector<double> eig(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = a.at(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

std::vector<double> singular_values(const Matrix& h) {
  if (h.rows < 1 || h.cols < 1)
    throw ValidationError("singular_values: matrix must be nonempty");
  if (!h.all_finite()) throw ValidationError("singular_values: non-finite entries");

  const bool wide = h.cols > h.rows;
  const Matrix ht = transpose(h);
  const Matrix gram = wide ? matmul(h, ht) : matmul(ht, h);
  std::vector<double> eig = symmetric_eigenvalues(gram);
  for (double& v : eig) v = v > 0.0 ? std::sqrt(v) : 0.0;
  return eig;  // already descending
}

}  // namespace thd
