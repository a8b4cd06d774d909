#include "thd/optim.hpp"

#include <cmath>
#include <deque>

namespace thd {

namespace {
double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }
}  // namespace

LbfgsReport lbfgs_minimize(
    std::vector<double>& x,
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& objective,
    const LbfgsOptions& opts) {
  const size_t n = x.size();
  std::vector<double> grad(n, 0.0);
  double fx = objective(x, grad);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsReport report;
  report.final_value = fx;
  report.grad_norm = norm2(grad);

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    report.iterations = iter;
    report.grad_norm = norm2(grad);
    if (report.grad_norm <= opts.grad_tol) {
      report.converged = true;
      break;
    }

    // two-loop recursion
    std::vector<double> dir = grad;
    std::vector<double> alpha(s_hist.size(), 0.0);
    for (size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], dir);
      for (size_t k = 0; k < n; ++k) dir[k] -= alpha[i] * y_hist[i][k];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) /
                           std::max(dot(y_hist.back(), y_hist.back()), 1e-300);
      for (double& v : dir) v *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], dir);
      for (size_t k = 0; k < n; ++k) dir[k] += (alpha[i] - beta) * s_hist[i][k];
    }
    for (double& v : dir) v = -v;  // descent direction

    double slope = dot(grad, dir);
    if (slope >= 0.0) {  // bad curvature estimate; fall back to steepest descent
      for (size_t k = 0; k < n; ++k) dir[k] = -grad[k];
      slope = -dot(grad, grad);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    std::vector<double> x_new(n), grad_new(n, 0.0);
    double f_new = fx;
    bool accepted = false;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      for (size_t k = 0; k < n; ++k) x_new[k] = x[k] + step * dir[k];
      f_new = objective(x_new, grad_new);
      if (std::isfinite(f_new) && f_new <= fx + opts.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stuck; report current point

    std::vector<double> s_vec(n), y_vec(n);
    for (size_t k = 0; k < n; ++k) {
      s_vec[k] = x_new[k] - x[k];
      y_vec[k] = grad_new[k] - grad[k];
    }
    const double sy = dot(s_vec, y_vec);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    grad = grad_new;
    fx = f_new;
    report.final_value = fx;
  }
  report.final_value = fx;
  report.grad_norm = norm2(grad);
  if (report.grad_norm <= opts.grad_tol) report.converged = true;
  return report;
}

}  // namespace thd
