#pragma once

#include <functional>
#include <vector>

namespace thd {

struct LbfgsOptions {
  int max_iter = 10000;
  double grad_tol = 1e-6;  // stop when ||g||_2 <= grad_tol
  int history = 10;
  double armijo_c1 = 1e-4;
  int max_line_search = 60;
};

struct LbfgsReport {
  int iterations = 0;
  double final_value = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
};

// Minimizes f via L-BFGS with backtracking Armijo line search. objective must
// fill grad (same size as x) and return f(x). Deterministic.
LbfgsReport lbfgs_minimize(
    std::vector<double>& x,
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& objective,
    const LbfgsOptions& opts = {});

}  // namespace thd
