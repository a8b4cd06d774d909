#pragma once

#include <vector>

#include "thd/matrix.hpp"

namespace thd {

// Eigenvalues of a symmetric matrix via cyclic Jacobi sweeps, descending.
std::vector<double> symmetric_eigenvalues(const Matrix& a);

// Singular values of h, nonnegative and sorted descending. Computed from the
// smaller Gram matrix (h h^T or h^T h), so the result has min(rows, cols)
// entries. Satisfies sum(sigma^2) = ||h||_F^2.
std::vector<double> singular_values(const Matrix& h);

}  // namespace thd
