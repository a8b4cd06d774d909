#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "thd/rng.hpp"

namespace thd {

// Input/config problems callers can fix; mapped to exit code 2 in the CLI.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major matrix. All compute is f64; f32 appears only at storage
// boundaries (embedding stores, checkpoints).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c);
  Matrix(int r, int c, std::vector<double> values);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  std::vector<double> row(int r) const;
  void set_row(int r, const std::vector<double>& v);

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix ones(int r, int c);
  static Matrix full(int r, int c, double v);
  static Matrix identity(int n);
  static Matrix row_vector(std::vector<double> v);
  static Matrix column_vector(std::vector<double> v);
  static Matrix diag(const std::vector<double>& d);
};

std::string shape_string(const Matrix& m);
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
// a += s * b
void add_scaled_inplace(Matrix& a, const Matrix& b, double s);
void add_inplace(Matrix& a, const Matrix& b);
// adds row vector (1 x C) to every row of a (N x C)
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);

double frobenius_norm(const Matrix& a);
double l2_distance_rows(const Matrix& a, int i, const Matrix& b, int j);

enum class Activation { Tanh, Sigmoid, Relu, Gelu };

double activation_value(Activation kind, double x);
double activation_derivative(Activation kind, double x);
Matrix activation(Activation kind, const Matrix& x);

// Shift-invariant softmax; empty input is a domain error.
std::vector<double> stable_softmax(const std::vector<double>& x);
Matrix softmax_rows(const Matrix& x);

// Per-vector layer norm: zero mean / unit variance, then gain * xhat + bias.
std::vector<double> layer_normalize(const std::vector<double>& x,
                                    const std::vector<double>& gain,
                                    const std::vector<double>& bias,
                                    double eps = 1e-5);
Matrix layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& bias,
                       double eps = 1e-5);

// Inverted dropout: in training the kept entries are scaled by 1/(1-p), so
// inference (all ones) needs no rescale. p must lie in [0, 1).
Matrix dropout_mask(double p, int rows, int cols, Rng& rng, bool training);

Matrix l2_normalize_rows(const Matrix& x, double floor = 1e-12);

}  // namespace thd
