#include "thd/matrix.hpp"

#include <cmath>
#include <cstring>

#include "thd/parallel.hpp"

namespace thd {

Matrix::Matrix(int r, int c) {
  if (r < 0 || c < 0) throw ValidationError("Matrix: negative shape");
  rows = r;
  cols = c;
  data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0);
}

Matrix::Matrix(int r, int c, std::vector<double> values) {
  if (r < 0 || c < 0) throw ValidationError("Matrix: negative shape");
  if (values.size() != static_cast<size_t>(r) * static_cast<size_t>(c))
    throw ValidationError("Matrix: data length does not match shape");
  rows = r;
  cols = c;
  data = std::move(values);
}

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> Matrix::row(int r) const {
  return std::vector<double>(data.begin() + static_cast<ptrdiff_t>(r) * cols,
                             data.begin() + static_cast<ptrdiff_t>(r + 1) * cols);
}

void Matrix::set_row(int r, const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != cols)
    throw ValidationError("Matrix::set_row: length mismatch");
  std::memcpy(&data[static_cast<size_t>(r) * cols], v.data(), v.size() * sizeof(double));
}

Matrix Matrix::ones(int r, int c) { return full(r, c, 1.0); }

Matrix Matrix::full(int r, int c, double v) {
  Matrix m(r, c);
  std::fill(m.data.begin(), m.data.end(), v);
  return m;
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Matrix(1, n, std::move(v));
}

Matrix Matrix::column_vector(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Matrix(n, 1, std::move(v));
}

Matrix Matrix::diag(const std::vector<double>& d) {
  const int n = static_cast<int>(d.size());
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = d[static_cast<size_t>(i)];
  return m;
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a) +
                          " vs " + shape_string(b));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ValidationError("matmul: inner dimensions differ, " + shape_string(a) +
                          " x " + shape_string(b));
  Matrix c(a.rows, b.cols);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  const int n = a.rows, k = a.cols, m = b.cols;
  auto row_range = [&](int i0, int i1) {
    for (int i = i0; i < i1; ++i) {
      double* crow = pc + static_cast<size_t>(i) * m;
      const double* arow = pa + static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const double aip = arow[p];
        if (aip == 0.0) continue;
        const double* brow = pb + static_cast<size_t>(p) * m;
        for (int j = 0; j < m; ++j) crow[j] += aip * brow[j];
      }
    }
  };
  const double flops = 2.0 * n * static_cast<double>(k) * m;
  if (flops > 8e6 && n >= 8) {
    const int workers = worker_count();
    const int chunk = (n + workers - 1) / workers;
    parallel_for((n + chunk - 1) / chunk, [&](int w) {
      row_range(w * chunk, std::min(n, (w + 1) * chunk));
    });
  } else {
    row_range(0, n);
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& v : c.data) v *= s;
  return c;
}

void add_scaled_inplace(Matrix& a, const Matrix& b, double s) {
  require_same_shape(a, b, "add_scaled_inplace");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

void add_inplace(Matrix& a, const Matrix& b) { add_scaled_inplace(a, b, 1.0); }

Matrix add_row_broadcast(const Matrix& a, const Matrix& row) {
  if (row.rows != 1 || row.cols != a.cols)
    throw ValidationError("add_row_broadcast: row must be 1x" + std::to_string(a.cols) +
                          ", got " + shape_string(row));
  Matrix c = a;
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) c.at(i, j) += row.at(0, j);
  return c;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return std::sqrt(s);
}

double l2_distance_rows(const Matrix& a, int i, const Matrix& b, int j) {
  if (a.cols != b.cols) throw ValidationError("l2_distance_rows: dim mismatch");
  double s = 0.0;
  for (int c = 0; c < a.cols; ++c) {
    const double d = a.at(i, c) - b.at(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double activation_value(Activation kind, double x) {
  switch (kind) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Gelu: return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  throw ValidationError("activation_value: unknown kind");
}

double activation_derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Gelu: {
      const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return phi + x * pdf;
    }
  }
  throw ValidationError("activation_derivative: unknown kind");
}

Matrix activation(Activation kind, const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) v = activation_value(kind, v);
  return y;
}

std::vector<double> stable_softmax(const std::vector<double>& x) {
  if (x.empty()) throw ValidationError("stable_softmax: empty input");
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> y(x.size());
  double sum = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (double& v : y) v /= sum;
  return y;
}

Matrix softmax_rows(const Matrix& x) {
  if (x.cols == 0) throw ValidationError("softmax_rows: empty rows");
  Matrix y = x;
  for (int i = 0; i < x.rows; ++i) {
    double mx = y.at(i, 0);
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, y.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      double e = std::exp(y.at(i, j) - mx);
      y.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < x.cols; ++j) y.at(i, j) /= sum;
  }
  return y;
}

std::vector<double> layer_normalize(const std::vector<double>& x,
                                    const std::vector<double>& gain,
                                    const std::vector<double>& bias, double eps) {
  if (x.size() != gain.size() || x.size() != bias.size())
    throw ValidationError("layer_normalize: length mismatch");
  if (x.empty()) throw ValidationError("layer_normalize: empty input");
  if (eps <= 0.0) throw ValidationError("layer_normalize: eps must be > 0");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    y[i] = gain[i] * (x[i] - mean) * inv + bias[i];
  return y;
}

Matrix layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& bias,
                       double eps) {
  if (gain.rows != 1 || gain.cols != x.cols || bias.rows != 1 || bias.cols != x.cols)
    throw ValidationError("layer_norm_rows: gain/bias must be 1x" +
                          std::to_string(x.cols));
  Matrix y(x.rows, x.cols);
  std::vector<double> g = gain.row(0), b = bias.row(0);
  for (int i = 0; i < x.rows; ++i) y.set_row(i, layer_normalize(x.row(i), g, b, eps));
  return y;
}

Matrix dropout_mask(double p, int rows, int cols, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout_mask: p must be in [0, 1)");
  if (!training || p == 0.0) return Matrix::ones(rows, cols);
  Matrix m(rows, cols);
  const double keep = 1.0 - p;
  const double s = 1.0 / keep;
  for (double& v : m.data) v = rng.uniform() < keep ? s : 0.0;
  return m;
}

Matrix l2_normalize_rows(const Matrix& x, double floor) {
  Matrix y = x;
  for (int i = 0; i < x.rows; ++i) {
    double n = 0.0;
    for (int j = 0; j < x.cols; ++j) n += x.at(i, j) * x.at(i, j);
    n = std::max(std::sqrt(n), floor);
    for (int j = 0; j < x.cols; ++j) y.at(i, j) /= n;
  }
  return y;
}

}  // namespace thd
