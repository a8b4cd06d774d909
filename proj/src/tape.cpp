#include "thd/tape.hpp"

#include <cmath>

namespace thd {

Matrix& Tape::grad_buf(Var v) {
  Node& n = node(v);
  if (n.grad.empty() && !n.value.empty())
    n.grad = Matrix::zeros(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!needs(v)) return;
  add_inplace(grad_buf(v), g);
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(v)];
  return n.grad.empty() ? zero_ : n.grad;
}

void Tape::backward(Var root) {
  const Matrix& out = value(root);
  if (out.rows != 1 || out.cols != 1)
    throw ValidationError("Tape::backward: root must be a 1x1 scalar");
  backward_seeded({{root, Matrix::ones(1, 1)}});
}

void Tape::backward_seeded(const std::vector<std::pair<Var, Matrix>>& seeds) {
  if (backward_done_)
    throw std::logic_error("Tape::backward: tape already replayed");
  backward_done_ = true;
  for (const auto& [v, seed] : seeds) {
    require_same_shape(value(v), seed, "Tape::backward seed");
    add_inplace(grad_buf(v), seed);
  }
  run_backward();
}

void Tape::run_backward() {
  for (size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.pull) continue;
    n.pull();
  }
}

Tape::Var Tape::add(Var a, Var b) {
  Var out = push(thd::add(value(a), value(b)), needs(a) || needs(b));
  node(out).pull = [this, a, b, out] {
    accumulate(a, grad(out));
    accumulate(b, grad(out));
  };
  return out;
}

Tape::Var Tape::sub(Var a, Var b) {
  Var out = push(thd::sub(value(a), value(b)), needs(a) || needs(b));
  node(out).pull = [this, a, b, out] {
    accumulate(a, grad(out));
    accumulate(b, thd::scale(grad(out), -1.0));
  };
  return out;
}

Tape::Var Tape::mul(Var a, Var b) {
  Var out = push(hadamard(value(a), value(b)), needs(a) || needs(b));
  node(out).pull = [this, a, b, out] {
    accumulate(a, hadamard(grad(out), value(b)));
    accumulate(b, hadamard(grad(out), value(a)));
  };
  return out;
}

Tape::Var Tape::mul_mask(Var a, Matrix mask) {
  require_same_shape(value(a), mask, "Tape::mul_mask");
  Var m = constant(std::move(mask));
  return mul(a, m);
}

Tape::Var Tape::scale(Var a, double s) {
  Var out = push(thd::scale(value(a), s), needs(a));
  node(out).pull = [this, a, s, out] { accumulate(a, thd::scale(grad(out), s)); };
  return out;
}

Tape::Var Tape::add_row_broadcast(Var a, Var row) {
  Var out = push(thd::add_row_broadcast(value(a), value(row)), needs(a) || needs(row));
  node(out).pull = [this, a, row, out] {
    const Matrix& g = grad(out);
    accumulate(a, g);
    if (needs(row)) {
      Matrix gr(1, g.cols);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gr.at(0, j) += g.at(i, j);
      accumulate(row, gr);
    }
  };
  return out;
}

Tape::Var Tape::matmul(Var a, Var b) {
  Var out = push(thd::matmul(value(a), value(b)), needs(a) || needs(b));
  node(out).pull = [this, a, b, out] {
    const Matrix& g = grad(out);
    if (needs(a)) accumulate(a, thd::matmul(g, thd::transpose(value(b))));
    if (needs(b)) accumulate(b, thd::matmul(thd::transpose(value(a)), g));
  };
  return out;
}

Tape::Var Tape::transpose(Var a) {
  Var out = push(thd::transpose(value(a)), needs(a));
  node(out).pull = [this, a, out] { accumulate(a, thd::transpose(grad(out))); };
  return out;
}

Tape::Var Tape::activate(Activation kind, Var a) {
  Var out = push(activation(kind, value(a)), needs(a));
  node(out).pull = [this, kind, a, out] {
    const Matrix& x = value(a);
    Matrix g = grad(out);
    for (size_t i = 0; i < g.data.size(); ++i)
      g.data[i] *= activation_derivative(kind, x.data[i]);
    accumulate(a, g);
  };
  return out;
}

Tape::Var Tape::softmax_rows(Var a) {
  Var out = push(thd::softmax_rows(value(a)), needs(a));
  node(out).pull = [this, a, out] {
    const Matrix& y = value(out);
    const Matrix& g = grad(out);
    Matrix dx(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < y.cols; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols; ++j)
        dx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
    }
    accumulate(a, dx);
  };
  return out;
}

Tape::Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = value(x);
  Var out = push(thd::layer_norm_rows(xv, value(gain), value(bias), eps),
                 needs(x) || needs(gain) || needs(bias));
  node(out).pull = [this, x, gain, bias, eps, out] {
    const Matrix& xv = value(x);
    const Matrix& gv = value(gain);
    const Matrix& g = grad(out);
    const int n = xv.rows, c = xv.cols;
    Matrix dx(n, c), dgain(1, c), dbias(1, c);
    for (int i = 0; i < n; ++i) {
      double mean = 0.0;
      for (int j = 0; j < c; ++j) mean += xv.at(i, j);
      mean /= c;
      double var = 0.0;
      for (int j = 0; j < c; ++j) {
        const double d = xv.at(i, j) - mean;
        var += d * d;
      }
      var /= c;
      const double inv = 1.0 / std::sqrt(var + eps);
      // dy through xhat: dxhat = g * gain; dx = inv * (dxhat - mean(dxhat)
      //   - xhat * mean(dxhat * xhat))
      double m1 = 0.0, m2 = 0.0;
      std::vector<double> xhat(static_cast<size_t>(c)), dxhat(static_cast<size_t>(c));
      for (int j = 0; j < c; ++j) {
        xhat[static_cast<size_t>(j)] = (xv.at(i, j) - mean) * inv;
        dxhat[static_cast<size_t>(j)] = g.at(i, j) * gv.at(0, j);
        m1 += dxhat[static_cast<size_t>(j)];
        m2 += dxhat[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
      }
      m1 /= c;
      m2 /= c;
      for (int j = 0; j < c; ++j) {
        dx.at(i, j) = inv * (dxhat[static_cast<size_t>(j)] - m1 -
                             xhat[static_cast<size_t>(j)] * m2);
        dgain.at(0, j) += g.at(i, j) * xhat[static_cast<size_t>(j)];
        dbias.at(0, j) += g.at(i, j);
      }
    }
    accumulate(x, dx);
    accumulate(gain, dgain);
    accumulate(bias, dbias);
  };
  return out;
}

Tape::Var Tape::mean_over_rows(Var a) {
  const Matrix& x = value(a);
  if (x.rows == 0) throw ValidationError("mean_over_rows: empty input");
  Matrix m(1, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) m.at(0, j) += x.at(i, j);
  for (int j = 0; j < x.cols; ++j) m.at(0, j) /= x.rows;
  Var out = push(std::move(m), needs(a));
  node(out).pull = [this, a, out] {
    const Matrix& g = grad(out);
    const Matrix& x = value(a);
    Matrix dx(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < x.cols; ++j) dx.at(i, j) = g.at(0, j) / x.rows;
    accumulate(a, dx);
  };
  return out;
}

Tape::Var Tape::sum_all(Var a) {
  const Matrix& x = value(a);
  double s = 0.0;
  for (double v : x.data) s += v;
  Var out = push(Matrix(1, 1, {s}), needs(a));
  node(out).pull = [this, a, out] {
    const Matrix& x = value(a);
    accumulate(a, Matrix::full(x.rows, x.cols, grad(out).at(0, 0)));
  };
  return out;
}

Tape::Var Tape::slice_cols(Var a, int first, int count) {
  const Matrix& x = value(a);
  if (first < 0 || count < 0 || first + count > x.cols)
    throw ValidationError("slice_cols: range out of bounds");
  Matrix y(x.rows, count);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < count; ++j) y.at(i, j) = x.at(i, first + j);
  Var out = push(std::move(y), needs(a));
  node(out).pull = [this, a, first, count, out] {
    const Matrix& g = grad(out);
    const Matrix& x = value(a);
    Matrix dx(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < count; ++j) dx.at(i, first + j) = g.at(i, j);
    accumulate(a, dx);
  };
  return out;
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no parts");
  int rows = value(parts[0]).rows, cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).rows != rows) throw ValidationError("concat_cols: row mismatch");
    cols += value(p).cols;
    rg = rg || needs(p);
  }
  Matrix y(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Matrix& x = value(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < x.cols; ++j) y.at(i, off + j) = x.at(i, j);
    off += x.cols;
  }
  Var out = push(std::move(y), rg);
  node(out).pull = [this, parts, out] {
    const Matrix& g = grad(out);
    int off = 0;
    for (Var p : parts) {
      const Matrix& x = value(p);
      if (needs(p)) {
        Matrix dx(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i)
          for (int j = 0; j < x.cols; ++j) dx.at(i, j) = g.at(i, off + j);
        accumulate(p, dx);
      }
      off += x.cols;
    }
  };
  return out;
}

Tape::Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no parts");
  int cols = value(parts[0]).cols, rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).cols != cols) throw ValidationError("concat_rows: column mismatch");
    rows += value(p).rows;
    rg = rg || needs(p);
  }
  Matrix y(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Matrix& x = value(p);
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < cols; ++j) y.at(off + i, j) = x.at(i, j);
    off += x.rows;
  }
  Var out = push(std::move(y), rg);
  node(out).pull = [this, parts, out] {
    const Matrix& g = grad(out);
    int off = 0;
    for (Var p : parts) {
      const Matrix& x = value(p);
      if (needs(p)) {
        Matrix dx(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i)
          for (int j = 0; j < x.cols; ++j) dx.at(i, j) = g.at(off + i, j);
        accumulate(p, dx);
      }
      off += x.rows;
    }
  };
  return out;
}

Tape::Var Tape::gather_rows(Var table, std::vector<int> ids) {
  const Matrix& t = value(table);
  Matrix y(static_cast<int>(ids.size()), t.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= t.rows)
      throw ValidationError("gather_rows: id " + std::to_string(id) + " out of range");
    for (int j = 0; j < t.cols; ++j) y.at(static_cast<int>(i), j) = t.at(id, j);
  }
  Var out = push(std::move(y), needs(table));
  node(out).pull = [this, table, ids = std::move(ids), out] {
    const Matrix& g = grad(out);
    const Matrix& t = value(table);
    Matrix dt(t.rows, t.cols);
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < t.cols; ++j)
        dt.at(ids[i], j) += g.at(static_cast<int>(i), j);
    accumulate(table, dt);
  };
  return out;
}

Tape::Var Tape::l2_normalize_rows(Var a) {
  const Matrix& x = value(a);
  Var out = push(thd::l2_normalize_rows(x), needs(a));
  node(out).pull = [this, a, out] {
    const Matrix& x = value(a);
    const Matrix& y = value(out);
    const Matrix& g = grad(out);
    Matrix dx(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
      double norm = 0.0, dot = 0.0;
      for (int j = 0; j < x.cols; ++j) {
        norm += x.at(i, j) * x.at(i, j);
        dot += g.at(i, j) * y.at(i, j);
      }
      norm = std::max(std::sqrt(norm), 1e-12);
      for (int j = 0; j < x.cols; ++j)
        dx.at(i, j) = (g.at(i, j) - y.at(i, j) * dot) / norm;
    }
    accumulate(a, dx);
  };
  return out;
}

Tape::Var Tape::infonce_symmetric(Var s) {
  const Matrix& sv = value(s);
  if (sv.rows != sv.cols || sv.rows < 2)
    throw ValidationError("infonce_symmetric: need a BxB matrix with B >= 2");
  const int b = sv.rows;
  const Matrix rowp = thd::softmax_rows(sv);
  const Matrix colp = thd::transpose(thd::softmax_rows(thd::transpose(sv)));
  double loss = 0.0;
  for (int i = 0; i < b; ++i)
    loss -= 0.5 * (std::log(rowp.at(i, i)) + std::log(colp.at(i, i)));
  loss /= b;
  Var out = push(Matrix(1, 1, {loss}), needs(s));
  node(out).pull = [this, s, rowp, colp, b, out] {
    const double g = grad(out).at(0, 0);
    Matrix ds(b, b);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        double v = rowp.at(i, j) + colp.at(i, j);
        if (i == j) v -= 2.0;
        ds.at(i, j) = g * v / (2.0 * b);
      }
    accumulate(s, ds);
  };
  return out;
}

Tape::Var Tape::cross_entropy_logits(Var logits, int label) {
  const Matrix& lv = value(logits);
  if (lv.rows != 1 || label < 0 || label >= lv.cols)
    throw ValidationError("cross_entropy_logits: logits must be 1xK with label in range");
  const Matrix p = thd::softmax_rows(lv);
  Var out = push(Matrix(1, 1, {-std::log(std::max(p.at(0, label), 1e-300))}),
                 needs(logits));
  node(out).pull = [this, logits, label, p, out] {
    const double g = grad(out).at(0, 0);
    Matrix dl = p;
    dl.at(0, label) -= 1.0;
    accumulate(logits, thd::scale(dl, g));
  };
  return out;
}

}  // namespace thd
