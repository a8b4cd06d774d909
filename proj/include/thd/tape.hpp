#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "thd/matrix.hpp"

namespace thd {

// Reverse-mode tape over whole matrices. Nodes are appended in forward order;
// backward() replays adjoint rules in reverse creation order, which is a
// topological order by construction. A tape records one forward pass and runs
// backward at most once; it is single-owner and not shared across threads.
class Tape {
 public:
  using Var = int;

  Tape() = default;
  // adjoint closures capture this, so a tape cannot be copied or moved
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false); }
  Var param(const Matrix& value) { return push(value, true); }
  Var input(Matrix value, bool requires_grad) {
    return push(std::move(value), requires_grad);
  }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // elementwise product with a constant matrix (dropout masks)
  Var mul_mask(Var a, Matrix mask);
  Var scale(Var a, double s);
  Var add_row_broadcast(Var a, Var row);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var activate(Activation kind, Var a);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  // column means over rows: N x C -> 1 x C
  Var mean_over_rows(Var a);
  Var sum_all(Var a);
  Var slice_cols(Var a, int first, int count);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  // out.row(i) = table.row(ids[i]); gradient scatters back into the table
  Var gather_rows(Var table, std::vector<int> ids);
  Var l2_normalize_rows(Var a);
  // s: B x B similarity logits with matched pairs on the diagonal; returns the
  // symmetric InfoNCE loss 0.5 * (mean row CE + mean column CE) as 1 x 1
  Var infonce_symmetric(Var s);
  // -log softmax(logits)[label] for a 1 x K logits row
  Var cross_entropy_logits(Var logits, int label);

  const Matrix& value(Var v) const { return nodes_[static_cast<size_t>(v)].value; }
  // Gradient w.r.t. a node after backward(); zeros if the node was not reached.
  const Matrix& grad(Var v) const;

  void backward(Var root);
  void backward_seeded(const std::vector<std::pair<Var, Matrix>>& seeds);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void()> pull;  // pushes this node's grad into its parents
  };

  Var push(Matrix value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
    return static_cast<Var>(nodes_.size() - 1);
  }

  Node& node(Var v) { return nodes_[static_cast<size_t>(v)]; }
  bool needs(Var v) const { return nodes_[static_cast<size_t>(v)].requires_grad; }
  Matrix& grad_buf(Var v);
  void accumulate(Var v, const Matrix& g);
  void run_backward();

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  Matrix zero_;
};

// Maps parameter matrices (by address) to their tape leaves so encoder
// forwards can run against any params struct exposing visit(name, Matrix&).
class VarBinding {
 public:
  template <typename Params>
  static VarBinding bind(Tape& tape, const Params& params) {
    VarBinding vb;
    const_cast<Params&>(params).visit([&](const char*, Matrix& m) {
      vb.vars_[&m] = tape.param(m);
    });
    return vb;
  }

  Tape::Var operator[](const Matrix& m) const {
    auto it = vars_.find(&m);
    if (it == vars_.end())
      throw std::logic_error("VarBinding: matrix not bound to this tape");
    return it->second;
  }

  // Gradients in the params struct's visit order, shapes matching each param.
  template <typename Params>
  std::vector<Matrix> grads(const Tape& tape, const Params& params) const {
    std::vector<Matrix> out;
    const_cast<Params&>(params).visit([&](const char*, Matrix& m) {
      const Matrix& g = tape.grad((*this)[m]);
      out.push_back(g.empty() ? Matrix::zeros(m.rows, m.cols) : g);
    });
    return out;
  }

 private:
  std::unordered_map<const Matrix*, Tape::Var> vars_;
};

}  // namespace thd
