#include "thd/params.hpp"

#include <cmath>

namespace thd {

AffineParams init_affine(int in, int out, Rng& rng) {
  AffineParams p;
  p.w = Matrix(in, out);
  p.b = Matrix(1, out);
  const double bound = std::sqrt(6.0 / (in + out));
  for (double& v : p.w.data) v = rng.uniform(-bound, bound);
  return p;
}

LayerNormParams init_layer_norm(int width) {
  return LayerNormParams{Matrix::ones(1, width), Matrix::zeros(1, width)};
}

Tape::Var affine(Tape& t, const VarBinding& vb, const AffineParams& p, Tape::Var x) {
  return t.add_row_broadcast(t.matmul(x, vb[p.w]), vb[p.b]);
}

}  // namespace thd
