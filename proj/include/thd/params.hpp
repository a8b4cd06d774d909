#pragma once

#include <string>

#include "thd/matrix.hpp"
#include "thd/rng.hpp"
#include "thd/tape.hpp"

namespace thd {

// w: in x out, b: 1 x out
struct AffineParams {
  Matrix w;
  Matrix b;
};

// gain/bias: 1 x width
struct LayerNormParams {
  Matrix gain;
  Matrix bias;
};

AffineParams init_affine(int in, int out, Rng& rng);
LayerNormParams init_layer_norm(int width);

Tape::Var affine(Tape& t, const VarBinding& vb, const AffineParams& p, Tape::Var x);

inline long long affine_param_count(const AffineParams& p) {
  return static_cast<long long>(p.w.size()) + static_cast<long long>(p.b.size());
}

}  // namespace thd
