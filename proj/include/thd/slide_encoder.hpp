#pragma once

#include <string>
#include <vector>

#include "thd/params.hpp"

namespace thd {

struct SlideEncoderConfig {
  int input_dim = 768;
  int hidden_dim = 1024;
  int heads = 2;
  int pre_attention_layers = 3;
  double pre_dropout = 0.1;
  double attention_dropout = 0.25;
  int output_dim = 1024;

  void validate() const;
};

// One pre-attention stage: affine, then layer norm, then GELU, then dropout.
struct PreAttentionLayer {
  AffineParams affine;
  LayerNormParams norm;
};

// alpha = score(tanh(tanh_gate(h)) * sigmoid(sigmoid_gate(h)))
struct GatedAttentionParams {
  AffineParams tanh_gate;     // hidden -> hidden
  AffineParams sigmoid_gate;  // hidden -> hidden
  AffineParams score;         // hidden -> 1
};

struct SlideEncoderParams {
  std::vector<PreAttentionLayer> pre;
  std::vector<GatedAttentionParams> heads;
  AffineParams post;  // (heads * hidden) -> output_dim

  template <typename F>
  void visit(F&& f) {
    char name[64];
    for (size_t i = 0; i < pre.size(); ++i) {
      auto tag = [&](const char* part) {
        std::snprintf(name, sizeof(name), "slide.pre%zu.%s", i, part);
        return name;
      };
      f(tag("w"), pre[i].affine.w);
      f(tag("b"), pre[i].affine.b);
      f(tag("ln_gain"), pre[i].norm.gain);
      f(tag("ln_bias"), pre[i].norm.bias);
    }
    for (size_t m = 0; m < heads.size(); ++m) {
      auto tag = [&](const char* part) {
        std::snprintf(name, sizeof(name), "slide.head%zu.%s", m, part);
        return name;
      };
      f(tag("a_w"), heads[m].tanh_gate.w);
      f(tag("a_b"), heads[m].tanh_gate.b);
      f(tag("b_w"), heads[m].sigmoid_gate.w);
      f(tag("b_b"), heads[m].sigmoid_gate.b);
      f(tag("c_w"), heads[m].score.w);
      f(tag("c_b"), heads[m].score.b);
    }
    f("slide.post.w", post.w);
    f("slide.post.b", post.b);
  }

  long long param_count() const;
};

// id plus N x input_dim patch features, N >= 1
struct PatchBag {
  std::string id;
  Matrix patches;
};

SlideEncoderParams init_slide_encoder(const SlideEncoderConfig& cfg, Rng& rng);

// Pre-attention stack: stages are affine -> layer norm -> GELU -> dropout.
// The final stage widens to heads * hidden_dim. Output: N x (heads * hidden).
Tape::Var pre_attention_forward(Tape& t, const VarBinding& vb,
                                const SlideEncoderConfig& cfg,
                                const SlideEncoderParams& p, Tape::Var x,
                                Rng* rng, bool training);

// Raw gated attention scores for one head, N x 1. Dropout is applied to the
// tanh and sigmoid branch outputs independently in training mode.
Tape::Var gated_attention_scores(Tape& t, const VarBinding& vb,
                                 const GatedAttentionParams& head, Tape::Var h,
                                 double dropout, Rng* rng, bool training);

// softmax(alpha)^T h -> 1 x hidden; a convex combination of the rows of h.
Tape::Var attention_pool(Tape& t, Tape::Var h, Tape::Var raw_scores);

// Full slide encoder: pre-attention, chunk into heads, per-head gated pooling,
// concat, post-attention projection. Output: 1 x output_dim.
Tape::Var slide_encoder_forward(Tape& t, const VarBinding& vb,
                                const SlideEncoderConfig& cfg,
                                const SlideEncoderParams& p, Tape::Var x,
                                Rng* rng, bool training);

// Convenience entry points running on a private tape. Inference (training =
// false) is deterministic and ignores rng.
Matrix encode_bag(const PatchBag& bag, const SlideEncoderParams& p,
                  const SlideEncoderConfig& cfg, Rng* rng = nullptr,
                  bool training = false);

// Patient embedding: union of all patches across the given bags.
Matrix encode_patient(const std::vector<PatchBag>& bags, const SlideEncoderParams& p,
                      const SlideEncoderConfig& cfg, Rng* rng = nullptr,
                      bool training = false);

PatchBag merge_bags(const std::vector<PatchBag>& bags);

}  // namespace thd
