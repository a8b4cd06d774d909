#include "thd/slide_encoder.hpp"

#include <cstdio>

namespace thd {

void SlideEncoderConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
    throw ValidationError("SlideEncoderConfig: dims must be >= 1");
  if (heads < 1) throw ValidationError("SlideEncoderConfig: heads must be >= 1");
  if (pre_attention_layers < 1)
    throw ValidationError("SlideEncoderConfig: pre_attention_layers must be >= 1");
  if (pre_dropout < 0.0 || pre_dropout >= 1.0 || attention_dropout < 0.0 ||
      attention_dropout >= 1.0)
    throw ValidationError("SlideEncoderConfig: dropout must be in [0, 1)");
}

long long SlideEncoderParams::param_count() const {
  long long n = 0;
  const_cast<SlideEncoderParams*>(this)->visit(
      [&](const char*, Matrix& m) { n += static_cast<long long>(m.size()); });
  return n;
}

SlideEncoderParams init_slide_encoder(const SlideEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  SlideEncoderParams p;
  int in = cfg.input_dim;
  for (int i = 0; i < cfg.pre_attention_layers; ++i) {
    const bool last = i + 1 == cfg.pre_attention_layers;
    const int out = last ? cfg.heads * cfg.hidden_dim : cfg.hidden_dim;
    PreAttentionLayer layer;
    layer.affine = init_affine(in, out, rng);
    layer.norm = init_layer_norm(out);
    p.pre.push_back(std::move(layer));
    in = out;
  }
  for (int m = 0; m < cfg.heads; ++m) {
    GatedAttentionParams head;
    head.tanh_gate = init_affine(cfg.hidden_dim, cfg.hidden_dim, rng);
    head.sigmoid_gate = init_affine(cfg.hidden_dim, cfg.hidden_dim, rng);
    head.score = init_affine(cfg.hidden_dim, 1, rng);
    p.heads.push_back(std::move(head));
  }
  p.post = init_affine(cfg.heads * cfg.hidden_dim, cfg.output_dim, rng);
  return p;
}

Tape::Var pre_attention_forward(Tape& t, const VarBinding& vb,
                                const SlideEncoderConfig& cfg,
                                const SlideEncoderParams& p, Tape::Var x,
                                Rng* rng, bool training) {
  if (t.value(x).cols != cfg.input_dim)
    throw ValidationError("pre_attention: bag has " +
                          std::to_string(t.value(x).cols) + " feature dims, config wants " +
                          std::to_string(cfg.input_dim));
  if (training && !rng)
    throw ValidationError("pre_attention: training mode needs an rng");
  Tape::Var h = x;
  for (const PreAttentionLayer& layer : p.pre) {
    h = affine(t, vb, layer.affine, h);
    h = t.layer_norm_rows(h, vb[layer.norm.gain], vb[layer.norm.bias]);
    h = t.activate(Activation::Gelu, h);
    if (training && cfg.pre_dropout > 0.0) {
      const Matrix& hv = t.value(h);
      h = t.mul_mask(h, dropout_mask(cfg.pre_dropout, hv.rows, hv.cols, *rng, true));
    }
  }
  return h;
}

Tape::Var gated_attention_scores(Tape& t, const VarBinding& vb,
                                 const GatedAttentionParams& head, Tape::Var h,
                                 double dropout, Rng* rng, bool training) {
  if (t.value(h).cols != head.tanh_gate.w.rows)
    throw ValidationError("gated_attention_scores: feature width mismatch");
  if (training && !rng)
    throw ValidationError("gated_attention_scores: training mode needs an rng");
  Tape::Var u = t.activate(Activation::Tanh, affine(t, vb, head.tanh_gate, h));
  Tape::Var g = t.activate(Activation::Sigmoid, affine(t, vb, head.sigmoid_gate, h));
  if (training && dropout > 0.0) {
    const Matrix& uv = t.value(u);
    u = t.mul_mask(u, dropout_mask(dropout, uv.rows, uv.cols, *rng, true));
    g = t.mul_mask(g, dropout_mask(dropout, uv.rows, uv.cols, *rng, true));
  }
  return affine(t, vb, head.score, t.mul(u, g));
}

Tape::Var attention_pool(Tape& t, Tape::Var h, Tape::Var raw_scores) {
  const Matrix& hv = t.value(h);
  const Matrix& av = t.value(raw_scores);
  if (hv.rows == 0) throw ValidationError("attention_pool: empty bag");
  if (av.rows != hv.rows || av.cols != 1)
    throw ValidationError("attention_pool: scores must be Nx1 matching h rows");
  Tape::Var weights = t.softmax_rows(t.transpose(raw_scores));  // 1 x N
  return t.matmul(weights, h);                                  // 1 x hidden
}

Tape::Var slide_encoder_forward(Tape& t, const VarBinding& vb,
                                const SlideEncoderConfig& cfg,
                                const SlideEncoderParams& p, Tape::Var x,
                                Rng* rng, bool training) {
  Tape::Var h = pre_attention_forward(t, vb, cfg, p, x, rng, training);
  std::vector<Tape::Var> pooled;
  pooled.reserve(p.heads.size());
  for (size_t m = 0; m < p.heads.size(); ++m) {
    Tape::Var chunk = cfg.heads == 1
                          ? h
                          : t.slice_cols(h, static_cast<int>(m) * cfg.hidden_dim,
                                         cfg.hidden_dim);
    Tape::Var alpha = gated_attention_scores(t, vb, p.heads[m], chunk,
                                             cfg.attention_dropout, rng, training);
    pooled.push_back(attention_pool(t, chunk, alpha));
  }
  Tape::Var concat = pooled.size() == 1 ? pooled[0] : t.concat_cols(pooled);
  return affine(t, vb, p.post, concat);
}

Matrix encode_bag(const PatchBag& bag, const SlideEncoderParams& p,
                  const SlideEncoderConfig& cfg, Rng* rng, bool training) {
  if (bag.patches.rows < 1) throw ValidationError("encode_bag: bag must have N >= 1");
  if (!bag.patches.all_finite())
    throw ValidationError("encode_bag: non-finite patch features in " + bag.id);
  Tape t;
  VarBinding vb = VarBinding::bind(t, p);
  Tape::Var x = t.input(bag.patches, false);
  return t.value(slide_encoder_forward(t, vb, cfg, p, x, rng, training));
}

PatchBag merge_bags(const std::vector<PatchBag>& bags) {
  if (bags.empty()) throw ValidationError("merge_bags: empty bag list");
  int total = 0;
  for (const PatchBag& b : bags) {
    if (b.patches.cols != bags[0].patches.cols)
      throw ValidationError("merge_bags: feature dim mismatch across bags");
    total += b.patches.rows;
  }
  PatchBag merged;
  merged.id = bags[0].id;
  merged.patches = Matrix(total, bags[0].patches.cols);
  int row = 0;
  for (const PatchBag& b : bags) {
    for (int i = 0; i < b.patches.rows; ++i, ++row)
      for (int j = 0; j < b.patches.cols; ++j)
        merged.patches.at(row, j) = b.patches.at(i, j);
  }
  return merged;
}

Matrix encode_patient(const std::vector<PatchBag>& bags, const SlideEncoderParams& p,
                      const SlideEncoderConfig& cfg, Rng* rng, bool training) {
  return encode_bag(merge_bags(bags), p, cfg, rng, training);
}

}  // namespace thd
