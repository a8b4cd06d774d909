#include "thd/molecular.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace thd {

GenomicProfile build_variant_vector(const std::vector<VariantCall>& calls,
                                    int gene_count) {
  if (gene_count < 1) throw ValidationError("build_variant_vector: gene_count < 1");
  GenomicProfile p;
  p.gene_count = gene_count;
  p.multi_hot.assign(static_cast<size_t>(kVariantSlots) * gene_count, 0.0);
  for (const VariantCall& c : calls) {
    if (c.gene < 0 || c.gene >= gene_count)
      throw ValidationError("build_variant_vector: gene index " +
                            std::to_string(c.gene) + " out of range [0," +
                            std::to_string(gene_count) + ")");
    const size_t base = static_cast<size_t>(c.gene) * kVariantSlots;
    if (c.cnv != CnvClass::None) p.multi_hot[base + static_cast<int>(c.cnv)] = 1.0;
    for (MutClass m : c.muts) p.multi_hot[base + static_cast<int>(m)] = 1.0;
  }
  return p;
}

void GenomicEncoderConfig::validate() const {
  if (gene_count < 1) throw ValidationError("GenomicEncoderConfig: gene_count < 1");
  if (hidden_dim < 0) throw ValidationError("GenomicEncoderConfig: hidden_dim < 0");
  if (output_dim < 1) throw ValidationError("GenomicEncoderConfig: output_dim < 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ValidationError("GenomicEncoderConfig: dropout must be in [0, 1)");
}

long long GenomicEncoderParams::param_count() const {
  long long n = 0;
  for (const AffineParams& l : layers) n += affine_param_count(l);
  return n;
}

GenomicEncoderParams init_genomic_encoder(const GenomicEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  GenomicEncoderParams p;
  const int in = cfg.input_dim(), h = cfg.hidden();
  p.layers.push_back(init_affine(in, h, rng));
  p.layers.push_back(init_affine(h, h, rng));
  p.layers.push_back(init_affine(h, h, rng));
  p.layers.push_back(init_affine(h, cfg.output_dim, rng));
  return p;
}

Tape::Var genomic_forward(Tape& t, const VarBinding& vb,
                          const GenomicEncoderConfig& cfg,
                          const GenomicEncoderParams& p, Tape::Var x, Rng* rng,
                          bool training) {
  if (t.value(x).cols != cfg.input_dim())
    throw ValidationError("genomic_forward: profile length " +
                          std::to_string(t.value(x).cols) + " != 7 * gene_count = " +
                          std::to_string(cfg.input_dim()));
  if (training && !rng)
    throw ValidationError("genomic_forward: training mode needs an rng");
  Tape::Var h = x;
  for (size_t i = 0; i < p.layers.size(); ++i) {
    h = affine(t, vb, p.layers[i], h);
    if (i + 1 == p.layers.size()) break;  // output layer stays linear
    h = t.activate(Activation::Relu, h);
    if (training && cfg.dropout > 0.0) {
      const Matrix& hv = t.value(h);
      h = t.mul_mask(h, dropout_mask(cfg.dropout, hv.rows, hv.cols, *rng, true));
    }
  }
  return h;
}

Matrix encode_genomic(const GenomicProfile& profile, const GenomicEncoderParams& p,
                      const GenomicEncoderConfig& cfg, Rng* rng, bool training) {
  if (profile.multi_hot.size() != static_cast<size_t>(cfg.input_dim()))
    throw ValidationError("encode_genomic: profile length mismatch");
  Tape t;
  VarBinding vb = VarBinding::bind(t, p);
  Tape::Var x = t.input(Matrix::row_vector(profile.multi_hot), false);
  return t.value(genomic_forward(t, vb, cfg, p, x, rng, training));
}

double log2_tpm_normalize(double tpm) {
  if (tpm < 0.0) throw ValidationError("log2_tpm_normalize: negative TPM");
  return std::log2(tpm + 1.0);
}

void TranscriptomicEncoderConfig::validate() const {
  if (vocab_size < 1 || gene_dim < 1 || output_dim < 1)
    throw ValidationError("TranscriptomicEncoderConfig: dims must be >= 1");
  if (depth < 0) throw ValidationError("TranscriptomicEncoderConfig: depth < 0");
  if (attention_heads < 1 || gene_dim % attention_heads != 0)
    throw ValidationError(
        "TranscriptomicEncoderConfig: attention_heads must divide gene_dim");
  if (ff_mult < 1) throw ValidationError("TranscriptomicEncoderConfig: ff_mult < 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ValidationError("TranscriptomicEncoderConfig: dropout must be in [0, 1)");
}

long long TranscriptomicEncoderParams::param_count() const {
  long long n = 0;
  const_cast<TranscriptomicEncoderParams*>(this)->visit(
      [&](const char*, Matrix& m) { n += static_cast<long long>(m.size()); });
  return n;
}

TranscriptomicEncoderParams init_transcriptomic_encoder(
    const TranscriptomicEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  TranscriptomicEncoderParams p;
  p.gene_table = Matrix(cfg.vocab_size, cfg.gene_dim);
  for (double& v : p.gene_table.data) v = 0.02 * rng.normal();
  p.value1 = init_affine(1, cfg.gene_dim, rng);
  p.value2 = init_affine(cfg.gene_dim, cfg.gene_dim, rng);
  p.token_norm = init_layer_norm(cfg.gene_dim);
  p.cls = Matrix(1, cfg.gene_dim);
  for (double& v : p.cls.data) v = 0.02 * rng.normal();
  for (int d = 0; d < cfg.depth; ++d) {
    TransformerBlockParams b;
    b.q = init_affine(cfg.gene_dim, cfg.gene_dim, rng);
    b.k = init_affine(cfg.gene_dim, cfg.gene_dim, rng);
    b.v = init_affine(cfg.gene_dim, cfg.gene_dim, rng);
    b.o = init_affine(cfg.gene_dim, cfg.gene_dim, rng);
    b.ff1 = init_affine(cfg.gene_dim, cfg.ff_mult * cfg.gene_dim, rng);
    b.ff2 = init_affine(cfg.ff_mult * cfg.gene_dim, cfg.gene_dim, rng);
    b.norm1 = init_layer_norm(cfg.gene_dim);
    b.norm2 = init_layer_norm(cfg.gene_dim);
    p.blocks.push_back(std::move(b));
  }
  p.proj1 = init_affine(cfg.gene_dim, cfg.gene_dim, rng);
  p.proj2 = init_affine(cfg.gene_dim, cfg.output_dim, rng);
  return p;
}

namespace {

Tape::Var transformer_block(Tape& t, const VarBinding& vb,
                            const TranscriptomicEncoderConfig& cfg,
                            const TransformerBlockParams& b, Tape::Var x, Rng* rng,
                            bool training) {
  const int d = cfg.gene_dim;
  const int heads = cfg.attention_heads;
  const int hd = d / heads;
  Tape::Var q = affine(t, vb, b.q, x);
  Tape::Var k = affine(t, vb, b.k, x);
  Tape::Var v = affine(t, vb, b.v, x);
  std::vector<Tape::Var> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int hidx = 0; hidx < heads; ++hidx) {
    Tape::Var qh = t.slice_cols(q, hidx * hd, hd);
    Tape::Var kh = t.slice_cols(k, hidx * hd, hd);
    Tape::Var vh = t.slice_cols(v, hidx * hd, hd);
    Tape::Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_scale);
    ctx.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  Tape::Var attn = affine(t, vb, b.o, heads == 1 ? ctx[0] : t.concat_cols(ctx));
  if (training && cfg.dropout > 0.0) {
    const Matrix& av = t.value(attn);
    attn = t.mul_mask(attn, dropout_mask(cfg.dropout, av.rows, av.cols, *rng, true));
  }
  x = t.layer_norm_rows(t.add(x, attn), vb[b.norm1.gain], vb[b.norm1.bias], cfg.ln_eps);
  Tape::Var ff = affine(t, vb, b.ff2, t.activate(Activation::Relu, affine(t, vb, b.ff1, x)));
  if (training && cfg.dropout > 0.0) {
    const Matrix& fv = t.value(ff);
    ff = t.mul_mask(ff, dropout_mask(cfg.dropout, fv.rows, fv.cols, *rng, true));
  }
  return t.layer_norm_rows(t.add(x, ff), vb[b.norm2.gain], vb[b.norm2.bias], cfg.ln_eps);
}

}  // namespace

Tape::Var transcriptomic_forward(Tape& t, const VarBinding& vb,
                                 const TranscriptomicEncoderConfig& cfg,
                                 const TranscriptomicEncoderParams& p,
                                 const TranscriptomicProfile& profile, Rng* rng,
                                 bool training) {
  if (profile.gene_ids.empty())
    throw ValidationError("encode_transcriptome: empty profile");
  if (profile.gene_ids.size() != profile.values.size())
    throw ValidationError("encode_transcriptome: ids/values length mismatch");
  std::set<int> seen;
  for (int id : profile.gene_ids) {
    if (id < 0 || id >= cfg.vocab_size)
      throw ValidationError("encode_transcriptome: unknown gene id " +
                            std::to_string(id));
    if (!seen.insert(id).second)
      throw ValidationError("encode_transcriptome: duplicate gene id " +
                            std::to_string(id));
  }
  for (double v : profile.values)
    if (!std::isfinite(v))
      throw ValidationError("encode_transcriptome: non-finite expression value");
  if (training && !rng)
    throw ValidationError("encode_transcriptome: training mode needs an rng");

  // token_i = gene_table[id_i] + E(value_i), layer norm after the sum
  Tape::Var identity = t.gather_rows(vb[p.gene_table], profile.gene_ids);
  Matrix vals(static_cast<int>(profile.values.size()), 1);
  for (size_t i = 0; i < profile.values.size(); ++i)
    vals.at(static_cast<int>(i), 0) = profile.values[i];
  Tape::Var v = t.input(std::move(vals), false);
  if (training && cfg.dropout > 0.0) {
    const Matrix& vv = t.value(v);
    v = t.mul_mask(v, dropout_mask(cfg.dropout, vv.rows, vv.cols, *rng, true));
  }
  Tape::Var value_emb = affine(t, vb, p.value2,
                               t.activate(Activation::Relu, affine(t, vb, p.value1, v)));
  Tape::Var tokens = t.add(identity, value_emb);
  tokens = t.concat_rows({vb[p.cls], tokens});
  tokens = t.layer_norm_rows(tokens, vb[p.token_norm.gain], vb[p.token_norm.bias],
                             cfg.ln_eps);
  for (const TransformerBlockParams& b : p.blocks)
    tokens = transformer_block(t, vb, cfg, b, tokens, rng, training);
  Tape::Var pooled = t.mean_over_rows(tokens);  // CLS included in the mean
  Tape::Var h = t.activate(Activation::Gelu, affine(t, vb, p.proj1, pooled));
  return affine(t, vb, p.proj2, h);
}

Matrix encode_transcriptome(const TranscriptomicProfile& profile,
                            const TranscriptomicEncoderParams& p,
                            const TranscriptomicEncoderConfig& cfg, Rng* rng,
                            bool training) {
  Tape t;
  VarBinding vb = VarBinding::bind(t, p);
  return t.value(transcriptomic_forward(t, vb, cfg, p, profile, rng, training));
}

TranscriptomicProfile load_transcriptomic_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open transcriptomic file: " + path);
  TranscriptomicProfile p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string gene, tpm;
    if (!std::getline(ss, gene, '\t') || !std::getline(ss, tpm)) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": expected gene_id<TAB>tpm");
    }
    try {
      p.gene_ids.push_back(std::stoi(gene));
      p.values.push_back(log2_tpm_normalize(std::stod(tpm)));
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": cannot parse '" + line + "'");
    }
  }
  if (p.gene_ids.empty()) throw ValidationError(path + ": empty profile");
  return p;
}

std::vector<VariantCall> load_variant_calls_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open variant file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_array()) throw ValidationError(path + ": expected a JSON list of calls");
  static const std::map<std::string, CnvClass> cnv_names = {
      {"none", CnvClass::None},
      {"two-copy-deletion", CnvClass::TwoCopyDeletion},
      {"loss", CnvClass::Loss},
      {"gain", CnvClass::Gain},
      {"amplification", CnvClass::Amplification}};
  static const std::map<std::string, MutClass> mut_names = {
      {"small-coding", MutClass::SmallCoding},
      {"large-coding", MutClass::LargeCoding},
      {"non-coding", MutClass::NonCoding}};
  std::vector<VariantCall> calls;
  for (const auto& e : j) {
    VariantCall c;
    if (!e.contains("gene") || !e["gene"].is_number_integer())
      throw ValidationError(path + ": call missing integer field 'gene'");
    c.gene = e["gene"].get<int>();
    if (e.contains("cnv")) {
      auto it = cnv_names.find(e["cnv"].get<std::string>());
      if (it == cnv_names.end())
        throw ValidationError(path + ": unknown cnv class '" +
                              e["cnv"].get<std::string>() + "'");
      c.cnv = it->second;
    }
    if (e.contains("muts")) {
      for (const auto& m : e["muts"]) {
        auto it = mut_names.find(m.get<std::string>());
        if (it == mut_names.end())
          throw ValidationError(path + ": unknown mutation class '" +
                                m.get<std::string>() + "'");
        c.muts.push_back(it->second);
      }
    }
    calls.push_back(std::move(c));
  }
  return calls;
}

}  // namespace thd
