#pragma once

#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include "thd/params.hpp"

namespace thd {

// Per-gene alteration slots, fixed order. A gene's block is the four CNV
// classes followed by the three SNV/indel classes.
enum class CnvClass { None = -1, TwoCopyDeletion = 0, Loss = 1, Gain = 2, Amplification = 3 };
enum class MutClass { SmallCoding = 4, LargeCoding = 5, NonCoding = 6 };

constexpr int kVariantSlots = 7;

struct VariantCall {
  int gene = 0;
  CnvClass cnv = CnvClass::None;
  std::vector<MutClass> muts;
};

// Multi-hot variant vector of length 7 * gene_count.
struct GenomicProfile {
  int gene_count = 0;
  std::vector<double> multi_hot;
};

// Multiple calls on one gene OR-combine; duplicated calls are idempotent.
GenomicProfile build_variant_vector(const std::vector<VariantCall>& calls,
                                    int gene_count);

struct GenomicEncoderConfig {
  int gene_count = 239;
  int hidden_dim = 0;  // 0 means "input size", the full-scale setting
  int output_dim = 1024;
  double dropout = 0.2;

  int input_dim() const { return kVariantSlots * gene_count; }
  int hidden() const { return hidden_dim > 0 ? hidden_dim : input_dim(); }
  void validate() const;
};

// Four affine layers (input, two hidden, output) with ReLU and dropout after
// each of the first three.
struct GenomicEncoderParams {
  std::vector<AffineParams> layers;

  template <typename F>
  void visit(F&& f) {
    char name[48];
    for (size_t i = 0; i < layers.size(); ++i) {
      std::snprintf(name, sizeof(name), "genomic.l%zu.w", i);
      f(name, layers[i].w);
      std::snprintf(name, sizeof(name), "genomic.l%zu.b", i);
      f(name, layers[i].b);
    }
  }

  long long param_count() const;
};

GenomicEncoderParams init_genomic_encoder(const GenomicEncoderConfig& cfg, Rng& rng);

Tape::Var genomic_forward(Tape& t, const VarBinding& vb,
                          const GenomicEncoderConfig& cfg,
                          const GenomicEncoderParams& p, Tape::Var x, Rng* rng,
                          bool training);

Matrix encode_genomic(const GenomicProfile& profile, const GenomicEncoderParams& p,
                      const GenomicEncoderConfig& cfg, Rng* rng = nullptr,
                      bool training = false);

// log2(tpm + 1); the pseudocount keeps zero expression defined.
double log2_tpm_normalize(double tpm);

// Gene ids with log2-normalized expression values; ids must be unique.
struct TranscriptomicProfile {
  std::vector<int> gene_ids;
  std::vector<double> values;
};

struct TranscriptomicEncoderConfig {
  int vocab_size = 4096;
  int gene_dim = 64;  // paper-scale value is 512
  int depth = 1;
  int attention_heads = 8;
  int ff_mult = 4;
  double dropout = 0.2;
  int output_dim = 1024;
  double ln_eps = 1e-5;

  void validate() const;
};

struct TransformerBlockParams {
  AffineParams q, k, v, o;
  AffineParams ff1, ff2;
  LayerNormParams norm1, norm2;
};

struct TranscriptomicEncoderParams {
  Matrix gene_table;        // vocab x gene_dim identity embeddings
  AffineParams value1;      // 1 -> gene_dim
  AffineParams value2;      // gene_dim -> gene_dim
  LayerNormParams token_norm;
  Matrix cls;               // 1 x gene_dim, prepended and included in the mean
  std::vector<TransformerBlockParams> blocks;
  AffineParams proj1;       // gene_dim -> gene_dim
  AffineParams proj2;       // gene_dim -> output_dim

  template <typename F>
  void visit(F&& f) {
    f("rna.gene_table", gene_table);
    f("rna.value1.w", value1.w);
    f("rna.value1.b", value1.b);
    f("rna.value2.w", value2.w);
    f("rna.value2.b", value2.b);
    f("rna.token_norm.gain", token_norm.gain);
    f("rna.token_norm.bias", token_norm.bias);
    f("rna.cls", cls);
    char name[48];
    for (size_t i = 0; i < blocks.size(); ++i) {
      auto tag = [&](const char* part) {
        std::snprintf(name, sizeof(name), "rna.block%zu.%s", i, part);
        return name;
      };
      f(tag("q.w"), blocks[i].q.w);
      f(tag("q.b"), blocks[i].q.b);
      f(tag("k.w"), blocks[i].k.w);
      f(tag("k.b"), blocks[i].k.b);
      f(tag("v.w"), blocks[i].v.w);
      f(tag("v.b"), blocks[i].v.b);
      f(tag("o.w"), blocks[i].o.w);
      f(tag("o.b"), blocks[i].o.b);
      f(tag("ff1.w"), blocks[i].ff1.w);
      f(tag("ff1.b"), blocks[i].ff1.b);
      f(tag("ff2.w"), blocks[i].ff2.w);
      f(tag("ff2.b"), blocks[i].ff2.b);
      f(tag("norm1.gain"), blocks[i].norm1.gain);
      f(tag("norm1.bias"), blocks[i].norm1.bias);
      f(tag("norm2.gain"), blocks[i].norm2.gain);
      f(tag("norm2.bias"), blocks[i].norm2.bias);
    }
    f("rna.proj1.w", proj1.w);
    f("rna.proj1.b", proj1.b);
    f("rna.proj2.w", proj2.w);
    f("rna.proj2.b", proj2.b);
  }

  long long param_count() const;
};

TranscriptomicEncoderParams init_transcriptomic_encoder(
    const TranscriptomicEncoderConfig& cfg, Rng& rng);

Tape::Var transcriptomic_forward(Tape& t, const VarBinding& vb,
                                 const TranscriptomicEncoderConfig& cfg,
                                 const TranscriptomicEncoderParams& p,
                                 const TranscriptomicProfile& profile, Rng* rng,
                                 bool training);

Matrix encode_transcriptome(const TranscriptomicProfile& profile,
                            const TranscriptomicEncoderParams& p,
                            const TranscriptomicEncoderConfig& cfg,
                            Rng* rng = nullptr, bool training = false);

enum class MolecularMode { Genomic, Transcriptomic };

using MolecularProfile = std::variant<GenomicProfile, TranscriptomicProfile>;

inline MolecularMode profile_mode(const MolecularProfile& p) {
  return std::holds_alternative<GenomicProfile>(p) ? MolecularMode::Genomic
                                                   : MolecularMode::Transcriptomic;
}

// File loaders for the documented on-disk formats: TSV "gene_id<TAB>tpm" rows
// (normalization applied on load) and a JSON list of {gene, cnv, muts[]}.
TranscriptomicProfile load_transcriptomic_tsv(const std::string& path);
std::vector<VariantCall> load_variant_calls_json(const std::string& path);

}  // namespace thd
