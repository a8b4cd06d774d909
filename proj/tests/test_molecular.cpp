#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gradcheck.hpp"
#include "thd/molecular.hpp"

using namespace thd;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

std::vector<double> ln_vec(const std::vector<double>& x, const LayerNormParams& n,
                           double eps) {
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> y(x.size());
  for (size_t j = 0; j < x.size(); ++j)
    y[j] = n.gain.at(0, static_cast<int>(j)) * (x[j] - mean) * inv +
           n.bias.at(0, static_cast<int>(j));
  return y;
}

std::vector<double> affine_vec(const std::vector<double>& x, const AffineParams& a) {
  std::vector<double> y(static_cast<size_t>(a.w.cols));
  for (int j = 0; j < a.w.cols; ++j) {
    double s = a.b.at(0, j);
    for (int k = 0; k < a.w.rows; ++k) s += x[static_cast<size_t>(k)] * a.w.at(k, j);
    y[static_cast<size_t>(j)] = s;
  }
  return y;
}

// loop-level reimplementation of the transcriptomic encoder, inference mode
std::vector<double> oracle_transcriptome(const TranscriptomicEncoderConfig& cfg,
                                         const TranscriptomicEncoderParams& p,
                                         const TranscriptomicProfile& profile) {
  std::vector<std::vector<double>> tokens;
  tokens.push_back(p.cls.row(0));
  for (size_t i = 0; i < profile.gene_ids.size(); ++i) {
    std::vector<double> value_in{profile.values[i]};
    std::vector<double> e = affine_vec(value_in, p.value1);
    for (double& v : e) v = v > 0.0 ? v : 0.0;
    e = affine_vec(e, p.value2);
    std::vector<double> tok = p.gene_table.row(profile.gene_ids[i]);
    for (size_t j = 0; j < tok.size(); ++j) tok[j] += e[j];
    tokens.push_back(std::move(tok));
  }
  for (auto& t : tokens) t = ln_vec(t, p.token_norm, cfg.ln_eps);

  const int d = cfg.gene_dim;
  const int hd = d / cfg.attention_heads;
  for (const TransformerBlockParams& b : p.blocks) {
    std::vector<std::vector<double>> q, k, v;
    for (const auto& t : tokens) {
      q.push_back(affine_vec(t, b.q));
      k.push_back(affine_vec(t, b.k));
      v.push_back(affine_vec(t, b.v));
    }
    std::vector<std::vector<double>> ctx(tokens.size(), std::vector<double>(static_cast<size_t>(d), 0.0));
    for (int h = 0; h < cfg.attention_heads; ++h) {
      const int off = h * hd;
      for (size_t i = 0; i < tokens.size(); ++i) {
        std::vector<double> scores(tokens.size(), 0.0);
        for (size_t j = 0; j < tokens.size(); ++j) {
          double s = 0.0;
          for (int x = 0; x < hd; ++x)
            s += q[i][static_cast<size_t>(off + x)] * k[j][static_cast<size_t>(off + x)];
          scores[j] = s / std::sqrt(static_cast<double>(hd));
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double denom = 0.0;
        for (double& s : scores) {
          s = std::exp(s - mx);
          denom += s;
        }
        for (double& s : scores) s /= denom;
        for (size_t j = 0; j < tokens.size(); ++j)
          for (int x = 0; x < hd; ++x)
            ctx[i][static_cast<size_t>(off + x)] += scores[j] * v[j][static_cast<size_t>(off + x)];
      }
    }
    for (size_t i = 0; i < tokens.size(); ++i) {
      std::vector<double> attn = affine_vec(ctx[i], b.o);
      for (size_t j = 0; j < attn.size(); ++j) attn[j] += tokens[i][j];
      tokens[i] = ln_vec(attn, b.norm1, cfg.ln_eps);
      std::vector<double> ff = affine_vec(tokens[i], b.ff1);
      for (double& x : ff) x = x > 0.0 ? x : 0.0;
      ff = affine_vec(ff, b.ff2);
      for (size_t j = 0; j < ff.size(); ++j) ff[j] += tokens[i][j];
      tokens[i] = ln_vec(ff, b.norm2, cfg.ln_eps);
    }
  }

  std::vector<double> pooled(static_cast<size_t>(d), 0.0);
  for (const auto& t : tokens)
    for (int j = 0; j < d; ++j) pooled[static_cast<size_t>(j)] += t[static_cast<size_t>(j)];
  for (double& v : pooled) v /= static_cast<double>(tokens.size());

  std::vector<double> h = affine_vec(pooled, p.proj1);
  for (double& v : h) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return affine_vec(h, p.proj2);
}

}  // namespace

TEST_CASE("build_variant_vector: paper-scale length and slot order") {
  GenomicProfile empty = build_variant_vector({}, 239);
  CHECK(empty.multi_hot.size() == 1673);
  for (double v : empty.multi_hot) CHECK(v == 0.0);

  VariantCall call;
  call.gene = 2;
  call.cnv = CnvClass::Amplification;
  call.muts = {MutClass::SmallCoding};
  GenomicProfile p = build_variant_vector({call}, 4);
  const std::vector<double> want_block{0, 0, 0, 1, 1, 0, 0};
  for (int j = 0; j < 7; ++j) {
    CHECK(p.multi_hot[static_cast<size_t>(2 * 7 + j)] == want_block[static_cast<size_t>(j)]);
    CHECK(p.multi_hot[static_cast<size_t>(j)] == 0.0);
  }

  GenomicProfile twice = build_variant_vector({call, call}, 4);
  CHECK(twice.multi_hot == p.multi_hot);

  VariantCall other;
  other.gene = 0;
  other.cnv = CnvClass::Loss;
  GenomicProfile ab = build_variant_vector({call, other}, 4);
  GenomicProfile ba = build_variant_vector({other, call}, 4);
  CHECK(ab.multi_hot == ba.multi_hot);

  VariantCall bad;
  bad.gene = 4;
  CHECK_THROWS_AS(build_variant_vector({bad}, 4), ValidationError);
}

TEST_CASE("genomic encoder: zero params, shape, determinism") {
  GenomicEncoderConfig cfg;
  cfg.gene_count = 4;
  cfg.hidden_dim = 8;
  cfg.output_dim = 6;
  Rng rng(21);
  GenomicEncoderParams p = init_genomic_encoder(cfg, rng);
  CHECK(p.layers.size() == 4);

  GenomicEncoderParams zero = p;
  for (AffineParams& l : zero.layers) {
    for (double& v : l.w.data) v = 0.0;
    for (double& v : l.b.data) v = 0.0;
  }
  GenomicProfile profile = build_variant_vector(
      {VariantCall{1, CnvClass::Gain, {MutClass::NonCoding}}}, 4);
  Matrix out = encode_genomic(profile, zero, cfg);
  CHECK(out.rows == 1);
  CHECK(out.cols == 6);
  for (double v : out.data) CHECK(v == 0.0);

  Matrix a = encode_genomic(profile, p, cfg);
  Matrix b = encode_genomic(profile, p, cfg);
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);

  GenomicProfile wrong;
  wrong.gene_count = 5;
  wrong.multi_hot.assign(35, 0.0);
  CHECK_THROWS_AS(encode_genomic(wrong, p, cfg), ValidationError);
}

TEST_CASE("genomic encoder matches a straight-line oracle") {
  GenomicEncoderConfig cfg;
  cfg.gene_count = 4;
  cfg.hidden_dim = 5;
  cfg.output_dim = 3;
  Rng rng(22);
  GenomicEncoderParams p = init_genomic_encoder(cfg, rng);
  GenomicProfile profile = build_variant_vector(
      {VariantCall{0, CnvClass::TwoCopyDeletion, {}},
       VariantCall{3, CnvClass::None, {MutClass::SmallCoding, MutClass::LargeCoding}}},
      4);
  Matrix got = encode_genomic(profile, p, cfg);

  std::vector<double> h = profile.multi_hot;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    h = affine_vec(h, p.layers[l]);
    if (l + 1 < p.layers.size())
      for (double& v : h) v = v > 0.0 ? v : 0.0;
  }
  for (int j = 0; j < cfg.output_dim; ++j)
    CHECK(std::abs(got.at(0, j) - h[static_cast<size_t>(j)]) < 1e-10);
}

TEST_CASE("genomic encoder full-scale parameter count") {
  GenomicEncoderConfig cfg;  // defaults: G = 239, hidden = input = 1673, out 1024
  Rng rng(23);
  GenomicEncoderParams p = init_genomic_encoder(cfg, rng);
  CHECK(cfg.input_dim() == 1673);
  CHECK(cfg.hidden() == 1673);
  CHECK(p.param_count() == 10115982);
}

TEST_CASE("genomic encoder gradients match finite differences") {
  GenomicEncoderConfig cfg;
  cfg.gene_count = 2;
  cfg.hidden_dim = 4;
  cfg.output_dim = 3;
  Rng rng(24);
  GenomicEncoderParams p = init_genomic_encoder(cfg, rng);
  // keep ReLU pre-activations away from the kink at exactly zero
  p.visit([&](const char*, Matrix& m) {
    for (double& v : m.data) v += 0.05 * rng.normal();
  });
  GenomicProfile profile = build_variant_vector(
      {VariantCall{0, CnvClass::Gain, {MutClass::NonCoding}}}, 2);
  Matrix probe = random_matrix(cfg.output_dim, 1, rng);

  auto eval = [&]() {
    Tape t;
    VarBinding vb = VarBinding::bind(t, p);
    Tape::Var x = t.input(Matrix::row_vector(profile.multi_hot), false);
    Tape::Var out = genomic_forward(t, vb, cfg, p, x, nullptr, false);
    return t.value(t.sum_all(t.matmul(out, t.input(probe, false)))).at(0, 0);
  };
  Tape t;
  VarBinding vb = VarBinding::bind(t, p);
  Tape::Var x = t.input(Matrix::row_vector(profile.multi_hot), false);
  Tape::Var out = genomic_forward(t, vb, cfg, p, x, nullptr, false);
  t.backward(t.sum_all(t.matmul(out, t.input(probe, false))));

  std::vector<Matrix*> params;
  p.visit([&](const char*, Matrix& m) { params.push_back(&m); });
  CHECK(gradcheck::max_rel_err(params, vb.grads(t, p), eval) < 1e-4);
}

TEST_CASE("log2_tpm_normalize") {
  CHECK(log2_tpm_normalize(0.0) == 0.0);
  CHECK(log2_tpm_normalize(1.0) == doctest::Approx(1.0));
  CHECK(log2_tpm_normalize(1023.0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(log2_tpm_normalize(-0.5), ValidationError);
}

TEST_CASE("transcriptomic encoder: depth 0 is token-order invariant") {
  TranscriptomicEncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.gene_dim = 4;
  cfg.depth = 0;
  cfg.attention_heads = 2;
  cfg.output_dim = 5;
  Rng rng(25);
  TranscriptomicEncoderParams p = init_transcriptomic_encoder(cfg, rng);

  TranscriptomicProfile prof{{1, 3, 5, 7}, {0.5, 1.2, -0.3, 2.0}};
  TranscriptomicProfile permuted{{5, 7, 1, 3}, {-0.3, 2.0, 0.5, 1.2}};
  Matrix a = encode_transcriptome(prof, p, cfg);
  Matrix b = encode_transcriptome(permuted, p, cfg);
  CHECK(a.cols == 5);
  for (size_t i = 0; i < a.data.size(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) < 1e-12);

  // with the value MLP and CLS zeroed the output is a function of the gene
  // identity row alone
  TranscriptomicEncoderParams ident = p;
  for (double& v : ident.value1.w.data) v = 0.0;
  for (double& v : ident.value1.b.data) v = 0.0;
  for (double& v : ident.value2.w.data) v = 0.0;
  for (double& v : ident.value2.b.data) v = 0.0;
  for (double& v : ident.cls.data) v = 0.0;
  Matrix low = encode_transcriptome({{1}, {0.0}}, ident, cfg);
  Matrix high = encode_transcriptome({{1}, {5.0}}, ident, cfg);
  for (size_t i = 0; i < low.data.size(); ++i) CHECK(low.data[i] == high.data[i]);
  Matrix other_gene = encode_transcriptome({{2}, {0.0}}, ident, cfg);
  double diff = 0.0;
  for (size_t i = 0; i < low.data.size(); ++i)
    diff += std::abs(low.data[i] - other_gene.data[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("transcriptomic encoder rejects bad profiles") {
  TranscriptomicEncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.gene_dim = 4;
  cfg.depth = 0;
  cfg.attention_heads = 2;
  Rng rng(26);
  TranscriptomicEncoderParams p = init_transcriptomic_encoder(cfg, rng);
  CHECK_THROWS_AS(encode_transcriptome({{}, {}}, p, cfg), ValidationError);
  CHECK_THROWS_AS(encode_transcriptome({{9}, {1.0}}, p, cfg), ValidationError);
  CHECK_THROWS_AS(encode_transcriptome({{1, 1}, {1.0, 2.0}}, p, cfg), ValidationError);
}

TEST_CASE("transcriptomic encoder matches a straight-line oracle (depth 1)") {
  TranscriptomicEncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.gene_dim = 4;
  cfg.depth = 1;
  cfg.attention_heads = 2;
  cfg.output_dim = 6;
  Rng rng(27);
  TranscriptomicEncoderParams p = init_transcriptomic_encoder(cfg, rng);
  TranscriptomicProfile prof{{0, 2, 4}, {1.0, -0.5, 0.25}};
  Matrix got = encode_transcriptome(prof, p, cfg);
  std::vector<double> want = oracle_transcriptome(cfg, p, prof);
  for (int j = 0; j < cfg.output_dim; ++j)
    CHECK(std::abs(got.at(0, j) - want[static_cast<size_t>(j)]) < 1e-9);
}

TEST_CASE("transcriptomic encoder gradients match finite differences") {
  TranscriptomicEncoderConfig cfg;
  cfg.vocab_size = 6;
  cfg.gene_dim = 4;
  cfg.depth = 1;
  cfg.attention_heads = 2;
  cfg.ff_mult = 2;
  cfg.output_dim = 3;
  Rng rng(28);
  TranscriptomicEncoderParams p = init_transcriptomic_encoder(cfg, rng);
  TranscriptomicProfile prof{{0, 3}, {0.8, -1.1}};
  Matrix probe = random_matrix(cfg.output_dim, 1, rng);

  auto eval = [&]() {
    Tape t;
    VarBinding vb = VarBinding::bind(t, p);
    Tape::Var out = transcriptomic_forward(t, vb, cfg, p, prof, nullptr, false);
    return t.value(t.sum_all(t.matmul(out, t.input(probe, false)))).at(0, 0);
  };
  Tape t;
  VarBinding vb = VarBinding::bind(t, p);
  Tape::Var out = transcriptomic_forward(t, vb, cfg, p, prof, nullptr, false);
  t.backward(t.sum_all(t.matmul(out, t.input(probe, false))));

  std::vector<Matrix*> params;
  p.visit([&](const char*, Matrix& m) { params.push_back(&m); });
  CHECK(gradcheck::max_rel_err(params, vb.grads(t, p), eval) < 1e-4);
}

TEST_CASE("molecular file loaders") {
  const std::string tsv_path = "/tmp/thd_test_expr.tsv";
  {
    std::ofstream out(tsv_path);
    out << "0\t0\n1\t1\n2\t1023\n";
  }
  TranscriptomicProfile p = load_transcriptomic_tsv(tsv_path);
  CHECK(p.gene_ids == std::vector<int>{0, 1, 2});
  CHECK(p.values[0] == doctest::Approx(0.0));
  CHECK(p.values[1] == doctest::Approx(1.0));
  CHECK(p.values[2] == doctest::Approx(10.0));
  std::remove(tsv_path.c_str());

  const std::string json_path = "/tmp/thd_test_calls.json";
  {
    std::ofstream out(json_path);
    out << R"([{"gene": 2, "cnv": "amplification", "muts": ["small-coding"]},
               {"gene": 0, "cnv": "loss"}])";
  }
  std::vector<VariantCall> calls = load_variant_calls_json(json_path);
  CHECK(calls.size() == 2);
  CHECK(calls[0].gene == 2);
  CHECK(calls[0].cnv == CnvClass::Amplification);
  CHECK(calls[0].muts == std::vector<MutClass>{MutClass::SmallCoding});
  GenomicProfile prof = build_variant_vector(calls, 4);
  CHECK(prof.multi_hot[2 * 7 + 3] == 1.0);
  CHECK(prof.multi_hot[2 * 7 + 4] == 1.0);
  CHECK(prof.multi_hot[0 * 7 + 1] == 1.0);
  std::remove(json_path.c_str());
}
