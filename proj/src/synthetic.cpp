#include "thd/synthetic.hpp"

#include <cmath>

#include "thd/parallel.hpp"

namespace thd {

void GeneratorConfig::validate() const {
  if (n_classes < 1 || n_samples < n_classes)
    throw ValidationError("GeneratorConfig: need n_samples >= n_classes >= 1");
  if (latent_dim < 1 || patch_dim < 1 || gene_count < 1)
    throw ValidationError("GeneratorConfig: dims must be >= 1");
  if (bag_min < 1 || bag_max < bag_min)
    throw ValidationError("GeneratorConfig: need 1 <= bag_min <= bag_max");
  if (noise < 0.0) throw ValidationError("GeneratorConfig: noise must be >= 0");
  if (label_noise < 0.0 || label_noise >= 1.0 || censor_rate < 0.0 || censor_rate >= 1.0)
    throw ValidationError("GeneratorConfig: rates must be in [0, 1)");
}

namespace {

std::vector<double> linear_map(const Matrix& w, const std::vector<double>& z) {
  std::vector<double> out(static_cast<size_t>(w.rows), 0.0);
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < w.cols; ++j)
      out[static_cast<size_t>(i)] += w.at(i, j) * z[static_cast<size_t>(j)];
  return out;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

std::vector<PairedSample> generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);

  // shared dataset-level structure
  Rng struct_rng = root.fork(0x57);
  Matrix class_means(cfg.n_classes, cfg.latent_dim);
  for (double& v : class_means.data) v = cfg.class_separation * struct_rng.normal();
  Matrix patch_proj(cfg.patch_dim, cfg.latent_dim);
  for (double& v : patch_proj.data)
    v = struct_rng.normal() / std::sqrt(static_cast<double>(cfg.latent_dim));
  const int mol_dim = cfg.mode == MolecularMode::Genomic
                          ? kVariantSlots * cfg.gene_count
                          : cfg.gene_count;
  Matrix mol_proj(mol_dim, cfg.latent_dim);
  for (double& v : mol_proj.data)
    v = struct_rng.normal() / std::sqrt(static_cast<double>(cfg.latent_dim));
  std::vector<double> mol_bias(static_cast<size_t>(mol_dim), 0.0);
  for (double& v : mol_bias) v = struct_rng.normal() - 1.0;
  // scale 2 keeps the log-time spread well above the exponential noise floor
  std::vector<double> survival_beta(static_cast<size_t>(cfg.latent_dim), 0.0);
  for (double& v : survival_beta)
    v = 2.0 * struct_rng.normal() / std::sqrt(static_cast<double>(cfg.latent_dim));

  std::vector<PairedSample> samples(static_cast<size_t>(cfg.n_samples));
  parallel_for(cfg.n_samples, [&](int i) {
    Rng rng = root.fork(0x5D, static_cast<uint64_t>(i));
    PairedSample& s = samples[static_cast<size_t>(i)];
    char id[32];
    std::snprintf(id, sizeof(id), "sample_%05d", i);
    s.id = id;

    const int cls = i % cfg.n_classes;  // stratified by construction
    s.label = cls;
    if (cfg.label_noise > 0.0 && rng.uniform() < cfg.label_noise && cfg.n_classes > 1) {
      int other = rng.uniform_int(cfg.n_classes - 1);
      s.label = other >= cls ? other + 1 : other;
    }

    std::vector<double> z(static_cast<size_t>(cfg.latent_dim), 0.0);
    for (int j = 0; j < cfg.latent_dim; ++j)
      z[static_cast<size_t>(j)] = class_means.at(cls, j) + cfg.noise * rng.normal();

    const int bag_size = cfg.bag_min + rng.uniform_int(cfg.bag_max - cfg.bag_min + 1);
    const std::vector<double> patch_mean = linear_map(patch_proj, z);
    s.bag.id = s.id;
    s.bag.patches = Matrix(bag_size, cfg.patch_dim);
    for (int p = 0; p < bag_size; ++p)
      for (int j = 0; j < cfg.patch_dim; ++j)
        s.bag.patches.at(p, j) =
            patch_mean[static_cast<size_t>(j)] + cfg.noise * rng.normal();

    const std::vector<double> mol_lin = linear_map(mol_proj, z);
    if (cfg.mode == MolecularMode::Genomic) {
      GenomicProfile prof;
      prof.gene_count = cfg.gene_count;
      prof.multi_hot.resize(static_cast<size_t>(mol_dim), 0.0);
      for (int j = 0; j < mol_dim; ++j) {
        const double p =
            1.0 / (1.0 + std::exp(-(mol_lin[static_cast<size_t>(j)] +
                                    mol_bias[static_cast<size_t>(j)])));
        prof.multi_hot[static_cast<size_t>(j)] = rng.uniform() < p ? 1.0 : 0.0;
      }
      s.molecular = std::move(prof);
    } else {
      TranscriptomicProfile prof;
      for (int g = 0; g < cfg.gene_count; ++g) {
        prof.gene_ids.push_back(g);
        const double tpm = 10.0 * softplus(mol_lin[static_cast<size_t>(g)] +
                                           mol_bias[static_cast<size_t>(g)]);
        prof.values.push_back(log2_tpm_normalize(tpm));
      }
      s.molecular = std::move(prof);
    }

    double dot = 0.0;
    for (int j = 0; j < cfg.latent_dim; ++j)
      dot += survival_beta[static_cast<size_t>(j)] * z[static_cast<size_t>(j)];
    const double rate = std::exp(std::clamp(dot, -20.0, 20.0));
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    const double event_time = -std::log(u) / rate;
    if (cfg.censor_rate > 0.0 && rng.uniform() < cfg.censor_rate) {
      s.survival.time = std::max(event_time * rng.uniform(), 1e-9);
      s.survival.event = 0;
    } else {
      s.survival.time = std::max(event_time, 1e-9);
      s.survival.event = 1;
    }
  });
  return samples;
}

double holdout_pair_recall(const ModelState& model,
                           const std::vector<PairedSample>& heldout, int k) {
  if (heldout.size() < 2)
    throw ValidationError("holdout_pair_recall: need >= 2 held-out pairs");
  if (k < 1) throw ValidationError("holdout_pair_recall: k must be >= 1");
  const int n = static_cast<int>(heldout.size());
  const int d = model.config.slide.output_dim;
  Matrix slides(n, d), mols(n, d);
  parallel_for(n, [&](int i) {
    const PairedSample& s = heldout[static_cast<size_t>(i)];
    Matrix u = encode_bag(s.bag, model.slide, model.config.slide);
    Matrix v = encode_molecular(s.molecular, model);
    for (int j = 0; j < d; ++j) {
      slides.at(i, j) = u.at(0, j);
      mols.at(i, j) = v.at(0, j);
    }
  });
  double hits = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
      dist[static_cast<size_t>(j)] = {l2_distance_rows(slides, i, mols, j), j};
    const int kk = std::min(k, n);
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    for (int j = 0; j < kk; ++j) {
      if (heldout[static_cast<size_t>(dist[static_cast<size_t>(j)].second)].label ==
          heldout[static_cast<size_t>(i)].label) {
        hits += 1.0;
        break;
      }
    }
  }
  return hits / static_cast<double>(n);
}

}  // namespace thd
