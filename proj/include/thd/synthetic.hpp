#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thd/eval.hpp"
#include "thd/model.hpp"

namespace thd {

// Paired (patch bag, molecular profile) generator with a shared latent factor
// per sample, planted class structure, and censored exponential survival, so
// classification, retrieval, prompting and survival all carry signal.
struct GeneratorConfig {
  int n_samples = 200;
  int n_classes = 4;
  int latent_dim = 8;
  int patch_dim = 768;
  int bag_min = 8;
  int bag_max = 32;
  MolecularMode mode = MolecularMode::Genomic;
  int gene_count = 239;  // G for genomic profiles, vocabulary size otherwise
  double noise = 0.5;
  double label_noise = 0.0;
  double censor_rate = 0.0;
  uint64_t seed = 1;
  double class_separation = 3.0;

  void validate() const;
};

struct PairedSample {
  std::string id;
  PatchBag bag;
  MolecularProfile molecular;
  int label = 0;
  SurvivalRecord survival;
};

std::vector<PairedSample> generate_dataset(const GeneratorConfig& cfg);

// Class-level cross-modal recall@k: the fraction of held-out slides whose k
// nearest molecular embeddings include one of the slide's own class.
double holdout_pair_recall(const ModelState& model,
                           const std::vector<PairedSample>& heldout, int k = 1);

}  // namespace thd
