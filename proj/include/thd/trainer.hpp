#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "thd/model.hpp"

namespace thd {

struct TrainConfig {
  int batch_size = 32;          // paper-scale runs use 300 per device
  int patches_per_slide = 512;
  double peak_lr = 1e-5;
  double final_lr = 1e-8;
  int warmup_epochs = 5;
  int max_epochs = 101;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double temperature = 0.07;
  double rankme_eps = 1e-7;
  int rankme_max_slides = 2048;
  uint64_t seed = 1;

  void validate() const;
};

struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

OptimizerState make_optimizer_state(const std::vector<const Matrix*>& params);

// Draws n patches: without replacement when the bag is large enough, with
// replacement otherwise. Seeded-deterministic through rng.
PatchBag sample_patches(const PatchBag& bag, int n, Rng& rng);

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_slide;
  Matrix grad_mol;
};

// Symmetric InfoNCE over L2-normalized rows: S_ij = <u_i, v_j> / tau, loss =
// 0.5 * (mean row CE + mean column CE) with matches on the diagonal. Gradients
// are w.r.t. the raw (pre-normalization) inputs.
InfoNceResult infonce_loss(const Matrix& slide, const Matrix& mol, double tau);

// Linear warmup from 0 to peak over warmup_epochs, then cosine decay from peak
// to final_lr by step == max_epochs * steps_per_epoch.
double lr_at(long step, long steps_per_epoch, const TrainConfig& cfg);

// Decoupled AdamW: theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta).
void adamw_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
                OptimizerState& opt, double lr, const TrainConfig& cfg);

// exp(entropy of L1-normalized singular values + eps), over d = cols values.
double rankme(const Matrix& h, double eps = 1e-7);

struct TrainPair {
  PatchBag bag;
  MolecularProfile molecular;
};

struct CheckpointRecord {
  int epoch = 0;
  double rankme_value = 0.0;
  ModelState state;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  std::optional<double> rankme;
  bool checkpointed = false;
};

struct PretrainResult {
  ModelState state;
  std::vector<CheckpointRecord> checkpoints;
  std::vector<EpochLog> log;
};

// Contrastive pretraining: shuffled mini-batches, per-iteration patch
// subsampling, symmetric InfoNCE, AdamW with the warmup/cosine schedule.
// After each post-warmup epoch the smooth rank of all training slide
// embeddings (inference mode) is computed and a checkpoint is recorded iff it
// strictly exceeds the best seen so far.
PretrainResult pretrain_fit(const std::vector<TrainPair>& dataset,
                            const ModelConfig& model_cfg, const TrainConfig& cfg);

struct FinetuneConfig {
  int epochs = 5;
  double lr = 2.5e-5;
  int patches_per_step = 2048;
  uint64_t seed = 1;
};

struct Classifier {
  ModelState state;
  AffineParams head;  // output_dim -> n_classes
  int n_classes = 0;
};

// Fine-tunes the slide encoder plus a linear head with class-weighted cross
// entropy (weights proportional to inverse class frequency), batch size 1, no
// weight decay, one-epoch linear warmup then half-cycle cosine decay. The
// final-epoch model is returned; no early stopping.
Classifier finetune_classifier(const ModelState& init,
                               const std::vector<PatchBag>& bags,
                               const std::vector<int>& labels, int n_classes,
                               const FinetuneConfig& cfg = {});

std::vector<double> classifier_logits(const Classifier& c, const PatchBag& bag);
int classify(const Classifier& c, const PatchBag& bag);

// Inverse-frequency class weights: n / (k * n_c).
std::vector<double> balanced_class_weights(const std::vector<int>& labels,
                                           int n_classes);

}  // namespace thd
