#include "thd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "thd/linalg.hpp"
#include "thd/parallel.hpp"

namespace thd {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ValidationError("TrainConfig: batch_size must be >= 2");
  if (patches_per_slide < 1)
    throw ValidationError("TrainConfig: patches_per_slide must be >= 1");
  if (peak_lr <= 0.0 || final_lr <= 0.0 || final_lr > peak_lr)
    throw ValidationError("TrainConfig: need 0 < final_lr <= peak_lr");
  if (warmup_epochs < 0 || max_epochs < 0 || warmup_epochs >= std::max(max_epochs, 1))
    throw ValidationError("TrainConfig: need warmup_epochs < max_epochs");
  if (temperature <= 0.0) throw ValidationError("TrainConfig: temperature must be > 0");
  if (weight_decay < 0.0 || adam_eps <= 0.0 || rankme_eps <= 0.0)
    throw ValidationError("TrainConfig: invalid optimizer constants");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
    throw ValidationError("TrainConfig: betas must be in [0, 1)");
  if (rankme_max_slides < 1)
    throw ValidationError("TrainConfig: rankme_max_slides must be >= 1");
}

OptimizerState make_optimizer_state(const std::vector<const Matrix*>& params) {
  OptimizerState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Matrix* p : params) {
    s.m.push_back(Matrix::zeros(p->rows, p->cols));
    s.v.push_back(Matrix::zeros(p->rows, p->cols));
  }
  return s;
}

PatchBag sample_patches(const PatchBag& bag, int n, Rng& rng) {
  if (bag.patches.rows < 1) throw ValidationError("sample_patches: empty bag");
  if (n < 1) throw ValidationError("sample_patches: n must be >= 1");
  const std::vector<int> idx = rng.sample_indices(bag.patches.rows, n);
  PatchBag out;
  out.id = bag.id;
  out.patches = Matrix(n, bag.patches.cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < bag.patches.cols; ++j)
      out.patches.at(i, j) = bag.patches.at(idx[static_cast<size_t>(i)], j);
  return out;
}

InfoNceResult infonce_loss(const Matrix& slide, const Matrix& mol, double tau) {
  if (slide.rows < 2) throw ValidationError("infonce_loss: batch must have B >= 2");
  require_same_shape(slide, mol, "infonce_loss");
  if (tau <= 0.0) throw ValidationError("infonce_loss: tau must be > 0");
  Tape t;
  Tape::Var u = t.input(slide, true);
  Tape::Var v = t.input(mol, true);
  Tape::Var s = t.scale(
      t.matmul(t.l2_normalize_rows(u), t.transpose(t.l2_normalize_rows(v))),
      1.0 / tau);
  Tape::Var loss = t.infonce_symmetric(s);
  t.backward(loss);
  InfoNceResult r;
  r.loss = t.value(loss).at(0, 0);
  r.grad_slide = t.grad(u);
  r.grad_mol = t.grad(v);
  return r;
}

double lr_at(long step, long steps_per_epoch, const TrainConfig& cfg) {
  if (step < 0) throw ValidationError("lr_at: step must be >= 0");
  if (steps_per_epoch < 1) throw ValidationError("lr_at: steps_per_epoch must be >= 1");
  const long warmup = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
  const long total = static_cast<long>(cfg.max_epochs) * steps_per_epoch;
  if (step < warmup)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return cfg.peak_lr;
  const double t = std::min(
      1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  const double pi = 3.14159265358979323846;
  return cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + std::cos(pi * t));
}

void adamw_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
                OptimizerState& opt, double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != opt.m.size())
    throw ValidationError("adamw_step: parameter/gradient count mismatch");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(opt.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    require_same_shape(p, g, "adamw_step");
    Matrix& m = opt.m[i];
    Matrix& v = opt.v[i];
    for (size_t k = 0; k < p.data.size(); ++k) {
      m.data[k] = cfg.adam_beta1 * m.data[k] + (1.0 - cfg.adam_beta1) * g.data[k];
      v.data[k] = cfg.adam_beta2 * v.data[k] + (1.0 - cfg.adam_beta2) * g.data[k] * g.data[k];
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      p.data[k] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                         cfg.weight_decay * p.data[k]);
    }
  }
}

double rankme(const Matrix& h, double eps) {
  if (h.rows < 1 || h.cols < 1) throw ValidationError("rankme: empty matrix");
  std::vector<double> sigma = singular_values(h);
  double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
  if (total <= 0.0)
    throw ValidationError("rankme: all-zero matrix has no normalizable spectrum");
  // entropy over d = cols values; missing singular values count as zero
  double entropy = 0.0;
  for (int k = 0; k < h.cols; ++k) {
    const double sk = k < static_cast<int>(sigma.size()) ? sigma[static_cast<size_t>(k)] : 0.0;
    const double p = sk / total + eps;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

namespace {

std::vector<Matrix*> parameter_pointers(ModelState& state) {
  std::vector<Matrix*> out;
  state.visit([&](const char*, Matrix& m) { out.push_back(&m); });
  return out;
}

struct ItemPass {
  Tape tape;
  VarBinding binding;
  Tape::Var slide_out = -1;
  Tape::Var mol_out = -1;
};

// Forward one pair on its own tape so items can run in parallel and be
// replayed independently once the batch loss gradient is known.
void forward_pair(ItemPass& pass, ModelState& state, const TrainPair& pair,
                  const TrainConfig& cfg, Rng sample_rng, Rng dropout_rng) {
  pass.binding = VarBinding::bind(pass.tape, state);
  PatchBag sampled = sample_patches(pair.bag, cfg.patches_per_slide, sample_rng);
  Tape::Var x = pass.tape.input(sampled.patches, false);
  pass.slide_out = slide_encoder_forward(pass.tape, pass.binding, state.config.slide,
                                         state.slide, x, &dropout_rng, true);
  if (state.config.mode == MolecularMode::Genomic) {
    const auto& prof = std::get<GenomicProfile>(pair.molecular);
    Tape::Var mx = pass.tape.input(Matrix::row_vector(prof.multi_hot), false);
    pass.mol_out = genomic_forward(pass.tape, pass.binding, state.config.genomic,
                                   state.genomic, mx, &dropout_rng, true);
  } else {
    const auto& prof = std::get<TranscriptomicProfile>(pair.molecular);
    pass.mol_out = transcriptomic_forward(pass.tape, pass.binding,
                                          state.config.transcriptomic,
                                          state.transcriptomic, prof, &dropout_rng, true);
  }
}

Matrix training_embeddings(ModelState& state, const std::vector<TrainPair>& dataset,
                           const std::vector<int>& subset) {
  const int d = state.config.slide.output_dim;
  Matrix h(static_cast<int>(subset.size()), d);
  parallel_for(static_cast<int>(subset.size()), [&](int i) {
    Matrix e = encode_bag(dataset[static_cast<size_t>(subset[static_cast<size_t>(i)])].bag,
                          state.slide, state.config.slide);
    for (int j = 0; j < d; ++j) h.at(i, j) = e.at(0, j);
  });
  return h;
}

}  // namespace

PretrainResult pretrain_fit(const std::vector<TrainPair>& dataset,
                            const ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.size() < 2)
    throw ValidationError("pretrain_fit: need at least two paired samples");
  for (const TrainPair& p : dataset)
    if (profile_mode(p.molecular) != model_cfg.mode)
      throw ValidationError("pretrain_fit: profile mode mismatch in dataset");

  PretrainResult result;
  result.state = init_model(model_cfg, cfg.seed);
  ModelState& state = result.state;

  std::vector<Matrix*> params = parameter_pointers(state);
  OptimizerState opt = make_optimizer_state(
      std::vector<const Matrix*>(params.begin(), params.end()));

  const int n = static_cast<int>(dataset.size());
  const int full_batches = n / cfg.batch_size;
  const int remainder = n % cfg.batch_size;
  // a trailing partial batch still trains if it has the two pairs InfoNCE needs
  const long steps_per_epoch = std::max<long>(1, full_batches + (remainder >= 2 ? 1 : 0));

  Rng root(cfg.seed);
  double best_rank = -1.0;
  long global_step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.fork(0x5E, static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    long batches = 0;
    double epoch_lr = 0.0;

    for (int start = 0; start + 1 < n; start += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - start);
      if (b < 2) break;
      const double lr = lr_at(global_step, steps_per_epoch, cfg);
      epoch_lr = lr;

      std::vector<ItemPass> passes(static_cast<size_t>(b));
      parallel_for(b, [&](int i) {
        const int item = order[static_cast<size_t>(start + i)];
        forward_pair(passes[static_cast<size_t>(i)], state,
                     dataset[static_cast<size_t>(item)], cfg,
                     root.fork(0x5A, static_cast<uint64_t>(epoch)).fork(static_cast<uint64_t>(item)),
                     root.fork(0xD0, static_cast<uint64_t>(epoch)).fork(static_cast<uint64_t>(item)));
      });

      const int d = model_cfg.slide.output_dim;
      Matrix u(b, d), v(b, d);
      for (int i = 0; i < b; ++i) {
        const Matrix& su = passes[static_cast<size_t>(i)].tape.value(
            passes[static_cast<size_t>(i)].slide_out);
        const Matrix& sv = passes[static_cast<size_t>(i)].tape.value(
            passes[static_cast<size_t>(i)].mol_out);
        for (int j = 0; j < d; ++j) {
          u.at(i, j) = su.at(0, j);
          v.at(i, j) = sv.at(0, j);
        }
      }

      InfoNceResult nce = infonce_loss(u, v, cfg.temperature);
      if (!std::isfinite(nce.loss))
        throw std::runtime_error("pretrain_fit: non-finite InfoNCE loss at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(global_step));
      loss_sum += nce.loss;
      ++batches;

      parallel_for(b, [&](int i) {
        ItemPass& pass = passes[static_cast<size_t>(i)];
        Matrix du(1, d), dv(1, d);
        for (int j = 0; j < d; ++j) {
          du.at(0, j) = nce.grad_slide.at(i, j);
          dv.at(0, j) = nce.grad_mol.at(i, j);
        }
        pass.tape.backward_seeded({{pass.slide_out, du}, {pass.mol_out, dv}});
      });

      // serial accumulation in item order keeps results thread-count invariant
      std::vector<Matrix> grads;
      grads.reserve(params.size());
      for (const Matrix* p : params) grads.push_back(Matrix::zeros(p->rows, p->cols));
      // the InfoNCE loss is already a batch mean, so the item contributions
      // sum to the exact loss gradient
      for (int i = 0; i < b; ++i) {
        std::vector<Matrix> item = passes[static_cast<size_t>(i)].binding.grads(
            passes[static_cast<size_t>(i)].tape, state);
        for (size_t k = 0; k < grads.size(); ++k) add_inplace(grads[k], item[k]);
      }

      adamw_step(params, grads, opt, lr, cfg);
      ++global_step;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    entry.lr = epoch_lr;

    if (epoch > cfg.warmup_epochs) {  // rank monitoring starts after the ramp-up
      std::vector<int> subset(static_cast<size_t>(n));
      std::iota(subset.begin(), subset.end(), 0);
      if (n > cfg.rankme_max_slides) {
        Rng pick = root.fork(0x4E, static_cast<uint64_t>(epoch));
        pick.shuffle(subset);
        subset.resize(static_cast<size_t>(cfg.rankme_max_slides));
        std::sort(subset.begin(), subset.end());
      }
      const double rank = rankme(training_embeddings(state, dataset, subset),
                                 cfg.rankme_eps);
      entry.rankme = rank;
      if (rank > best_rank) {
        best_rank = rank;
        entry.checkpointed = true;
        result.checkpoints.push_back(CheckpointRecord{epoch, rank, state});
      }
    }
    result.log.push_back(std::move(entry));
  }
  return result;
}

std::vector<double> balanced_class_weights(const std::vector<int>& labels,
                                           int n_classes) {
  if (n_classes < 2) throw ValidationError("balanced_class_weights: need >= 2 classes");
  std::vector<double> counts(static_cast<size_t>(n_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= n_classes)
      throw ValidationError("balanced_class_weights: label out of range");
    counts[static_cast<size_t>(y)] += 1.0;
  }
  std::vector<double> w(static_cast<size_t>(n_classes), 0.0);
  for (int c = 0; c < n_classes; ++c) {
    if (counts[static_cast<size_t>(c)] == 0.0)
      throw ValidationError("balanced_class_weights: class " + std::to_string(c) +
                            " has no examples");
    w[static_cast<size_t>(c)] =
        static_cast<double>(labels.size()) / (n_classes * counts[static_cast<size_t>(c)]);
  }
  return w;
}

Classifier finetune_classifier(const ModelState& init,
                               const std::vector<PatchBag>& bags,
                               const std::vector<int>& labels, int n_classes,
                               const FinetuneConfig& cfg) {
  if (bags.size() != labels.size() || bags.empty())
    throw ValidationError("finetune_classifier: bags/labels mismatch or empty");
  if (cfg.epochs < 0 || cfg.lr <= 0.0 || cfg.patches_per_step < 1)
    throw ValidationError("finetune_classifier: invalid config");
  const std::vector<double> class_weights = balanced_class_weights(labels, n_classes);

  Classifier model;
  model.state = init;
  model.n_classes = n_classes;
  Rng root(cfg.seed);
  Rng head_rng = root.fork(0x0E);
  model.head = init_affine(init.config.slide.output_dim, n_classes, head_rng);
  if (cfg.epochs == 0) return model;

  std::vector<Matrix*> params;
  model.state.slide.visit([&](const char*, Matrix& m) { params.push_back(&m); });
  params.push_back(&model.head.w);
  params.push_back(&model.head.b);
  OptimizerState opt = make_optimizer_state(
      std::vector<const Matrix*>(params.begin(), params.end()));

  const long n = static_cast<long>(bags.size());
  const long total_steps = static_cast<long>(cfg.epochs) * n;
  const long warmup_steps = n;  // one epoch of linear warmup
  const double pi = 3.14159265358979323846;
  long step = 0;

  // fine-tuning ignores weight decay; reuse the Adam constants
  TrainConfig adam;
  adam.weight_decay = 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(bags.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.fork(0x5E, static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    for (int item : order) {
      double lr;
      if (step < warmup_steps) {
        lr = cfg.lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
      } else {
        const double t = static_cast<double>(step - warmup_steps) /
                         static_cast<double>(std::max<long>(1, total_steps - warmup_steps));
        lr = cfg.lr * 0.5 * (1.0 + std::cos(pi * std::min(1.0, t)));
      }

      Rng sample_rng = root.fork(0x5A, static_cast<uint64_t>(epoch)).fork(static_cast<uint64_t>(item));
      Rng dropout_rng = root.fork(0xD0, static_cast<uint64_t>(epoch)).fork(static_cast<uint64_t>(item));
      PatchBag sampled = sample_patches(bags[static_cast<size_t>(item)],
                                        cfg.patches_per_step, sample_rng);

      Tape t;
      VarBinding vb = VarBinding::bind(t, model.state.slide);
      Tape::Var hw = t.param(model.head.w);
      Tape::Var hb = t.param(model.head.b);
      Tape::Var x = t.input(sampled.patches, false);
      Tape::Var emb = slide_encoder_forward(t, vb, model.state.config.slide,
                                            model.state.slide, x, &dropout_rng, true);
      Tape::Var logits = t.add_row_broadcast(t.matmul(emb, hw), hb);
      Tape::Var loss = t.scale(
          t.cross_entropy_logits(logits, labels[static_cast<size_t>(item)]),
          class_weights[static_cast<size_t>(labels[static_cast<size_t>(item)])]);
      if (!std::isfinite(t.value(loss).at(0, 0)))
        throw std::runtime_error("finetune_classifier: non-finite loss");
      t.backward(loss);

      std::vector<Matrix> grads = vb.grads(t, model.state.slide);
      grads.push_back(t.grad(hw).empty()
                          ? Matrix::zeros(model.head.w.rows, model.head.w.cols)
                          : t.grad(hw));
      grads.push_back(t.grad(hb).empty() ? Matrix::zeros(1, n_classes) : t.grad(hb));
      adamw_step(params, grads, opt, lr, adam);
      ++step;
    }
  }
  return model;
}

std::vector<double> classifier_logits(const Classifier& c, const PatchBag& bag) {
  Matrix emb = encode_bag(bag, c.state.slide, c.state.config.slide);
  Matrix logits = add_row_broadcast(matmul(emb, c.head.w), c.head.b);
  return logits.row(0);
}

int classify(const Classifier& c, const PatchBag& bag) {
  const std::vector<double> logits = classifier_logits(c, bag);
  int best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace thd
