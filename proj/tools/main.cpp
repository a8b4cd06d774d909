#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "thd/pipeline.hpp"

namespace {

// exit codes: 0 ok, 2 validation problem, 1 anything else
int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const thd::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

thd::RunConfig load_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  thd::RunConfig cfg;
  if (!config_path.empty()) cfg = thd::load_run_config(config_path);
  for (const std::string& o : overrides) thd::apply_override(cfg, o);
  return cfg;
}

thd::SplitSpec spec_from_name(const std::string& name, int folds, uint64_t seed) {
  thd::SplitSpec spec;
  if (name == "kfold") {
    spec.scheme = thd::SplitScheme::KFold;
    spec.folds = folds > 0 ? folds : 5;
  } else if (name == "montecarlo") {
    spec.scheme = thd::SplitScheme::MonteCarlo;
    spec.folds = folds > 0 ? folds : 50;
  } else if (name == "official-single") {
    spec.scheme = thd::SplitScheme::OfficialSingle;
    spec.folds = 1;
  } else {
    throw thd::ValidationError("unknown split spec '" + name +
                               "' (kfold, montecarlo, official-single)");
  }
  spec.seed = seed;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molecular-guided slide representation learning, desk scale"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, embeddings, splits_path;
  std::string modality = "slide", spec_name = "kfold", task = "class";
  std::string mol_embeddings;
  std::vector<std::string> overrides, results;
  uint64_t seed = 0;
  int folds = 0, k = 0;
  double alpha = 0.07;
  std::vector<int> ks{1, 5, 10};
  bool have_seed = false;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      have_seed = true;
    });
  };

  auto* gen = app.add_subcommand("gen-data", "generate a paired synthetic dataset");
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--out", out_path, "output dataset directory")->required();
  gen->add_option("--set", overrides, "section.key=value override")->take_all();
  add_seed(gen);

  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining");
  pre->add_option("--data", data_dir, "dataset directory")->required();
  pre->add_option("--config", config_path, "config file");
  pre->add_option("--out-checkpoints", out_path, "output directory")->required();
  pre->add_option("--set", overrides, "section.key=value override")->take_all();
  add_seed(pre);

  auto* emb = app.add_subcommand("embed", "extract embeddings with a checkpoint");
  emb->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  emb->add_option("--data", data_dir, "dataset directory")->required();
  emb->add_option("--out", out_path, "output embedding store")->required();
  emb->add_option("--modality", modality, "slide or molecular");

  auto* spl = app.add_subcommand("split", "write a splits file");
  spl->add_option("--embeddings", embeddings, "embedding store")->required();
  spl->add_option("--spec", spec_name, "kfold | montecarlo | official-single");
  spl->add_option("--folds", folds, "fold count");
  spl->add_option("--out", out_path, "output splits file")->required();
  add_seed(spl);

  auto* few = app.add_subcommand("fewshot", "derive fewshot splits");
  few->add_option("--splits", splits_path, "parent splits file")->required();
  few->add_option("--embeddings", embeddings, "embedding store with labels")->required();
  few->add_option("--k", k, "examples per class")->required();
  few->add_option("--out", out_path, "output splits file")->required();
  add_seed(few);

  auto* probe = app.add_subcommand("probe", "linear probing");
  probe->add_option("--embeddings", embeddings, "embedding store")->required();
  probe->add_option("--splits", splits_path, "splits file");
  probe->add_option("--spec", spec_name, "split spec when no --splits");
  probe->add_option("--folds", folds, "fold count");
  probe->add_option("--config", config_path, "config file");
  probe->add_option("--set", overrides, "section.key=value override")->take_all();
  probe->add_option("--out", out_path, "output results JSON")->required();
  add_seed(probe);

  auto* surv = app.add_subcommand("survival", "penalized Cox survival regression");
  surv->add_option("--embeddings", embeddings, "embedding store")->required();
  surv->add_option("--splits", splits_path, "splits file");
  surv->add_option("--spec", spec_name, "split spec when no --splits");
  surv->add_option("--folds", folds, "fold count");
  surv->add_option("--alpha", alpha, "ridge strength (0.07 OS, 0.01 PFS)");
  surv->add_option("--out", out_path, "output results JSON")->required();
  add_seed(surv);

  auto* ret = app.add_subcommand("retrieve", "nearest-neighbor retrieval");
  ret->add_option("--embeddings", embeddings, "embedding store")->required();
  ret->add_option("--splits", splits_path, "splits file");
  ret->add_option("--spec", spec_name, "split spec when no --splits");
  ret->add_option("--folds", folds, "fold count");
  ret->add_option("--k", ks, "mAP@k values")->take_all();
  ret->add_option("--out", out_path, "output results JSON")->required();
  add_seed(ret);

  auto* prm = app.add_subcommand("prompt", "molecular prompting");
  prm->add_option("--embeddings", embeddings, "slide embedding store")->required();
  prm->add_option("--mol-embeddings", mol_embeddings, "molecular embedding store")
      ->required();
  prm->add_option("--splits", splits_path, "splits file");
  prm->add_option("--spec", spec_name, "split spec when no --splits");
  prm->add_option("--folds", folds, "fold count");
  prm->add_option("--task", task, "class or survival");
  prm->add_option("--out", out_path, "output results JSON")->required();
  add_seed(prm);

  auto* clu = app.add_subcommand("cluster", "k-means diagnostics against labels");
  clu->add_option("--embeddings", embeddings, "embedding store")->required();
  clu->add_option("--k", k, "cluster count (default: number of classes)");
  clu->add_option("--out", out_path, "output results JSON")->required();
  add_seed(clu);

  auto* rep = app.add_subcommand("report", "aggregate result files into a TSV table");
  rep->add_option("--results", results, "result JSON files")->required()->take_all();
  rep->add_option("--out", out_path, "output TSV")->required();

  CLI11_PARSE(app, argc, argv);

  auto eval_opts = [&]() {
    thd::EvalOptions opts;
    opts.splits_path = splits_path;
    opts.spec = spec_from_name(spec_name, folds, seed);
    opts.seed = seed;
    return opts;
  };

  if (gen->parsed())
    return guarded([&] {
      thd::RunConfig cfg = load_config(config_path, overrides);
      if (have_seed) cfg.generator.seed = seed;
      thd::run_gen_data(cfg, out_path);
    });
  if (pre->parsed())
    return guarded([&] {
      thd::RunConfig cfg = load_config(config_path, overrides);
      if (have_seed) cfg.train.seed = seed;
      thd::run_pretrain(data_dir, cfg, out_path);
    });
  if (emb->parsed())
    return guarded([&] { thd::run_embed(checkpoint, data_dir, out_path, modality); });
  if (spl->parsed())
    return guarded([&] {
      thd::run_make_splits(embeddings, spec_from_name(spec_name, folds, seed), out_path);
    });
  if (few->parsed())
    return guarded([&] { thd::run_fewshot(splits_path, embeddings, k, seed, out_path); });
  if (probe->parsed())
    return guarded([&] {
      thd::RunConfig cfg = load_config(config_path, overrides);
      thd::run_probe(embeddings, eval_opts(), cfg.probe, out_path);
    });
  if (surv->parsed())
    return guarded([&] { thd::run_survival(embeddings, eval_opts(), alpha, out_path); });
  if (ret->parsed())
    return guarded([&] { thd::run_retrieve(embeddings, eval_opts(), ks, out_path); });
  if (prm->parsed())
    return guarded([&] {
      thd::run_prompt(embeddings, mol_embeddings, eval_opts(), task, out_path);
    });
  if (clu->parsed())
    return guarded([&] { thd::run_cluster(embeddings, k, seed, out_path); });
  if (rep->parsed())
    return guarded([&] { thd::run_report(results, out_path); });
  return 1;
}
