#include "thd/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "thd/parallel.hpp"

namespace thd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

// One metric across folds, plus the aggregate the protocol asks for: mean and
// stderr over folds, or a 100-replicate bootstrap CI for single-fold schemes.
struct MetricSeries {
  std::string metric;
  std::vector<double> fold_values;
  bool has_ci = false;
  double ci_lo = 0.0, ci_hi = 0.0, ci_mean = 0.0;
};

json results_json(const std::string& task, const std::string& scheme,
                  const std::vector<MetricSeries>& series) {
  json out;
  out["task"] = task;
  out["scheme"] = scheme;
  json entries = json::array();
  for (const MetricSeries& s : series) {
    json e;
    e["metric"] = s.metric;
    json folds = json::array();
    for (size_t f = 0; f < s.fold_values.size(); ++f)
      folds.push_back({{"metric", s.metric}, {"value", s.fold_values[f]}});
    e["folds"] = std::move(folds);
    double mean = 0.0;
    for (double v : s.fold_values) mean += v;
    mean /= static_cast<double>(s.fold_values.size());
    e["mean"] = mean;
    if (s.fold_values.size() > 1) {
      double var = 0.0;
      for (double v : s.fold_values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(s.fold_values.size() - 1);
      e["stderr"] = std::sqrt(var / static_cast<double>(s.fold_values.size()));
    }
    if (s.has_ci) {
      e["ci"] = {s.ci_lo, s.ci_hi};
      e["ci_mean"] = s.ci_mean;
    }
    entries.push_back(std::move(e));
  }
  out["results"] = std::move(entries);
  return out;
}

std::string scheme_name(const SplitSpec& spec) {
  switch (spec.scheme) {
    case SplitScheme::KFold: return "kfold" + std::to_string(spec.folds);
    case SplitScheme::MonteCarlo: return "montecarlo" + std::to_string(spec.folds);
    case SplitScheme::OfficialSingle: return "official-single";
  }
  return "unknown";
}

std::vector<Split> obtain_splits(const LabeledEmbeddingSet& set,
                                 const EvalOptions& opts) {
  if (!opts.splits_path.empty()) return read_splits_file(opts.splits_path, set.ids);
  SplitSpec spec = opts.spec;
  spec.seed = opts.seed;
  return make_splits(set, spec);
}

std::string scheme_label(const EvalOptions& opts) {
  if (!opts.splits_path.empty())
    return "splits:" + fs::path(opts.splits_path).filename().string();
  return scheme_name(opts.spec);
}

Matrix take_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), m.cols);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < m.cols; ++j)
      out.at(static_cast<int>(i), j) = m.at(idx[i], j);
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<size_t>(i)]);
  return out;
}

void require_labels(const EmbeddingStore& store, const std::string& path) {
  if (!store.sidecar.labels)
    throw ValidationError(path + ": labels missing from sidecar");
}

void require_survival(const EmbeddingStore& store, const std::string& path) {
  if (!store.sidecar.survival)
    throw ValidationError(path + ": survival records missing from sidecar");
}

}  // namespace

void run_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  std::vector<PairedSample> samples = generate_dataset(cfg.generator);
  write_dataset(out_dir, samples, cfg.generator);
}

void run_pretrain(const std::string& data_dir, const RunConfig& cfg,
                  const std::string& out_dir) {
  Dataset ds = read_dataset(data_dir);
  RunConfig run = cfg;
  run.model.mode = ds.mode;
  run.model.slide.input_dim = ds.patch_dim;
  if (ds.mode == MolecularMode::Genomic)
    run.model.genomic.gene_count = ds.gene_count;
  else
    run.model.transcriptomic.vocab_size = ds.gene_count;
  run.model.validate();

  std::vector<TrainPair> pairs;
  pairs.reserve(ds.samples.size());
  for (PairedSample& s : ds.samples)
    pairs.push_back(TrainPair{std::move(s.bag), std::move(s.molecular)});

  PretrainResult result = pretrain_fit(pairs, run.model, run.train);

  std::cout << "slide encoder parameters: " << result.state.slide.param_count()
            << "\n";
  if (ds.mode == MolecularMode::Genomic)
    std::cout << "genomic encoder parameters: " << result.state.genomic.param_count()
              << "\n";
  else
    std::cout << "transcriptomic encoder parameters: "
              << result.state.transcriptomic.param_count() << "\n";

  fs::create_directories(out_dir);
  std::string log_text;
  for (const EpochLog& e : result.log) {
    json line;
    line["epoch"] = e.epoch;
    line["mean_loss"] = e.mean_loss;
    line["lr"] = e.lr;
    if (e.rankme)
      line["rankme"] = *e.rankme;
    else
      line["rankme"] = nullptr;
    line["checkpointed"] = e.checkpointed;
    log_text += line.dump() + "\n";
  }
  write_file_atomic(out_dir + "/train_log.jsonl", log_text);

  json index;
  index["checkpoints"] = json::array();
  for (const CheckpointRecord& rec : result.checkpoints) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.thck", rec.epoch);
    save_checkpoint(out_dir + "/" + name, rec.state);
    index["checkpoints"].push_back(
        {{"epoch", rec.epoch}, {"rankme", rec.rankme_value}, {"file", name}});
  }
  save_checkpoint(out_dir + "/final.thck", result.state);
  index["final"] = "final.thck";
  if (!result.checkpoints.empty()) {
    char best[48];
    std::snprintf(best, sizeof(best), "checkpoint_epoch_%03d.thck",
                  result.checkpoints.back().epoch);
    index["best"] = best;
  } else {
    index["best"] = "final.thck";
  }
  write_file_atomic(out_dir + "/checkpoints.json", index.dump(2) + "\n");
}

void run_embed(const std::string& checkpoint_path, const std::string& data_dir,
               const std::string& out_path, const std::string& modality) {
  if (modality != "slide" && modality != "molecular")
    throw ValidationError("embed: modality must be slide or molecular");
  ModelState state = load_checkpoint(checkpoint_path);
  Dataset ds = read_dataset(data_dir);

  if (modality == "molecular") {
    for (const PairedSample& s : ds.samples)
      if (profile_mode(s.molecular) != state.config.mode)
        throw ValidationError("embed: dataset molecular mode does not match checkpoint");
  } else if (ds.patch_dim != state.config.slide.input_dim) {
    throw ValidationError("embed: dataset patch_dim " + std::to_string(ds.patch_dim) +
                          " != checkpoint input_dim " +
                          std::to_string(state.config.slide.input_dim));
  }

  const int n = static_cast<int>(ds.samples.size());
  Matrix rows(n, state.config.slide.output_dim);
  parallel_for(n, [&](int i) {
    const PairedSample& s = ds.samples[static_cast<size_t>(i)];
    Matrix e = modality == "slide"
                   ? encode_patient({s.bag}, state.slide, state.config.slide)
                   : encode_molecular(s.molecular, state);
    for (int j = 0; j < rows.cols; ++j) rows.at(i, j) = e.at(0, j);
  });

  StoreSidecar side;
  std::vector<int> labels;
  std::vector<SurvivalRecord> survival;
  std::vector<std::string> patients;
  for (const PairedSample& s : ds.samples) {
    side.ids.push_back(s.id);
    labels.push_back(s.label);
    survival.push_back(s.survival);
    patients.push_back(s.id);
  }
  side.labels = std::move(labels);
  side.survival = std::move(survival);
  side.patients = std::move(patients);
  write_store(out_path, rows, side);
}

void write_splits_file(const std::string& path, const std::vector<Split>& splits,
                       const std::vector<std::string>& ids) {
  json folds = json::array();
  for (const Split& s : splits) {
    json f;
    f["train"] = json::array();
    f["test"] = json::array();
    for (int i : s.train) f["train"].push_back(ids[static_cast<size_t>(i)]);
    for (int i : s.test) f["test"].push_back(ids[static_cast<size_t>(i)]);
    folds.push_back(std::move(f));
  }
  json out;
  out["folds"] = std::move(folds);
  write_file_atomic(path, out.dump(2) + "\n");
}

std::vector<Split> read_splits_file(const std::string& path,
                                    const std::vector<std::string>& ids) {
  json j = parse_json_file(path);
  if (!j.contains("folds")) throw ValidationError(path + ": field 'folds' missing");
  std::map<std::string, int> index;
  for (size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);
  std::vector<Split> splits;
  for (const auto& f : j["folds"]) {
    Split s;
    auto resolve = [&](const json& arr, std::vector<int>& out) {
      for (const auto& id : arr) {
        auto it = index.find(id.get<std::string>());
        if (it == index.end())
          throw ValidationError(path + ": id '" + id.get<std::string>() +
                                "' not present in the embedding store");
        out.push_back(it->second);
      }
    };
    resolve(f.at("train"), s.train);
    resolve(f.at("test"), s.test);
    splits.push_back(std::move(s));
  }
  if (splits.empty()) throw ValidationError(path + ": no folds");
  return splits;
}

void run_make_splits(const std::string& embeddings_path, const SplitSpec& spec,
                     const std::string& out_path) {
  EmbeddingStore store = read_store(embeddings_path);
  if (spec.stratify) require_labels(store, embeddings_path);
  LabeledEmbeddingSet set = store.to_labeled_set();
  write_splits_file(out_path, make_splits(set, spec), set.ids);
}

void run_fewshot(const std::string& splits_path, const std::string& embeddings_path,
                 int k, uint64_t seed, const std::string& out_path) {
  EmbeddingStore store = read_store(embeddings_path);
  require_labels(store, embeddings_path);
  std::vector<Split> parents = read_splits_file(splits_path, store.sidecar.ids);
  std::vector<Split> shrunk = make_fewshot(parents, *store.sidecar.labels, k, seed);
  write_splits_file(out_path, shrunk, store.sidecar.ids);
}

void run_probe(const std::string& embeddings_path, const EvalOptions& opts,
               const LogisticProbeConfig& probe_cfg, const std::string& out_path) {
  EmbeddingStore store = read_store(embeddings_path);
  require_labels(store, embeddings_path);
  LabeledEmbeddingSet set = store.to_labeled_set();
  const std::vector<Split> splits = obtain_splits(set, opts);

  int n_classes = 0;
  for (int y : set.labels) n_classes = std::max(n_classes, y + 1);

  MetricSeries auc{"macro-auc", {}, false, 0, 0, 0};
  MetricSeries bacc{"balanced-accuracy", {}, false, 0, 0, 0};
  MetricSeries kappa{"quadratic-kappa", {}, false, 0, 0, 0};

  for (const Split& split : splits) {
    LinearClassifier clf = fit_logistic_probe(take_rows(set.embeddings, split.train),
                                              take(set.labels, split.train), probe_cfg);
    const Matrix test_x = take_rows(set.embeddings, split.test);
    const std::vector<int> test_y = take(set.labels, split.test);
    const Matrix proba = clf.predict_proba(test_x);
    const std::vector<int> pred = clf.predict(test_x);
    auc.fold_values.push_back(macro_auc(proba, test_y));
    bacc.fold_values.push_back(balanced_accuracy(pred, test_y));
    if (n_classes >= 2)
      kappa.fold_values.push_back(quadratic_weighted_kappa(pred, test_y, n_classes));

    if (splits.size() == 1) {
      auto metric = [&](const std::vector<int>& resample) {
        return macro_auc(take_rows(proba, resample), take(test_y, resample));
      };
      BootstrapCi ci = bootstrap_ci(metric, static_cast<int>(test_y.size()),
                                    opts.bootstrap_replicates, opts.seed);
      auc.has_ci = true;
      auc.ci_lo = ci.lo95;
      auc.ci_hi = ci.hi95;
      auc.ci_mean = ci.mean;
    }
  }
  std::vector<MetricSeries> series{auc, bacc};
  if (!kappa.fold_values.empty()) series.push_back(kappa);
  write_file_atomic(out_path,
                    results_json("probe", scheme_label(opts), series).dump(2) + "\n");
}

void run_survival(const std::string& embeddings_path, const EvalOptions& opts,
                  double alpha, const std::string& out_path) {
  EmbeddingStore store = read_store(embeddings_path);
  require_survival(store, embeddings_path);
  LabeledEmbeddingSet set = store.to_labeled_set();
  // survival splits stratify on the event indicator when labels are absent
  if (set.labels.empty())
    for (const SurvivalRecord& r : set.survival) set.labels.push_back(r.event);
  const std::vector<Split> splits = obtain_splits(set, opts);

  CoxnetConfig cox;
  cox.alpha = alpha;
  MetricSeries cindex{"c-index", {}, false, 0, 0, 0};
  for (const Split& split : splits) {
    CoxModel model = fit_coxnet(take_rows(set.embeddings, split.train),
                                take(set.survival, split.train), cox);
    const Matrix test_x = take_rows(set.embeddings, split.test);
    const std::vector<SurvivalRecord> test_rec = take(set.survival, split.test);
    const std::vector<double> risks = model.risk(test_x);
    cindex.fold_values.push_back(concordance_index(risks, test_rec));
    if (splits.size() == 1) {
      auto metric = [&](const std::vector<int>& resample) {
        return concordance_index(take(risks, resample), take(test_rec, resample));
      };
      BootstrapCi ci = bootstrap_ci(metric, static_cast<int>(test_rec.size()),
                                    opts.bootstrap_replicates, opts.seed);
      cindex.has_ci = true;
      cindex.ci_lo = ci.lo95;
      cindex.ci_hi = ci.hi95;
      cindex.ci_mean = ci.mean;
    }
  }
  write_file_atomic(out_path,
                    results_json("survival", scheme_label(opts), {cindex}).dump(2) +
                        "\n");
}

void run_retrieve(const std::string& embeddings_path, const EvalOptions& opts,
                  const std::vector<int>& ks, const std::string& out_path) {
  EmbeddingStore store = read_store(embeddings_path);
  require_labels(store, embeddings_path);
  LabeledEmbeddingSet set = store.to_labeled_set();
  const std::vector<Split> splits = obtain_splits(set, opts);

  std::vector<MetricSeries> series;
  for (int k : ks) series.push_back(MetricSeries{"map@" + std::to_string(k), {}, false, 0, 0, 0});
  for (const Split& split : splits) {
    const Matrix refs = take_rows(set.embeddings, split.train);
    const std::vector<int> ref_y = take(set.labels, split.train);
    const Matrix queries = take_rows(set.embeddings, split.test);
    const std::vector<int> query_y = take(set.labels, split.test);
    for (size_t i = 0; i < ks.size(); ++i)
      series[i].fold_values.push_back(map_at_k(queries, query_y, refs, ref_y, ks[i]));
  }
  write_file_atomic(out_path,
                    results_json("retrieval", scheme_label(opts), series).dump(2) +
                        "\n");
}

void run_prompt(const std::string& slide_embeddings_path,
                const std::string& molecular_embeddings_path, const EvalOptions& opts,
                const std::string& task, const std::string& out_path) {
  if (task != "class" && task != "survival")
    throw ValidationError("prompt: task must be class or survival");
  EmbeddingStore slides = read_store(slide_embeddings_path);
  EmbeddingStore mols = read_store(molecular_embeddings_path);
  if (slides.sidecar.ids != mols.sidecar.ids)
    throw ValidationError("prompt: slide and molecular stores list different ids");
  LabeledEmbeddingSet set = slides.to_labeled_set();

  MetricSeries out_series{"", {}, false, 0, 0, 0};
  if (task == "class") {
    require_labels(slides, slide_embeddings_path);
    out_series.metric = "balanced-accuracy";
    const std::vector<Split> splits = obtain_splits(set, opts);
    for (const Split& split : splits) {
      PromptSet prompts = build_class_prompts(take_rows(mols.rows, split.train),
                                              take(set.labels, split.train));
      std::vector<int> pred, truth;
      for (int i : split.test) {
        Matrix q(1, slides.rows.cols);
        for (int j = 0; j < slides.rows.cols; ++j) q.at(0, j) = slides.rows.at(i, j);
        pred.push_back(prompt_classify(q, prompts));
        truth.push_back(set.labels[static_cast<size_t>(i)]);
      }
      out_series.fold_values.push_back(balanced_accuracy(pred, truth));
    }
  } else {
    require_survival(slides, slide_embeddings_path);
    out_series.metric = "c-index";
    if (set.labels.empty())
      for (const SurvivalRecord& r : set.survival) set.labels.push_back(r.event);
    const std::vector<Split> splits = obtain_splits(set, opts);
    for (const Split& split : splits) {
      SurvivalPrompts prompts = build_survival_prompts(
          take_rows(mols.rows, split.train), take(set.survival, split.train));
      std::vector<double> risks;
      std::vector<SurvivalRecord> recs;
      for (int i : split.test) {
        Matrix q(1, slides.rows.cols);
        for (int j = 0; j < slides.rows.cols; ++j) q.at(0, j) = slides.rows.at(i, j);
        risks.push_back(prompt_risk_score(q, prompts));
        recs.push_back(set.survival[static_cast<size_t>(i)]);
      }
      out_series.fold_values.push_back(concordance_index(risks, recs));
    }
  }
  write_file_atomic(
      out_path, results_json("prompt-" + task, scheme_label(opts), {out_series})
                        .dump(2) +
                    "\n");
}

void run_cluster(const std::string& embeddings_path, int k, uint64_t seed,
                 const std::string& out_path) {
  EmbeddingStore store = read_store(embeddings_path);
  require_labels(store, embeddings_path);
  const std::vector<int>& labels = *store.sidecar.labels;
  if (k == 0) {
    for (int y : labels) k = std::max(k, y + 1);
  }
  std::vector<int> assign = kmeans(store.rows, k, seed);
  ClusterAgreement agreement = clustering_agreement(assign, labels);
  MetricSeries ari{"ari", {agreement.ari}, false, 0, 0, 0};
  MetricSeries mi{"mi", {agreement.mi}, false, 0, 0, 0};
  json j = results_json("cluster", "k=" + std::to_string(k), {ari, mi});
  write_file_atomic(out_path, j.dump(2) + "\n");
}

void run_report(const std::vector<std::string>& result_paths,
                const std::string& out_path) {
  std::string tsv = "file\ttask\tscheme\tmetric\tmean\tstderr\tci_lo\tci_hi\tn_folds\n";
  char buf[512];
  for (const std::string& path : result_paths) {
    json j = parse_json_file(path);
    if (!j.contains("results"))
      throw ValidationError(path + ": field 'results' missing");
    for (const auto& e : j["results"]) {
      const std::string stderr_s =
          e.contains("stderr") ? std::to_string(e["stderr"].get<double>()) : "-";
      std::string lo = "-", hi = "-";
      if (e.contains("ci")) {
        lo = std::to_string(e["ci"][0].get<double>());
        hi = std::to_string(e["ci"][1].get<double>());
      }
      std::snprintf(buf, sizeof(buf), "%s\t%s\t%s\t%s\t%.6f\t%s\t%s\t%s\t%zu\n",
                    fs::path(path).filename().string().c_str(),
                    j["task"].get<std::string>().c_str(),
                    j["scheme"].get<std::string>().c_str(),
                    e["metric"].get<std::string>().c_str(), e["mean"].get<double>(),
                    stderr_s.c_str(), lo.c_str(), hi.c_str(),
                    e["folds"].size());
      tsv += buf;
    }
  }
  write_file_atomic(out_path, tsv);
}

}  // namespace thd
