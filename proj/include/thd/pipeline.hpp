#pragma once

#include <string>
#include <vector>

#include "thd/config.hpp"
#include "thd/store.hpp"

namespace thd {

// Orchestration behind the CLI subcommands. Each function validates inputs,
// runs the corresponding module operations and writes outputs atomically.

void run_gen_data(const RunConfig& cfg, const std::string& out_dir);

void run_pretrain(const std::string& data_dir, const RunConfig& cfg,
                  const std::string& out_dir);

void run_embed(const std::string& checkpoint_path, const std::string& data_dir,
               const std::string& out_path, const std::string& modality);

// Splits travel as JSON files keyed by sample id.
void write_splits_file(const std::string& path, const std::vector<Split>& splits,
                       const std::vector<std::string>& ids);
std::vector<Split> read_splits_file(const std::string& path,
                                    const std::vector<std::string>& ids);

void run_make_splits(const std::string& embeddings_path, const SplitSpec& spec,
                     const std::string& out_path);

void run_fewshot(const std::string& splits_path, const std::string& embeddings_path,
                 int k, uint64_t seed, const std::string& out_path);

struct EvalOptions {
  std::string splits_path;  // empty -> derive from spec
  SplitSpec spec;
  int bootstrap_replicates = 100;
  uint64_t seed = 0;
};

void run_probe(const std::string& embeddings_path, const EvalOptions& opts,
               const LogisticProbeConfig& probe_cfg, const std::string& out_path);

void run_survival(const std::string& embeddings_path, const EvalOptions& opts,
                  double alpha, const std::string& out_path);

void run_retrieve(const std::string& embeddings_path, const EvalOptions& opts,
                  const std::vector<int>& ks, const std::string& out_path);

void run_prompt(const std::string& slide_embeddings_path,
                const std::string& molecular_embeddings_path, const EvalOptions& opts,
                const std::string& task, const std::string& out_path);

void run_cluster(const std::string& embeddings_path, int k, uint64_t seed,
                 const std::string& out_path);

void run_report(const std::vector<std::string>& result_paths,
                const std::string& out_path);

}  // namespace thd
