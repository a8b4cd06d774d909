#pragma once

#include <optional>
#include <string>
#include <vector>

#include "thd/eval.hpp"
#include "thd/model.hpp"
#include "thd/synthetic.hpp"

namespace thd {

// Binary embedding store. Layout: magic "THDS", version u32 LE, count u64 LE,
// dim u32 LE, then count*dim f32 LE row-major (20-byte header). A JSON sidecar
// at <path>.json carries ids and optional labels/patients/survival.
constexpr uint32_t kStoreVersion = 1;

struct StoreSidecar {
  std::vector<std::string> ids;
  std::optional<std::vector<int>> labels;
  std::optional<std::vector<std::string>> patients;
  std::optional<std::vector<SurvivalRecord>> survival;
};

struct EmbeddingStore {
  Matrix rows;
  StoreSidecar sidecar;

  LabeledEmbeddingSet to_labeled_set() const;
};

void write_store(const std::string& path, const Matrix& rows,
                 const StoreSidecar& sidecar);
EmbeddingStore read_store(const std::string& path);

// Model checkpoints: magic "THCK", version u32 LE, config JSON blob, then the
// named parameter tensors as f32.
void save_checkpoint(const std::string& path, const ModelState& state);
ModelState load_checkpoint(const std::string& path);

// Datasets are a directory: dataset.json manifest plus patches.thds and
// molecular.thds embedding stores.
struct Dataset {
  MolecularMode mode = MolecularMode::Genomic;
  int n_classes = 0;
  int patch_dim = 0;
  int gene_count = 0;
  std::vector<PairedSample> samples;
};

void write_dataset(const std::string& dir, const std::vector<PairedSample>& samples,
                   const GeneratorConfig& cfg);
Dataset read_dataset(const std::string& dir);

// write-temp-then-rename
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace thd
