#pragma once

#include "thd/molecular.hpp"
#include "thd/slide_encoder.hpp"

namespace thd {

struct ModelConfig {
  SlideEncoderConfig slide;
  MolecularMode mode = MolecularMode::Genomic;
  GenomicEncoderConfig genomic;
  TranscriptomicEncoderConfig transcriptomic;

  void validate() const;
};

// All learnable parameters of the slide encoder plus the active molecular
// encoder. Only the branch selected by config.mode is initialized and visited.
struct ModelState {
  ModelConfig config;
  SlideEncoderParams slide;
  GenomicEncoderParams genomic;
  TranscriptomicEncoderParams transcriptomic;

  template <typename F>
  void visit(F&& f) {
    slide.visit(f);
    if (config.mode == MolecularMode::Genomic)
      genomic.visit(f);
    else
      transcriptomic.visit(f);
  }

  long long param_count() const;
};

ModelState init_model(const ModelConfig& cfg, uint64_t seed);

Matrix encode_molecular(const MolecularProfile& profile, const ModelState& state,
                        Rng* rng = nullptr, bool training = false);

}  // namespace thd
