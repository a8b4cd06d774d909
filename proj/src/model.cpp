#include "thd/model.hpp"

namespace thd {

void ModelConfig::validate() const {
  slide.validate();
  if (mode == MolecularMode::Genomic) {
    genomic.validate();
    if (genomic.output_dim != slide.output_dim)
      throw ValidationError("ModelConfig: genomic and slide output dims differ");
  } else {
    transcriptomic.validate();
    if (transcriptomic.output_dim != slide.output_dim)
      throw ValidationError("ModelConfig: transcriptomic and slide output dims differ");
  }
}

long long ModelState::param_count() const {
  long long n = 0;
  const_cast<ModelState*>(this)->visit(
      [&](const char*, Matrix& m) { n += static_cast<long long>(m.size()); });
  return n;
}

ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelState s;
  s.config = cfg;
  Rng root(seed);
  Rng slide_rng = root.fork(1);
  Rng mol_rng = root.fork(2);
  s.slide = init_slide_encoder(cfg.slide, slide_rng);
  if (cfg.mode == MolecularMode::Genomic)
    s.genomic = init_genomic_encoder(cfg.genomic, mol_rng);
  else
    s.transcriptomic = init_transcriptomic_encoder(cfg.transcriptomic, mol_rng);
  return s;
}

Matrix encode_molecular(const MolecularProfile& profile, const ModelState& state,
                        Rng* rng, bool training) {
  if (profile_mode(profile) != state.config.mode)
    throw ValidationError("encode_molecular: profile mode does not match model");
  if (state.config.mode == MolecularMode::Genomic)
    return encode_genomic(std::get<GenomicProfile>(profile), state.genomic,
                          state.config.genomic, rng, training);
  return encode_transcriptome(std::get<TranscriptomicProfile>(profile),
                              state.transcriptomic, state.config.transcriptomic, rng,
                              training);
}

}  // namespace thd
