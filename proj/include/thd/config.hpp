#pragma once

#include <string>

#include "thd/eval.hpp"
#include "thd/synthetic.hpp"
#include "thd/trainer.hpp"

namespace thd {

// Everything a run needs, mirrored by the TOML-style config file. CLI flags
// override file values; unknown keys are rejected.
struct RunConfig {
  GeneratorConfig generator;
  ModelConfig model;
  TrainConfig train;
  SplitSpec splits;
  LogisticProbeConfig probe;
  FinetuneConfig finetune;
  double coxnet_alpha_overall = 0.07;
  double coxnet_alpha_progression_free = 0.01;
  int bootstrap_replicates = 100;

  // Applies one "section.key = value" assignment; throws ValidationError with
  // the given context on unknown keys or bad values.
  void apply(const std::string& section, const std::string& key,
             const std::string& value, const std::string& context);
};

RunConfig load_run_config(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical dump of the pinned defaults, used by the fidelity check.
std::string default_hyperparameters_json();

}  // namespace thd
