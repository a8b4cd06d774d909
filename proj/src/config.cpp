#include "thd/config.hpp"

#include <fstream>

#include <json.hpp>

namespace thd {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

int parse_int(const std::string& v, const std::string& ctx) {
  try {
    size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ValidationError(ctx + ": expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& ctx) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ValidationError(ctx + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& ctx) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ValidationError(ctx + ": expected true or false, got '" + v + "'");
}

uint64_t parse_seed(const std::string& v, const std::string& ctx) {
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ValidationError(ctx + ": expected a seed, got '" + v + "'");
  }
}

MolecularMode parse_mode(const std::string& v, const std::string& ctx) {
  if (v == "genomic") return MolecularMode::Genomic;
  if (v == "transcriptomic") return MolecularMode::Transcriptomic;
  throw ValidationError(ctx + ": mode must be genomic or transcriptomic, got '" + v +
                        "'");
}

}  // namespace

void RunConfig::apply(const std::string& section, const std::string& key,
                      const std::string& raw, const std::string& ctx) {
  const std::string value = unquote(raw);
  if (section == "generator") {
    if (key == "n_samples") generator.n_samples = parse_int(value, ctx);
    else if (key == "n_classes") generator.n_classes = parse_int(value, ctx);
    else if (key == "latent_dim") generator.latent_dim = parse_int(value, ctx);
    else if (key == "patch_dim") generator.patch_dim = parse_int(value, ctx);
    else if (key == "bag_min") generator.bag_min = parse_int(value, ctx);
    else if (key == "bag_max") generator.bag_max = parse_int(value, ctx);
    else if (key == "mode") {
      generator.mode = parse_mode(value, ctx);
      model.mode = generator.mode;
    } else if (key == "gene_count") generator.gene_count = parse_int(value, ctx);
    else if (key == "noise") generator.noise = parse_double(value, ctx);
    else if (key == "label_noise") generator.label_noise = parse_double(value, ctx);
    else if (key == "censor_rate") generator.censor_rate = parse_double(value, ctx);
    else if (key == "class_separation") generator.class_separation = parse_double(value, ctx);
    else if (key == "seed") generator.seed = parse_seed(value, ctx);
    else throw ValidationError(ctx + ": unknown key 'generator." + key + "'");
  } else if (section == "encoder") {
    if (key == "input_dim") model.slide.input_dim = parse_int(value, ctx);
    else if (key == "hidden_dim") model.slide.hidden_dim = parse_int(value, ctx);
    else if (key == "heads") model.slide.heads = parse_int(value, ctx);
    else if (key == "pre_attention_layers")
      model.slide.pre_attention_layers = parse_int(value, ctx);
    else if (key == "pre_dropout") model.slide.pre_dropout = parse_double(value, ctx);
    else if (key == "attention_dropout")
      model.slide.attention_dropout = parse_double(value, ctx);
    else if (key == "output_dim") {
      model.slide.output_dim = parse_int(value, ctx);
      model.genomic.output_dim = model.slide.output_dim;
      model.transcriptomic.output_dim = model.slide.output_dim;
    } else throw ValidationError(ctx + ": unknown key 'encoder." + key + "'");
  } else if (section == "molecular") {
    if (key == "mode") {
      model.mode = parse_mode(value, ctx);
      generator.mode = model.mode;
    } else if (key == "gene_count") model.genomic.gene_count = parse_int(value, ctx);
    else if (key == "genomic_hidden") model.genomic.hidden_dim = parse_int(value, ctx);
    else if (key == "genomic_dropout") model.genomic.dropout = parse_double(value, ctx);
    else if (key == "vocab_size") model.transcriptomic.vocab_size = parse_int(value, ctx);
    else if (key == "gene_dim") model.transcriptomic.gene_dim = parse_int(value, ctx);
    else if (key == "depth") model.transcriptomic.depth = parse_int(value, ctx);
    else if (key == "attention_heads")
      model.transcriptomic.attention_heads = parse_int(value, ctx);
    else if (key == "ff_mult") model.transcriptomic.ff_mult = parse_int(value, ctx);
    else if (key == "dropout") model.transcriptomic.dropout = parse_double(value, ctx);
    else throw ValidationError(ctx + ": unknown key 'molecular." + key + "'");
  } else if (section == "train") {
    if (key == "batch_size") train.batch_size = parse_int(value, ctx);
    else if (key == "patches_per_slide") train.patches_per_slide = parse_int(value, ctx);
    else if (key == "peak_lr") train.peak_lr = parse_double(value, ctx);
    else if (key == "final_lr") train.final_lr = parse_double(value, ctx);
    else if (key == "warmup_epochs") train.warmup_epochs = parse_int(value, ctx);
    else if (key == "max_epochs") train.max_epochs = parse_int(value, ctx);
    else if (key == "weight_decay") train.weight_decay = parse_double(value, ctx);
    else if (key == "adam_beta1") train.adam_beta1 = parse_double(value, ctx);
    else if (key == "adam_beta2") train.adam_beta2 = parse_double(value, ctx);
    else if (key == "adam_eps") train.adam_eps = parse_double(value, ctx);
    else if (key == "temperature") train.temperature = parse_double(value, ctx);
    else if (key == "rankme_eps") train.rankme_eps = parse_double(value, ctx);
    else if (key == "rankme_max_slides")
      train.rankme_max_slides = parse_int(value, ctx);
    else if (key == "seed") train.seed = parse_seed(value, ctx);
    else throw ValidationError(ctx + ": unknown key 'train." + key + "'");
  } else if (section == "splits") {
    if (key == "scheme") {
      if (value == "kfold") splits.scheme = SplitScheme::KFold;
      else if (value == "montecarlo") splits.scheme = SplitScheme::MonteCarlo;
      else if (value == "official-single") splits.scheme = SplitScheme::OfficialSingle;
      else
        throw ValidationError(ctx +
                              ": scheme must be kfold, montecarlo or official-single");
    } else if (key == "folds") splits.folds = parse_int(value, ctx);
    else if (key == "stratify") splits.stratify = parse_bool(value, ctx);
    else if (key == "group_by_patient")
      splits.group_by_patient = parse_bool(value, ctx);
    else if (key == "fewshot_k") splits.fewshot_k = parse_int(value, ctx);
    else if (key == "seed") splits.seed = parse_seed(value, ctx);
    else throw ValidationError(ctx + ": unknown key 'splits." + key + "'");
  } else if (section == "eval") {
    if (key == "probe_cost") probe.cost = parse_double(value, ctx);
    else if (key == "probe_max_iter") probe.max_iter = parse_int(value, ctx);
    else if (key == "coxnet_alpha_overall")
      coxnet_alpha_overall = parse_double(value, ctx);
    else if (key == "coxnet_alpha_progression_free")
      coxnet_alpha_progression_free = parse_double(value, ctx);
    else if (key == "bootstrap_replicates")
      bootstrap_replicates = parse_int(value, ctx);
    else if (key == "finetune_epochs") finetune.epochs = parse_int(value, ctx);
    else if (key == "finetune_lr") finetune.lr = parse_double(value, ctx);
    else if (key == "finetune_patches")
      finetune.patches_per_step = parse_int(value, ctx);
    else throw ValidationError(ctx + ": unknown key 'eval." + key + "'");
  } else {
    throw ValidationError(ctx + ": unknown section '[" + section + "]'");
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(ctx + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(ctx + ": expected key = value");
    if (section.empty())
      throw ValidationError(ctx + ": key outside of any [section]");
    cfg.apply(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), ctx);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const std::string ctx = "--set " + assignment;
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ValidationError(ctx + ": expected section.key=value");
  const std::string path = trim(assignment.substr(0, eq));
  const size_t dot = path.find('.');
  if (dot == std::string::npos)
    throw ValidationError(ctx + ": expected section.key=value");
  cfg.apply(path.substr(0, dot), path.substr(dot + 1), trim(assignment.substr(eq + 1)),
            ctx);
}

std::string default_hyperparameters_json() {
  RunConfig d;
  json j;
  j["pretrain"] = {{"temperature", d.train.temperature},
                   {"patches_per_slide", d.train.patches_per_slide},
                   {"warmup_epochs", d.train.warmup_epochs},
                   {"max_epochs", d.train.max_epochs},
                   {"peak_lr", d.train.peak_lr},
                   {"final_lr", d.train.final_lr},
                   {"weight_decay", d.train.weight_decay},
                   {"adam_beta1", d.train.adam_beta1},
                   {"adam_beta2", d.train.adam_beta2},
                   {"adam_eps", d.train.adam_eps},
                   {"rankme_eps", d.train.rankme_eps}};
  j["encoder"] = {{"input_dim", d.model.slide.input_dim},
                  {"hidden_dim", d.model.slide.hidden_dim},
                  {"heads", d.model.slide.heads},
                  {"pre_attention_layers", d.model.slide.pre_attention_layers},
                  {"pre_dropout", d.model.slide.pre_dropout},
                  {"attention_dropout", d.model.slide.attention_dropout},
                  {"output_dim", d.model.slide.output_dim}};
  j["molecular"] = {{"gene_count", d.model.genomic.gene_count},
                    {"genomic_dropout", d.model.genomic.dropout},
                    {"multi_hot_length",
                     kVariantSlots * d.model.genomic.gene_count}};
  j["probe"] = {{"cost", d.probe.cost}, {"max_iter", d.probe.max_iter}};
  j["coxnet"] = {{"alpha_overall", d.coxnet_alpha_overall},
                 {"alpha_progression_free", d.coxnet_alpha_progression_free},
                 {"max_iter", CoxnetConfig{}.max_iter}};
  j["finetune"] = {{"lr", d.finetune.lr},
                   {"epochs", d.finetune.epochs},
                   {"patches_per_step", d.finetune.patches_per_step}};
  j["bootstrap"] = {{"replicates", d.bootstrap_replicates}};
  return j.dump(2) + "\n";
}

}  // namespace thd
