#include "thd/store.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

namespace thd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  std::string context;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw ValidationError(context + ": truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

json survival_to_json(const std::vector<SurvivalRecord>& records) {
  json arr = json::array();
  for (const SurvivalRecord& r : records)
    arr.push_back({{"time", r.time}, {"event", r.event}});
  return arr;
}

std::vector<SurvivalRecord> survival_from_json(const json& arr, const std::string& ctx) {
  std::vector<SurvivalRecord> out;
  for (const auto& e : arr) {
    if (!e.contains("time") || !e.contains("event"))
      throw ValidationError(ctx + ": survival entries need time and event");
    out.push_back(SurvivalRecord{e["time"].get<double>(), e["event"].get<int>()});
  }
  return out;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write: " + tmp);
  }
  fs::rename(tmp, path);
}

LabeledEmbeddingSet EmbeddingStore::to_labeled_set() const {
  LabeledEmbeddingSet set;
  set.ids = sidecar.ids;
  set.embeddings = rows;
  if (sidecar.labels) set.labels = *sidecar.labels;
  if (sidecar.survival) set.survival = *sidecar.survival;
  if (sidecar.patients) set.patients = *sidecar.patients;
  return set;
}

void write_store(const std::string& path, const Matrix& rows,
                 const StoreSidecar& sidecar) {
  if (sidecar.ids.size() != static_cast<size_t>(rows.rows))
    throw ValidationError("write_store: sidecar id count != row count");
  if (!rows.all_finite()) throw ValidationError("write_store: non-finite values");

  std::string blob;
  blob.reserve(20 + rows.size() * 4);
  blob += "THDS";
  put_u32(blob, kStoreVersion);
  put_u64(blob, static_cast<uint64_t>(rows.rows));
  put_u32(blob, static_cast<uint32_t>(rows.cols));
  for (double v : rows.data) put_f32(blob, static_cast<float>(v));
  write_file_atomic(path, blob);

  json side;
  side["ids"] = sidecar.ids;
  if (sidecar.labels) side["labels"] = *sidecar.labels;
  if (sidecar.patients) side["patients"] = *sidecar.patients;
  if (sidecar.survival) side["survival"] = survival_to_json(*sidecar.survival);
  write_file_atomic(path + ".json", side.dump(2) + "\n");
}

EmbeddingStore read_store(const std::string& path) {
  const std::string blob = read_file(path);
  Reader r{blob, 0, path};
  if (r.bytes(4) != "THDS")
    throw ValidationError(path + ": bad magic, not an embedding store");
  const uint32_t version = r.u32();
  if (version != kStoreVersion)
    throw ValidationError(path + ": unsupported store version " +
                          std::to_string(version));
  const uint64_t count = r.u64();
  const uint32_t dim = r.u32();
  if (blob.size() != 20 + 4 * count * dim)
    throw ValidationError(path + ": size does not match header (" +
                          std::to_string(blob.size()) + " bytes for " +
                          std::to_string(count) + "x" + std::to_string(dim) + ")");
  EmbeddingStore store;
  store.rows = Matrix(static_cast<int>(count), static_cast<int>(dim));
  for (double& v : store.rows.data) v = static_cast<double>(r.f32());

  const std::string side_path = path + ".json";
  json side;
  try {
    side = json::parse(read_file(side_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(side_path + ": invalid JSON: " + e.what());
  }
  if (!side.contains("ids"))
    throw ValidationError(side_path + ": field 'ids' missing");
  store.sidecar.ids = side["ids"].get<std::vector<std::string>>();
  if (store.sidecar.ids.size() != count)
    throw ValidationError(side_path + ": id count != store row count");
  if (side.contains("labels"))
    store.sidecar.labels = side["labels"].get<std::vector<int>>();
  if (side.contains("patients"))
    store.sidecar.patients = side["patients"].get<std::vector<std::string>>();
  if (side.contains("survival"))
    store.sidecar.survival = survival_from_json(side["survival"], side_path);
  return store;
}

namespace {

json slide_config_json(const SlideEncoderConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"heads", c.heads},
          {"pre_attention_layers", c.pre_attention_layers},
          {"pre_dropout", c.pre_dropout},
          {"attention_dropout", c.attention_dropout},
          {"output_dim", c.output_dim}};
}

SlideEncoderConfig slide_config_from(const json& j) {
  SlideEncoderConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.pre_attention_layers = j.at("pre_attention_layers").get<int>();
  c.pre_dropout = j.at("pre_dropout").get<double>();
  c.attention_dropout = j.at("attention_dropout").get<double>();
  c.output_dim = j.at("output_dim").get<int>();
  return c;
}

json model_config_json(const ModelConfig& c) {
  json j;
  j["slide"] = slide_config_json(c.slide);
  j["mode"] = c.mode == MolecularMode::Genomic ? "genomic" : "transcriptomic";
  j["genomic"] = {{"gene_count", c.genomic.gene_count},
                  {"hidden_dim", c.genomic.hidden_dim},
                  {"output_dim", c.genomic.output_dim},
                  {"dropout", c.genomic.dropout}};
  j["transcriptomic"] = {{"vocab_size", c.transcriptomic.vocab_size},
                         {"gene_dim", c.transcriptomic.gene_dim},
                         {"depth", c.transcriptomic.depth},
                         {"attention_heads", c.transcriptomic.attention_heads},
                         {"ff_mult", c.transcriptomic.ff_mult},
                         {"dropout", c.transcriptomic.dropout},
                         {"output_dim", c.transcriptomic.output_dim},
                         {"ln_eps", c.transcriptomic.ln_eps}};
  return j;
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.slide = slide_config_from(j.at("slide"));
  c.mode = j.at("mode").get<std::string>() == "genomic" ? MolecularMode::Genomic
                                                        : MolecularMode::Transcriptomic;
  const json& g = j.at("genomic");
  c.genomic.gene_count = g.at("gene_count").get<int>();
  c.genomic.hidden_dim = g.at("hidden_dim").get<int>();
  c.genomic.output_dim = g.at("output_dim").get<int>();
  c.genomic.dropout = g.at("dropout").get<double>();
  const json& t = j.at("transcriptomic");
  c.transcriptomic.vocab_size = t.at("vocab_size").get<int>();
  c.transcriptomic.gene_dim = t.at("gene_dim").get<int>();
  c.transcriptomic.depth = t.at("depth").get<int>();
  c.transcriptomic.attention_heads = t.at("attention_heads").get<int>();
  c.transcriptomic.ff_mult = t.at("ff_mult").get<int>();
  c.transcriptomic.dropout = t.at("dropout").get<double>();
  c.transcriptomic.output_dim = t.at("output_dim").get<int>();
  c.transcriptomic.ln_eps = t.at("ln_eps").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state) {
  std::string blob;
  blob += "THCK";
  put_u32(blob, kStoreVersion);
  const std::string cfg = model_config_json(state.config).dump();
  put_u64(blob, cfg.size());
  blob += cfg;

  size_t n_tensors = 0;
  const_cast<ModelState&>(state).visit([&](const char*, Matrix&) { ++n_tensors; });
  put_u64(blob, n_tensors);
  const_cast<ModelState&>(state).visit([&](const char* name, Matrix& m) {
    const std::string nm(name);
    put_u32(blob, static_cast<uint32_t>(nm.size()));
    blob += nm;
    put_u32(blob, static_cast<uint32_t>(m.rows));
    put_u32(blob, static_cast<uint32_t>(m.cols));
    for (double v : m.data) put_f32(blob, static_cast<float>(v));
  });
  write_file_atomic(path, blob);
}

ModelState load_checkpoint(const std::string& path) {
  const std::string blob = read_file(path);
  Reader r{blob, 0, path};
  if (r.bytes(4) != "THCK")
    throw ValidationError(path + ": bad magic, not a checkpoint");
  const uint32_t version = r.u32();
  if (version != kStoreVersion)
    throw ValidationError(path + ": unsupported checkpoint version " +
                          std::to_string(version));
  const uint64_t cfg_len = r.u64();
  json cfg;
  try {
    cfg = json::parse(r.bytes(cfg_len));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": invalid config blob: " + e.what());
  }
  ModelState state;
  state.config = model_config_from(cfg);
  Rng init_rng(0);
  state.slide = init_slide_encoder(state.config.slide, init_rng);
  if (state.config.mode == MolecularMode::Genomic)
    state.genomic = init_genomic_encoder(state.config.genomic, init_rng);
  else
    state.transcriptomic = init_transcriptomic_encoder(state.config.transcriptomic,
                                                       init_rng);

  const uint64_t n_tensors = r.u64();
  std::map<std::string, Matrix*> slots;
  state.visit([&](const char* name, Matrix& m) { slots[name] = &m; });
  if (n_tensors != slots.size())
    throw ValidationError(path + ": tensor count mismatch");
  for (uint64_t t = 0; t < n_tensors; ++t) {
    const uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    auto it = slots.find(name);
    if (it == slots.end())
      throw ValidationError(path + ": unexpected tensor '" + name + "'");
    Matrix& m = *it->second;
    if (m.rows != static_cast<int>(rows) || m.cols != static_cast<int>(cols))
      throw ValidationError(path + ": tensor '" + name + "' has shape " +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            ", expected " + shape_string(m));
    for (double& v : m.data) v = static_cast<double>(r.f32());
  }
  return state;
}

void write_dataset(const std::string& dir, const std::vector<PairedSample>& samples,
                   const GeneratorConfig& cfg) {
  if (samples.empty()) throw ValidationError("write_dataset: no samples");
  fs::create_directories(dir);

  int total_patches = 0;
  for (const PairedSample& s : samples) total_patches += s.bag.patches.rows;

  Matrix patches(total_patches, cfg.patch_dim);
  StoreSidecar patch_side;
  const int mol_dim = cfg.mode == MolecularMode::Genomic
                          ? kVariantSlots * cfg.gene_count
                          : cfg.gene_count;
  Matrix molecular(static_cast<int>(samples.size()), mol_dim);
  StoreSidecar mol_side;

  json manifest;
  manifest["format_version"] = 1;
  manifest["mode"] = cfg.mode == MolecularMode::Genomic ? "genomic" : "transcriptomic";
  manifest["n_classes"] = cfg.n_classes;
  manifest["patch_dim"] = cfg.patch_dim;
  manifest["gene_count"] = cfg.gene_count;
  json entries = json::array();

  int patch_row = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const PairedSample& s = samples[i];
    json e;
    e["id"] = s.id;
    e["label"] = s.label;
    e["patient"] = s.id;
    e["survival"] = {{"time", s.survival.time}, {"event", s.survival.event}};
    e["bag"] = {{"offset", patch_row}, {"count", s.bag.patches.rows}};
    e["molecular_row"] = static_cast<int>(i);
    entries.push_back(std::move(e));

    for (int p = 0; p < s.bag.patches.rows; ++p, ++patch_row) {
      patch_side.ids.push_back(s.id + ":" + std::to_string(p));
      for (int j = 0; j < cfg.patch_dim; ++j)
        patches.at(patch_row, j) = s.bag.patches.at(p, j);
    }
    mol_side.ids.push_back(s.id);
    if (cfg.mode == MolecularMode::Genomic) {
      const auto& prof = std::get<GenomicProfile>(s.molecular);
      for (int j = 0; j < mol_dim; ++j)
        molecular.at(static_cast<int>(i), j) = prof.multi_hot[static_cast<size_t>(j)];
    } else {
      const auto& prof = std::get<TranscriptomicProfile>(s.molecular);
      for (int j = 0; j < mol_dim; ++j)
        molecular.at(static_cast<int>(i), j) = prof.values[static_cast<size_t>(j)];
    }
  }
  manifest["samples"] = std::move(entries);

  write_store(dir + "/patches.thds", patches, patch_side);
  write_store(dir + "/molecular.thds", molecular, mol_side);
  write_file_atomic(dir + "/dataset.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/dataset.json";
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(manifest_path + ": invalid JSON: " + e.what());
  }
  Dataset ds;
  ds.mode = manifest.at("mode").get<std::string>() == "genomic"
                ? MolecularMode::Genomic
                : MolecularMode::Transcriptomic;
  ds.n_classes = manifest.at("n_classes").get<int>();
  ds.patch_dim = manifest.at("patch_dim").get<int>();
  ds.gene_count = manifest.at("gene_count").get<int>();

  EmbeddingStore patches = read_store(dir + "/patches.thds");
  EmbeddingStore molecular = read_store(dir + "/molecular.thds");
  if (patches.rows.cols != ds.patch_dim)
    throw ValidationError(manifest_path + ": patch store dim != manifest patch_dim");

  for (const auto& e : manifest.at("samples")) {
    PairedSample s;
    s.id = e.at("id").get<std::string>();
    s.label = e.at("label").get<int>();
    s.survival.time = e.at("survival").at("time").get<double>();
    s.survival.event = e.at("survival").at("event").get<int>();
    const int offset = e.at("bag").at("offset").get<int>();
    const int count = e.at("bag").at("count").get<int>();
    if (offset < 0 || count < 1 || offset + count > patches.rows.rows)
      throw ValidationError(manifest_path + ": bag range out of bounds for " + s.id);
    s.bag.id = s.id;
    s.bag.patches = Matrix(count, ds.patch_dim);
    for (int p = 0; p < count; ++p)
      for (int j = 0; j < ds.patch_dim; ++j)
        s.bag.patches.at(p, j) = patches.rows.at(offset + p, j);

    const int mrow = e.at("molecular_row").get<int>();
    if (mrow < 0 || mrow >= molecular.rows.rows)
      throw ValidationError(manifest_path + ": molecular_row out of bounds for " + s.id);
    if (ds.mode == MolecularMode::Genomic) {
      GenomicProfile prof;
      prof.gene_count = ds.gene_count;
      prof.multi_hot = molecular.rows.row(mrow);
      s.molecular = std::move(prof);
    } else {
      TranscriptomicProfile prof;
      for (int g = 0; g < ds.gene_count; ++g) {
        prof.gene_ids.push_back(g);
        prof.values.push_back(molecular.rows.at(mrow, g));
      }
      s.molecular = std::move(prof);
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw ValidationError(manifest_path + ": no samples");
  return ds;
}

}  // namespace thd
