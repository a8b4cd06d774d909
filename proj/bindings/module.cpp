#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "thd/config.hpp"
#include "thd/linalg.hpp"
#include "thd/pipeline.hpp"

namespace py = pybind11;
using namespace thd;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 1) {
    Matrix m(1, static_cast<int>(a.shape(0)));
    std::memcpy(m.data.data(), a.data(), sizeof(double) * m.size());
    return m;
  }
  if (a.ndim() != 2) throw ValidationError("expected a 1-d or 2-d array");
  Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), sizeof(double) * m.size());
  return m;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::memcpy(a.mutable_data(), m.data.data(), sizeof(double) * m.size());
  return a;
}

std::vector<SurvivalRecord> to_records(const std::vector<double>& times,
                                       const std::vector<int>& events) {
  if (times.size() != events.size())
    throw ValidationError("times and events must align");
  std::vector<SurvivalRecord> out;
  out.reserve(times.size());
  for (size_t i = 0; i < times.size(); ++i)
    out.push_back(SurvivalRecord{times[i], events[i]});
  return out;
}

MolecularMode mode_from(const std::string& s) {
  if (s == "genomic") return MolecularMode::Genomic;
  if (s == "transcriptomic") return MolecularMode::Transcriptomic;
  throw ValidationError("mode must be genomic or transcriptomic");
}

// Thin handle exposing the encoders to python.
struct Model {
  ModelState state;

  py::array_t<double> encode_slide(const py::array_t<double, py::array::c_style |
                                                                  py::array::forcecast>& bag) const {
    PatchBag b{"bag", to_matrix(bag)};
    return to_array(encode_bag(b, state.slide, state.config.slide));
  }

  py::array_t<double> encode_genomic_profile(
      const py::array_t<double, py::array::c_style | py::array::forcecast>& multi_hot) const {
    Matrix v = to_matrix(multi_hot);
    GenomicProfile p;
    p.gene_count = state.config.genomic.gene_count;
    p.multi_hot = v.data;
    return to_array(encode_genomic(p, state.genomic, state.config.genomic));
  }

  py::array_t<double> encode_transcriptome_profile(const std::vector<int>& ids,
                                                   const std::vector<double>& values) const {
    TranscriptomicProfile p{ids, values};
    return to_array(encode_transcriptome(p, state.transcriptomic,
                                         state.config.transcriptomic));
  }

  long long param_count() const { return state.param_count(); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "molecular-guided slide representation learning, desk scale";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  py::class_<GeneratorConfig>(m, "GeneratorConfig")
      .def(py::init<>())
      .def_readwrite("n_samples", &GeneratorConfig::n_samples)
      .def_readwrite("n_classes", &GeneratorConfig::n_classes)
      .def_readwrite("latent_dim", &GeneratorConfig::latent_dim)
      .def_readwrite("patch_dim", &GeneratorConfig::patch_dim)
      .def_readwrite("bag_min", &GeneratorConfig::bag_min)
      .def_readwrite("bag_max", &GeneratorConfig::bag_max)
      .def_readwrite("gene_count", &GeneratorConfig::gene_count)
      .def_readwrite("noise", &GeneratorConfig::noise)
      .def_readwrite("label_noise", &GeneratorConfig::label_noise)
      .def_readwrite("censor_rate", &GeneratorConfig::censor_rate)
      .def_readwrite("seed", &GeneratorConfig::seed)
      .def_readwrite("class_separation", &GeneratorConfig::class_separation)
      .def_property(
          "mode",
          [](const GeneratorConfig& c) {
            return c.mode == MolecularMode::Genomic ? "genomic" : "transcriptomic";
          },
          [](GeneratorConfig& c, const std::string& s) { c.mode = mode_from(s); });

  py::class_<Model>(m, "Model")
      .def("encode_slide", &Model::encode_slide)
      .def("encode_genomic", &Model::encode_genomic_profile)
      .def("encode_transcriptome", &Model::encode_transcriptome_profile)
      .def("param_count", &Model::param_count)
      .def("save", [](const Model& mdl, const std::string& path) {
        save_checkpoint(path, mdl.state);
      });

  m.def(
      "init_model",
      [](const std::string& mode, int patch_dim, int hidden_dim, int heads,
         int output_dim, int gene_count, int gene_dim, int depth, uint64_t seed) {
        ModelConfig cfg;
        cfg.mode = mode_from(mode);
        cfg.slide.input_dim = patch_dim;
        cfg.slide.hidden_dim = hidden_dim;
        cfg.slide.heads = heads;
        cfg.slide.output_dim = output_dim;
        cfg.genomic.gene_count = gene_count;
        cfg.genomic.output_dim = output_dim;
        cfg.transcriptomic.vocab_size = gene_count;
        cfg.transcriptomic.gene_dim = gene_dim;
        cfg.transcriptomic.depth = depth;
        cfg.transcriptomic.attention_heads = gene_dim >= 8 ? 8 : 1;
        cfg.transcriptomic.output_dim = output_dim;
        return Model{init_model(cfg, seed)};
      },
      py::arg("mode") = "genomic", py::arg("patch_dim") = 768,
      py::arg("hidden_dim") = 1024, py::arg("heads") = 2, py::arg("output_dim") = 1024,
      py::arg("gene_count") = 239, py::arg("gene_dim") = 64, py::arg("depth") = 1,
      py::arg("seed") = 1);

  m.def("load_model", [](const std::string& path) { return Model{load_checkpoint(path)}; });

  m.def("singular_values", [](const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& h) {
    return singular_values(to_matrix(h));
  });
  m.def(
      "rankme",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& h,
         double eps) { return rankme(to_matrix(h), eps); },
      py::arg("h"), py::arg("eps") = 1e-7);

  m.def(
      "infonce_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
         double tau) {
        InfoNceResult r = infonce_loss(to_matrix(u), to_matrix(v), tau);
        return py::make_tuple(r.loss, to_array(r.grad_slide), to_array(r.grad_mol));
      },
      py::arg("slide"), py::arg("mol"), py::arg("tau") = 0.07);

  m.def("stable_softmax", [](const std::vector<double>& x) { return stable_softmax(x); });
  m.def("log2_tpm_normalize", &log2_tpm_normalize);

  m.def("auc_binary", &auc_binary);
  m.def("macro_auc",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& s,
           const std::vector<int>& y) { return macro_auc(to_matrix(s), y); });
  m.def("balanced_accuracy", &balanced_accuracy);
  m.def("quadratic_weighted_kappa", &quadratic_weighted_kappa);
  m.def("concordance_index",
        [](const std::vector<double>& risks, const std::vector<double>& times,
           const std::vector<int>& events) {
          return concordance_index(risks, to_records(times, events));
        });
  m.def(
      "map_at_k",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& q,
         const std::vector<int>& qy,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& r,
         const std::vector<int>& ry, int k) {
        return map_at_k(to_matrix(q), qy, to_matrix(r), ry, k);
      });
  m.def(
      "kmeans",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         int k, uint64_t seed) { return kmeans(to_matrix(x), k, seed); },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0);
  m.def("clustering_agreement", [](const std::vector<int>& a, const std::vector<int>& b) {
    ClusterAgreement c = clustering_agreement(a, b);
    return py::make_tuple(c.ari, c.mi);
  });

  m.def(
      "fit_logistic_probe",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const std::vector<int>& y, double cost, int max_iter) {
        LogisticProbeConfig cfg;
        cfg.cost = cost;
        cfg.max_iter = max_iter;
        LinearClassifier clf = fit_logistic_probe(to_matrix(x), y, cfg);
        return py::make_tuple(to_array(clf.weights), to_array(clf.bias));
      },
      py::arg("x"), py::arg("labels"), py::arg("cost") = 0.5,
      py::arg("max_iter") = 10000);
  m.def(
      "probe_predict_proba",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
        LinearClassifier clf;
        clf.weights = to_matrix(w);
        clf.bias = to_matrix(b);
        clf.classes = clf.weights.rows;
        return to_array(clf.predict_proba(to_matrix(x)));
      });

  m.def(
      "fit_coxnet",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const std::vector<double>& times, const std::vector<int>& events,
         double alpha) {
        CoxnetConfig cfg;
        cfg.alpha = alpha;
        CoxModel model = fit_coxnet(to_matrix(x), to_records(times, events), cfg);
        return model.beta;
      },
      py::arg("x"), py::arg("times"), py::arg("events"), py::arg("alpha") = 0.07);

  m.def(
      "generate_dataset",
      [](const GeneratorConfig& cfg) {
        std::vector<PairedSample> samples = generate_dataset(cfg);
        py::list out;
        for (const PairedSample& s : samples) {
          py::dict d;
          d["id"] = s.id;
          d["patches"] = to_array(s.bag.patches);
          d["label"] = s.label;
          d["time"] = s.survival.time;
          d["event"] = s.survival.event;
          if (cfg.mode == MolecularMode::Genomic) {
            d["molecular"] = py::array_t<double>(
                static_cast<py::ssize_t>(
                    std::get<GenomicProfile>(s.molecular).multi_hot.size()),
                std::get<GenomicProfile>(s.molecular).multi_hot.data());
          } else {
            const auto& p = std::get<TranscriptomicProfile>(s.molecular);
            d["gene_ids"] = p.gene_ids;
            d["values"] = p.values;
          }
          out.append(std::move(d));
        }
        return out;
      },
      py::arg("config"));

  m.def("default_hyperparameters_json", &default_hyperparameters_json);
}
