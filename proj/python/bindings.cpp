#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ttn/corpus.hpp"
#include "ttn/embedder.hpp"
#include "ttn/error.hpp"
#include "ttn/evaluation.hpp"
#include "ttn/retrieval.hpp"
#include "ttn/topicmodel.hpp"

namespace py = pybind11;
using namespace ttn;

namespace {

std::vector<std::vector<double>> phi_matrix(const TopicModel& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < m.num_topics; ++k) {
    auto r = m.topic_row(k);
    rows.emplace_back(r.begin(), r.end());
  }
  return rows;
}

std::vector<TrainingPair> make_pairs(const std::vector<std::vector<double>>& features,
                                     const std::vector<std::vector<double>>& targets) {
  if (features.size() != targets.size()) throw DimensionError("need one target per feature vector");
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < features.size(); ++i) pairs.push_back({features[i], targets[i]});
  return pairs;
}

std::vector<LabeledVector> labeled(const std::vector<std::pair<std::vector<double>, std::string>>& rows) {
  std::vector<LabeledVector> out;
  for (const auto& [x, label] : rows) out.push_back({x, label});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Topic models, image-to-topic embedders, KL retrieval and linear probes";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<EmptyVocabularyError>(m, "EmptyVocabularyError", error.ptr());
  py::register_exception<EmptyDocumentError>(m, "EmptyDocumentError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", error.ptr());

  // corpus
  m.def("porter_stem", &porter_stem, py::arg("word"));
  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("default_stopwords", []() { return default_stopwords(); });
  m.def(
      "normalize_text",
      [](const std::string& text, std::optional<StopWords> stopwords) {
        return normalize_text(text, stopwords ? *stopwords : default_stopwords());
      },
      py::arg("text"), py::arg("stopwords") = py::none());

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static(
          "build",
          [](const std::vector<std::vector<std::string>>& docs, int min_doc_count, double max_doc_fraction) {
            return Vocabulary::build(docs, min_doc_count, max_doc_fraction);
          },
          py::arg("docs"), py::arg("min_doc_count") = defaults::kMinDocCount,
          py::arg("max_doc_fraction") = defaults::kMaxDocFraction)
      .def_static("read_tsv", py::overload_cast<const std::string&>(&Vocabulary::read_tsv), py::arg("path"))
      .def("write_tsv", py::overload_cast<const std::string&>(&Vocabulary::write_tsv, py::const_), py::arg("path"))
      .def_property_readonly("words", &Vocabulary::words)
      .def_property_readonly("total_docs", &Vocabulary::total_docs)
      .def("doc_freq", &Vocabulary::doc_freq, py::arg("index"))
      .def("lookup", &Vocabulary::lookup, py::arg("word"))
      .def("fingerprint", &Vocabulary::fingerprint)
      .def("__len__", &Vocabulary::size)
      .def("__eq__", &Vocabulary::operator==);

  py::class_<BowDocument>(m, "BowDocument")
      .def_readonly("doc_id", &BowDocument::doc_id)
      .def_readonly("class_label", &BowDocument::class_label)
      .def_property_readonly("counts",
                             [](const BowDocument& d) {
                               std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
                               for (const auto& wc : d.counts) out.emplace_back(wc.word, wc.count);
                               return out;
                             })
      .def("total_tokens", &BowDocument::total_tokens);

  m.def(
      "vectorize",
      [](const std::vector<std::string>& tokens, const Vocabulary& vocab, std::string doc_id,
         std::optional<std::string> label) { return vectorize(tokens, vocab, std::move(doc_id), std::move(label)); },
      py::arg("tokens"), py::arg("vocab"), py::arg("doc_id") = "", py::arg("class_label") = py::none());

  // topic model
  py::class_<TopicModel>(m, "TopicModel")
      .def_readonly("num_topics", &TopicModel::num_topics)
      .def_readonly("alpha", &TopicModel::alpha)
      .def_readonly("eta", &TopicModel::eta)
      .def_readonly("vocab_size", &TopicModel::vocab_size)
      .def_property_readonly("phi", &phi_matrix)
      .def("training_theta", [](const TopicModel& model, std::size_t d) { return model.training_theta(d).values(); })
      .def("save", [](const TopicModel& model, const std::string& path, bool state) { write_model(path, model, state); },
           py::arg("path"), py::arg("include_state") = true)
      .def_static("load", py::overload_cast<const std::string&>(&read_model), py::arg("path"));

  m.def(
      "train_lda",
      [](const std::vector<BowDocument>& docs, const Vocabulary& vocab, std::size_t num_topics,
         std::optional<double> alpha, double eta, int iters, std::uint64_t seed) {
        LdaOptions opt;
        opt.num_topics = num_topics;
        opt.alpha = alpha;
        opt.eta = eta;
        opt.iters = iters;
        opt.seed = seed;
        py::gil_scoped_release release;
        return train_lda(docs, vocab, opt);
      },
      py::arg("docs"), py::arg("vocab"), py::arg("num_topics") = defaults::kNumTopics, py::arg("alpha") = py::none(),
      py::arg("eta") = defaults::kEta, py::arg("iters") = defaults::kLdaIters, py::arg("seed") = defaults::kSeed);

  m.def(
      "infer_topics",
      [](const TopicModel& model, const BowDocument& doc, int iters, std::uint64_t seed) {
        const auto inf = infer_topics(model, doc, iters, seed);
        return py::make_tuple(inf.theta.values(), inf.prior_only);
      },
      py::arg("model"), py::arg("doc"), py::arg("iters") = defaults::kInferIters, py::arg("seed") = defaults::kSeed);

  m.def(
      "perplexity",
      [](const TopicModel& model, const std::vector<BowDocument>& docs, int iters, std::uint64_t seed) {
        return perplexity(model, docs, iters, seed).perplexity;
      },
      py::arg("model"), py::arg("docs"), py::arg("iters") = defaults::kInferIters, py::arg("seed") = defaults::kSeed);

  m.def("top_words", &top_words, py::arg("model"), py::arg("vocab"), py::arg("topic"),
        py::arg("n") = defaults::kTopWords);

  // embedder
  py::class_<EmbedderNet>(m, "EmbedderNet")
      .def_static("zeros", &EmbedderNet::zeros, py::arg("layer_dims"))
      .def_static("glorot", &EmbedderNet::glorot, py::arg("layer_dims"), py::arg("seed") = defaults::kSeed)
      .def_property_readonly("layer_dims", &EmbedderNet::layer_dims)
      .def("forward", [](const EmbedderNet& net, const std::vector<double>& x) { return net.forward(x); })
      .def("activations",
           [](const EmbedderNet& net, const std::vector<double>& x, std::size_t layer) {
             return net.activations(x, layer);
           })
      .def("parameters", &EmbedderNet::parameters)
      .def("set_parameters", [](EmbedderNet& net, const std::vector<double>& p) { net.set_parameters(p); })
      .def("save", [](const EmbedderNet& net, const std::string& path) { write_net(path, net); })
      .def_static("load", py::overload_cast<const std::string&>(&read_net), py::arg("path"))
      .def("__eq__", &EmbedderNet::operator==);

  m.def("sigmoid_ce_loss", [](const std::vector<double>& l, const std::vector<double>& t) { return sigmoid_ce_loss(l, t); },
        py::arg("logits"), py::arg("targets"));
  m.def("sigmoid_ce_gradient",
        [](const std::vector<double>& l, const std::vector<double>& t) { return sigmoid_ce_gradient(l, t); },
        py::arg("logits"), py::arg("targets"));
  m.def("project_logits", [](const std::vector<double>& l) { return project_logits(l).values(); }, py::arg("logits"));
  m.def(
      "project_image",
      [](const EmbedderNet& net, const std::vector<double>& x) { return project_image(net, x).values(); },
      py::arg("net"), py::arg("features"));

  m.def(
      "train_embedder",
      [](const EmbedderNet& net, const std::vector<std::vector<double>>& features,
         const std::vector<std::vector<double>>& targets, double lr, double lr_decay, long lr_step, double momentum,
         std::size_t batch, long iters, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.base_lr = lr;
        cfg.lr_decay_factor = lr_decay;
        cfg.lr_decay_every = lr_step;
        cfg.momentum = momentum;
        cfg.batch_size = batch;
        cfg.max_iters = iters;
        cfg.seed = seed;
        const auto pairs = make_pairs(features, targets);
        py::gil_scoped_release release;
        auto result = train_embedder(net, pairs, cfg);
        return std::make_pair(std::move(result.net), std::move(result.trace.epoch_loss));
      },
      py::arg("net"), py::arg("features"), py::arg("targets"), py::arg("lr") = defaults::kBaseLr,
      py::arg("lr_decay") = defaults::kLrDecayFactor, py::arg("lr_step") = defaults::kLrDecayEvery,
      py::arg("momentum") = defaults::kMomentum, py::arg("batch") = defaults::kBatchSize,
      py::arg("iters") = defaults::kEmbedderIters, py::arg("seed") = defaults::kSeed);

  // retrieval
  m.def(
      "kl_divergence",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        return kl_divergence(TopicDistribution(p), TopicDistribution(q));
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "smooth", [](const std::vector<double>& p, double eps) { return smooth(TopicDistribution(p), eps).values(); },
      py::arg("dist"), py::arg("epsilon") = defaults::kEpsilon);

  py::class_<TopicIndex>(m, "TopicIndex")
      .def(py::init([](const std::vector<std::tuple<std::string, std::string, std::vector<double>,
                                                    std::optional<std::string>>>& rows,
                       double epsilon) {
             std::vector<IndexEntry> entries;
             for (const auto& [id, modality, dist, label] : rows) {
               entries.push_back({id, parse_modality(modality), TopicDistribution(dist), label});
             }
             return TopicIndex::build(std::move(entries), epsilon);
           }),
           py::arg("entries"), py::arg("epsilon") = defaults::kEpsilon)
      .def("__len__", &TopicIndex::size)
      .def(
          "query",
          [](const TopicIndex& index, const std::vector<double>& q, const std::string& target, std::size_t top_n) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& hit : index.query(TopicDistribution(q), parse_modality(target), top_n)) {
              out.emplace_back(hit.id, hit.divergence);
            }
            return out;
          },
          py::arg("query"), py::arg("target") = "text", py::arg("top_n") = defaults::kTopN);

  m.def(
      "mean_average_precision",
      [](const std::vector<std::vector<std::string>>& rankings, const std::vector<std::string>& labels) {
        return mean_average_precision(rankings, labels).mean_ap;
      },
      py::arg("rankings"), py::arg("query_labels"));

  // evaluation
  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<bool>& relevance) {
        return average_precision(scores, relevance);
      },
      py::arg("scores"), py::arg("relevance"));

  m.def(
      "train_linear_probe",
      [](const std::vector<std::pair<std::vector<double>, std::string>>& train,
         const std::vector<std::pair<std::vector<double>, std::string>>& validation,
         const std::vector<std::pair<std::vector<double>, std::string>>& test, std::vector<double> grid,
         std::uint64_t seed) {
        ProbeData data{labeled(train), labeled(validation), labeled(test)};
        const auto classes = probe_classes(data);
        const auto r = train_linear_probe(data, classes, grid, seed);
        py::dict out;
        out["per_class_ap"] = r.per_class_ap;
        out["mean_ap"] = r.mean_ap;
        out["best_hyperparams"] = r.best_hyperparams;
        out["validation_map"] = r.validation_map;
        out["warnings"] = r.warnings;
        return out;
      },
      py::arg("train"), py::arg("validation"), py::arg("test"),
      py::arg("grid") = std::vector<double>(defaults::kRegGrid.begin(), defaults::kRegGrid.end()),
      py::arg("seed") = defaults::kSeed);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"ttn"};
        for (const auto& a : args) argv.push_back(a.c_str());
        return ttn::cli::run(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"));
}
