#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/defaults.hpp"
#include "ttn/embedder.hpp"
#include "ttn/error.hpp"
#include "ttn/evaluation.hpp"
#include "ttn/jsonl.hpp"
#include "ttn/retrieval.hpp"
#include "ttn/rng.hpp"
#include "ttn/topicmodel.hpp"

namespace ttn::cli {

namespace {

void log(const std::string& message) { std::cerr << "ttn: " << message << '\n'; }

// ---------------------------------------------------------------------------
// Shared option groups

struct CorpusOptions {
  std::string path;
  std::string stopwords;
  int min_words = defaults::kMinWords;
  int min_image_px = defaults::kMinImagePx;
  bool keep_invalid = false;
  unsigned threads = 1;
};

void add_corpus_options(CLI::App* sub, CorpusOptions& o) {
  sub->add_option("--corpus", o.path, "Corpus JSON Lines file")->required()->check(CLI::ExistingFile);
  sub->add_option("--stopwords", o.stopwords, "Stop-word file (default: bundled English list)")
      ->check(CLI::ExistingFile);
  sub->add_option("--min-words", o.min_words, "Drop documents with fewer words");
  sub->add_option("--min-image-px", o.min_image_px, "Images below this size do not count");
  sub->add_flag("--keep-invalid", o.keep_invalid, "Keep documents that fail the validity checks");
  sub->add_option("--threads", o.threads, "Worker threads for text normalization");
}

struct LoadedCorpus {
  std::vector<RawDocument> docs;
  std::vector<std::vector<std::string>> tokens;
};

LoadedCorpus load_corpus(const CorpusOptions& o) {
  LoadedCorpus out;
  auto docs = read_corpus(o.path);
  std::size_t dropped = 0;
  for (auto& doc : docs) {
    if (!o.keep_invalid && !validate_pair(doc, o.min_words, o.min_image_px).usable()) {
      ++dropped;
      continue;
    }
    out.docs.push_back(std::move(doc));
  }
  if (dropped > 0) {
    log("dropped " + std::to_string(dropped) + " of " + std::to_string(dropped + out.docs.size()) +
        " documents failing validity checks (min words " + std::to_string(o.min_words) + ", min image px " +
        std::to_string(o.min_image_px) + ")");
  }
  const StopWords stopwords = o.stopwords.empty() ? default_stopwords() : read_stopwords(o.stopwords);
  out.tokens = normalize_documents(out.docs, stopwords, porter_stem, o.threads);
  return out;
}

std::vector<BowDocument> to_bow(const LoadedCorpus& corpus, const Vocabulary& vocab) {
  std::vector<BowDocument> bows;
  bows.reserve(corpus.docs.size());
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    bows.push_back(vectorize(corpus.tokens[i], vocab, corpus.docs[i].doc_id, corpus.docs[i].class_label));
  }
  return bows;
}

void check_fingerprint(const TopicModel& model, const Vocabulary& vocab) {
  if (model.vocab_fingerprint != vocab.fingerprint() || model.vocab_size != vocab.size()) {
    throw Error("model was trained with a different vocabulary (fingerprint " + model.vocab_fingerprint +
                ", vocabulary file has " + vocab.fingerprint() + ")");
  }
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Error(std::string(flag) + ": invalid positive integer '" + part + "'");
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(std::string(flag) + ": invalid number '" + part + "'");
    }
  }
  return out;
}

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < N; ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

std::optional<std::size_t> parse_layer(const std::string& text) {
  if (text == "topic") return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v < 0) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error("--layer must be 'topic' or a non-negative layer index, got '" + text + "'");
  }
}

struct OptimizerOptions {
  double lr = defaults::kBaseLr;
  double lr_decay = defaults::kLrDecayFactor;
  long lr_step = defaults::kLrDecayEvery;
  double momentum = defaults::kMomentum;
  std::size_t batch = defaults::kBatchSize;
  long iters = defaults::kEmbedderIters;
  long log_every = 100;

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.base_lr = lr;
    cfg.lr_decay_factor = lr_decay;
    cfg.lr_decay_every = lr_step;
    cfg.momentum = momentum;
    cfg.batch_size = batch;
    cfg.max_iters = iters;
    cfg.log_every = log_every;
    cfg.seed = seed;
    return cfg;
  }
};

void add_optimizer_options(CLI::App* sub, OptimizerOptions& o) {
  sub->add_option("--lr", o.lr, "Base learning rate");
  sub->add_option("--lr-decay", o.lr_decay, "Learning-rate multiplier per step");
  sub->add_option("--lr-step", o.lr_step, "Iterations between learning-rate decays");
  sub->add_option("--momentum", o.momentum, "SGD momentum");
  sub->add_option("--batch", o.batch, "Mini-batch size");
  sub->add_option("--iters", o.iters, "Optimizer iterations");
  sub->add_option("--log-every", o.log_every, "Iterations per loss-trace point");
}

// Feature id -> owning document, from the corpus feature references.
std::unordered_map<std::string, std::size_t> feature_owners(const std::vector<RawDocument>& docs) {
  std::unordered_map<std::string, std::size_t> owners;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& ref : docs[d].feature_refs) owners.emplace(ref, d);
  }
  return owners;
}

// ---------------------------------------------------------------------------
// Subcommands

struct Context {
  std::uint64_t seed = defaults::kSeed;
  std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }
};

void build_dict(const CorpusOptions& corpus_opts, int min_doc_count, double max_doc_fraction,
                const std::string& out) {
  const auto corpus = load_corpus(corpus_opts);
  const auto vocab = Vocabulary::build(corpus.tokens, min_doc_count, max_doc_fraction);
  vocab.write_tsv(out);
  log("vocabulary: " + std::to_string(vocab.size()) + " words from " + std::to_string(vocab.total_docs()) +
      " documents -> " + out);
}

struct TrainLdaArgs {
  CorpusOptions corpus;
  std::string vocab;
  std::string out;
  std::string resume;
  std::size_t topics = defaults::kNumTopics;
  std::optional<double> alpha;
  double eta = defaults::kEta;
  int iters = defaults::kLdaIters;
  bool no_state = false;
};

void train_lda_cmd(const Context& ctx, const TrainLdaArgs& a) {
  TopicModel model;
  if (!a.resume.empty()) {
    const auto previous = read_model(a.resume);
    model = resume_lda(previous, a.iters, ctx.stage_seed("train-lda"));
    log("resumed " + a.resume + " for " + std::to_string(a.iters) + " sweeps");
  } else {
    const auto vocab = Vocabulary::read_tsv(a.vocab);
    const auto corpus = load_corpus(a.corpus);
    const auto bows = to_bow(corpus, vocab);
    LdaOptions options;
    options.num_topics = a.topics;
    options.alpha = a.alpha;
    options.eta = a.eta;
    options.iters = a.iters;
    options.seed = ctx.stage_seed("train-lda");
    model = train_lda(bows, vocab, options);
    log("trained K=" + std::to_string(model.num_topics) + " topics on " + std::to_string(bows.size()) +
        " documents (alpha " + std::to_string(model.alpha) + ", eta " + std::to_string(model.eta) + ")");
  }
  write_model(a.out, model, !a.no_state);
}

void top_words_cmd(const std::string& model_path, const std::string& vocab_path, std::optional<std::size_t> topic,
                   std::size_t n, const std::string& out_path) {
  const auto model = read_model(model_path);
  const auto vocab = Vocabulary::read_tsv(vocab_path);
  check_fingerprint(model, vocab);
  auto out = io::open_output(out_path);
  out << std::setprecision(17);
  out << "topic\trank\tword\tprobability\n";
  const std::size_t first = topic.value_or(0);
  const std::size_t last = topic ? *topic + 1 : model.num_topics;
  for (std::size_t k = first; k < last; ++k) {
    const auto words = top_words(model, vocab, k, n);
    for (std::size_t r = 0; r < words.size(); ++r) {
      out << k << '\t' << r + 1 << '\t' << words[r].first << '\t' << words[r].second << '\n';
    }
  }
}

void infer_cmd(const Context& ctx, const std::string& model_path, const std::string& vocab_path,
               const CorpusOptions& corpus_opts, int iters, const std::string& out_path) {
  const auto model = read_model(model_path);
  const auto vocab = Vocabulary::read_tsv(vocab_path);
  check_fingerprint(model, vocab);
  const auto corpus = load_corpus(corpus_opts);
  const auto bows = to_bow(corpus, vocab);
  const std::uint64_t seed = ctx.stage_seed("infer");
  auto out = io::open_output(out_path);
  std::size_t prior_only = 0;
  for (std::size_t d = 0; d < bows.size(); ++d) {
    const auto inference = infer_topics(model, bows[d], iters, derive_seed(seed, d));
    io::Json obj;
    obj["id"] = bows[d].doc_id;
    obj["modality"] = "text";
    obj["dist"] = inference.theta.values();
    obj["label"] = bows[d].class_label ? io::Json(*bows[d].class_label) : io::Json(nullptr);
    if (inference.prior_only) {
      obj["prior_only"] = true;
      ++prior_only;
    }
    io::write_jsonl_line(out, obj);
  }
  if (prior_only > 0) log(std::to_string(prior_only) + " documents had no in-vocabulary tokens (prior only)");
}

void perplexity_cmd(const Context& ctx, const std::string& model_path, const std::string& vocab_path,
                    const CorpusOptions& corpus_opts, int iters, const std::string& out_path) {
  const auto model = read_model(model_path);
  const auto vocab = Vocabulary::read_tsv(vocab_path);
  check_fingerprint(model, vocab);
  const auto corpus = load_corpus(corpus_opts);
  const auto report = perplexity(model, to_bow(corpus, vocab), iters, ctx.stage_seed("perplexity"));
  for (const auto& id : report.skipped_docs) log("skipped document '" + id + "': no in-vocabulary tokens");
  io::Json obj;
  obj["perplexity"] = report.perplexity;
  obj["tokens"] = report.total_tokens;
  obj["skipped"] = report.skipped_docs;
  auto out = io::open_output(out_path);
  out << obj.dump(2) << '\n';
  log("perplexity " + std::to_string(report.perplexity) + " over " + std::to_string(report.total_tokens) + " tokens");
}

struct TrainEmbedderArgs {
  std::string features;
  std::string targets;
  std::string target_mode = "lda";
  std::string vectors;
  CorpusOptions corpus;
  std::string layers;
  OptimizerOptions opt;
  std::string out;
  std::string trace_out;
};

void train_embedder_cmd(const Context& ctx, const TrainEmbedderArgs& a) {
  const auto features = read_features(a.features);
  if (features.empty()) throw Error(a.features + ": no feature vectors");
  const auto corpus = load_corpus(a.corpus);
  const auto owners = feature_owners(corpus.docs);

  // Per-document targets.
  std::vector<std::vector<double>> doc_targets(corpus.docs.size());
  std::vector<bool> has_target(corpus.docs.size(), false);
  if (a.target_mode == "lda") {
    if (a.targets.empty()) throw Error("--targets is required with --target-mode lda");
    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) doc_index.emplace(corpus.docs[d].doc_id, d);
    for (auto& entry : read_index_entries(a.targets)) {
      auto it = doc_index.find(entry.id);
      if (it == doc_index.end()) continue;
      doc_targets[it->second] = entry.dist.values();
      has_target[it->second] = true;
    }
  } else if (a.target_mode == "mean-embedding") {
    if (a.vectors.empty()) throw Error("--vectors is required with --target-mode mean-embedding");
    const auto table = WordVectors::read(a.vectors);
    std::size_t empty = 0;
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
      auto mean = mean_embedding_target(corpus.tokens[d], table);
      if (mean.empty()) {
        ++empty;
        continue;
      }
      doc_targets[d] = std::move(mean.vec);
      has_target[d] = true;
    }
    if (empty > 0) log(std::to_string(empty) + " documents have no word in the vector table; skipped");
    std::vector<std::vector<double>> present;
    for (std::size_t d = 0; d < doc_targets.size(); ++d) {
      if (has_target[d]) present.push_back(doc_targets[d]);
    }
    rescale_to_unit_interval(present);
    for (std::size_t d = 0, p = 0; d < doc_targets.size(); ++d) {
      if (has_target[d]) doc_targets[d] = present[p++];
    }
  } else {
    throw Error("--target-mode must be 'lda' or 'mean-embedding'");
  }

  std::vector<TrainingPair> pairs;
  for (const auto& rec : features) {
    auto it = owners.find(rec.id);
    if (it == owners.end() || !has_target[it->second]) continue;
    pairs.push_back({rec.vec, doc_targets[it->second]});
  }
  if (pairs.empty()) throw Error("no feature vector is linked to a document with a target");

  const std::size_t in_dim = pairs.front().features.size();
  const std::size_t out_dim = pairs.front().target.size();
  std::vector<std::size_t> dims;
  if (a.layers.empty()) {
    dims = {in_dim, 256, out_dim};
  } else {
    dims = parse_size_list(a.layers, "--layers");
    if (dims.size() < 2) throw Error("--layers needs at least an input and an output dimension");
    if (dims.front() != in_dim) {
      throw Error("--layers starts with " + std::to_string(dims.front()) + " but features have dimension " +
                  std::to_string(in_dim));
    }
    if (dims.back() != out_dim) {
      throw Error("--layers ends with " + std::to_string(dims.back()) + " but targets have dimension " +
                  std::to_string(out_dim));
    }
  }
  const std::uint64_t seed = ctx.stage_seed("train-embedder");
  auto result = train_embedder(EmbedderNet::glorot(dims, derive_seed(seed, "init")), pairs, a.opt.config(seed));
  write_net(a.out, result.net);
  if (!result.trace.epoch_loss.empty()) {
    log("trained on " + std::to_string(pairs.size()) + " pairs; final epoch loss " +
        std::to_string(result.trace.epoch_loss.back()));
  }
  if (!a.trace_out.empty()) {
    auto out = io::open_output(a.trace_out);
    out << std::setprecision(17) << "iteration,loss\n";
    for (std::size_t i = 0; i < result.trace.iterations.size(); ++i) {
      out << result.trace.iterations[i] << ',' << result.trace.interval_loss[i] << '\n';
    }
  }
}

void project_cmd(const std::string& net_path, const std::string& features_path, const std::string& corpus_path,
                 const std::string& out_path) {
  const auto net = read_net(net_path);
  const auto features = read_features(features_path);
  std::unordered_map<std::string, std::string> labels;
  if (!corpus_path.empty()) {
    for (const auto& doc : read_corpus(corpus_path)) {
      if (!doc.class_label) continue;
      for (const auto& ref : doc.feature_refs) labels.emplace(ref, *doc.class_label);
    }
  }
  auto out = io::open_output(out_path);
  for (const auto& rec : features) {
    IndexEntry entry;
    entry.id = rec.id;
    entry.modality = Modality::Image;
    entry.dist = project_image(net, rec.vec);
    if (rec.label) {
      entry.label = rec.label;
    } else if (auto it = labels.find(rec.id); it != labels.end()) {
      entry.label = it->second;
    }
    write_index_entries(out, std::span<const IndexEntry>(&entry, 1));
  }
}

void index_cmd(const std::vector<std::string>& inputs, double epsilon, const std::string& out_path) {
  std::vector<IndexEntry> entries;
  for (const auto& path : inputs) {
    auto part = read_index_entries(path);
    entries.insert(entries.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  // Validates ids, topic counts and epsilon before anything is written.
  const auto index = TopicIndex::build(entries, epsilon);
  auto out = io::open_output(out_path);
  write_index_entries(out, entries);
  log("indexed " + std::to_string(index.count(Modality::Text)) + " text and " +
      std::to_string(index.count(Modality::Image)) + " image entries");
}

struct RetrieveArgs {
  std::string index;
  std::string query_id;
  std::string queries;
  std::string target = "same";
  std::size_t top_n = defaults::kTopN;
  double epsilon = defaults::kEpsilon;
  std::string direction = "query-to-entry";
  std::string out;
  std::string map_out;
};

void retrieve_cmd(const RetrieveArgs& a) {
  if (a.direction != "query-to-entry") throw Error("--direction only supports 'query-to-entry'");
  const auto entries = read_index_entries(a.index);
  const auto index = TopicIndex::build(entries, a.epsilon);

  std::vector<IndexEntry> queries;
  if (!a.query_id.empty()) {
    const auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.id == a.query_id; });
    if (it == entries.end()) throw Error("query id '" + a.query_id + "' is not in the index");
    queries.push_back(*it);
  } else if (!a.queries.empty()) {
    queries = read_index_entries(a.queries);
  } else {
    throw Error("one of --query-id or --queries is required");
  }

  const auto target_for = [&](Modality m) {
    if (a.target == "same") return m;
    if (a.target == "cross") return m == Modality::Text ? Modality::Image : Modality::Text;
    return parse_modality(a.target);
  };

  auto out = io::open_output(a.out);
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::string> query_labels;
  for (const auto& q : queries) {
    const Modality target = target_for(q.modality);
    const auto hits = index.query(q.dist, target, a.top_n);
    for (std::size_t r = 0; r < hits.size(); ++r) {
      io::Json obj;
      obj["query"] = q.id;
      obj["rank"] = r + 1;
      obj["id"] = hits[r].id;
      obj["divergence"] = hits[r].divergence;
      obj["label"] = hits[r].label ? io::Json(*hits[r].label) : io::Json(nullptr);
      io::write_jsonl_line(out, obj);
    }
    if (!a.map_out.empty() && q.label) {
      const auto full = index.query(q.dist, target, index.size());
      std::vector<std::string> labels;
      for (const auto& h : full) labels.push_back(h.label.value_or(""));
      rankings.push_back(std::move(labels));
      query_labels.push_back(*q.label);
    }
  }
  if (!a.map_out.empty()) {
    const auto report = mean_average_precision(rankings, query_labels);
    if (report.excluded > 0) log(std::to_string(report.excluded) + " queries had no relevant entry; excluded");
    io::Json obj;
    obj["mean_ap"] = report.mean_ap;
    obj["queries"] = rankings.size() - report.excluded;
    obj["excluded"] = report.excluded;
    auto map_out = io::open_output(a.map_out);
    map_out << obj.dump(2) << '\n';
    log("retrieval mAP " + std::to_string(report.mean_ap));
  }
}

ProbeData probe_data_from(const std::vector<FeatureRecord>& records,
                          const std::unordered_map<std::string, std::string>& corpus_labels) {
  ProbeData data;
  std::size_t unusable = 0;
  for (const auto& rec : records) {
    std::optional<std::string> label = rec.label;
    if (!label) {
      if (auto it = corpus_labels.find(rec.id); it != corpus_labels.end()) label = it->second;
    }
    if (!label || !rec.split) {
      ++unusable;
      continue;
    }
    LabeledVector row{rec.vec, *label};
    if (*rec.split == "train") {
      data.train.push_back(std::move(row));
    } else if (*rec.split == "val") {
      data.validation.push_back(std::move(row));
    } else {
      data.test.push_back(std::move(row));
    }
  }
  if (unusable > 0) log(std::to_string(unusable) + " feature records lack a label or split; ignored by the probe");
  return data;
}

std::unordered_map<std::string, std::string> corpus_labels(const std::vector<RawDocument>& docs) {
  std::unordered_map<std::string, std::string> labels;
  for (const auto& doc : docs) {
    if (!doc.class_label) continue;
    for (const auto& ref : doc.feature_refs) labels.emplace(ref, *doc.class_label);
  }
  return labels;
}

struct ProbeArgs {
  std::string features;
  std::string corpus;
  std::string net;
  std::string layer = "topic";
  std::string grid = join(defaults::kRegGrid);
  int epochs = defaults::kProbeEpochs;
  unsigned threads = 1;
  std::string out;
};

void probe_cmd(const Context& ctx, const ProbeArgs& a) {
  auto records = read_features(a.features);
  const auto labels = a.corpus.empty() ? std::unordered_map<std::string, std::string>{}
                                       : corpus_labels(read_corpus(a.corpus));
  if (!a.net.empty()) {
    const auto net = read_net(a.net);
    const auto layer = parse_layer(a.layer);
    for (auto& rec : records) rec.vec = probe_representation(net, rec.vec, layer);
  }
  const auto data = probe_data_from(records, labels);
  const auto classes = probe_classes(data);
  ProbeOptions options;
  options.epochs = a.epochs;
  options.threads = a.threads;
  const auto result = train_linear_probe(data, classes, parse_double_list(a.grid, "--grid"),
                                         ctx.stage_seed("probe"), options);
  for (const auto& w : result.warnings) log(w);
  auto out = io::open_output(a.out);
  write_probe_report(out, result);
  log("probe mAP " + std::to_string(result.mean_ap) + " over " + std::to_string(result.per_class_ap.size()) +
      " classes");
}

struct SweepArgs {
  CorpusOptions corpus;
  std::string vocab;
  std::string features;
  std::string topics = join(defaults::kSweepTopics);
  std::optional<double> alpha;
  double eta = defaults::kEta;
  int lda_iters = defaults::kLdaIters;
  std::string hidden = "256";
  OptimizerOptions opt;
  std::string grid = join(defaults::kRegGrid);
  int probe_epochs = defaults::kProbeEpochs;
  std::string layer = "topic";
  unsigned threads = 1;
  std::string out;
};

void sweep_cmd(const Context& ctx, const SweepArgs& a) {
  const auto vocab = Vocabulary::read_tsv(a.vocab);
  const auto corpus = load_corpus(a.corpus);
  const auto bows = to_bow(corpus, vocab);
  const auto records = read_features(a.features);
  const auto owners = feature_owners(corpus.docs);

  std::vector<FeaturePair> pairs;
  for (const auto& rec : records) {
    if (auto it = owners.find(rec.id); it != owners.end()) pairs.push_back({corpus.docs[it->second].doc_id, rec.vec});
  }
  if (pairs.empty()) throw Error("no feature vector is referenced by a corpus document");

  SweepConfig config;
  config.topic_counts = parse_size_list(a.topics, "--topics");
  config.lda.alpha = a.alpha;
  config.lda.eta = a.eta;
  config.lda.iters = a.lda_iters;
  config.hidden_dims = parse_size_list(a.hidden, "--hidden");
  config.embedder = a.opt.config(0);
  config.reg_grid = parse_double_list(a.grid, "--grid");
  config.probe.epochs = a.probe_epochs;
  config.layer = parse_layer(a.layer);
  config.seed = ctx.stage_seed("sweep");
  config.threads = a.threads;

  const auto data = probe_data_from(records, corpus_labels(corpus.docs));
  const auto result = topic_count_sweep(bows, vocab, pairs, data, config);
  auto out = io::open_output(a.out);
  write_sweep_report(out, result);
  for (const auto& p : result.points) {
    log("K=" + std::to_string(p.num_topics) + " validation mAP " + std::to_string(p.validation_map));
  }
  log("best K = " + std::to_string(result.best_k));
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Topic-space pipeline: topic models, image embedders, retrieval and probes", "ttn"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a key=value config file (flags take precedence)");

  Context ctx;
  app.add_option("--seed", ctx.seed, "Global seed; each stage derives its own seed from it");

  // build-dict
  CorpusOptions dict_corpus;
  int min_doc_count = defaults::kMinDocCount;
  double max_doc_fraction = defaults::kMaxDocFraction;
  std::string dict_out;
  auto* dict = app.add_subcommand("build-dict", "Build the filtered vocabulary from a corpus");
  add_corpus_options(dict, dict_corpus);
  dict->add_option("--min-doc-count", min_doc_count, "Drop words found in fewer documents");
  dict->add_option("--max-doc-fraction", max_doc_fraction, "Drop words found in a larger fraction of documents");
  dict->add_option("--out", dict_out, "Vocabulary TSV to write")->required();

  // train-lda
  TrainLdaArgs lda_args;
  auto* lda = app.add_subcommand("train-lda", "Train an LDA topic model by collapsed Gibbs sampling");
  add_corpus_options(lda, lda_args.corpus);
  lda->get_option("--corpus")->required(false);
  lda->add_option("--vocab", lda_args.vocab, "Vocabulary TSV")->check(CLI::ExistingFile);
  lda->add_option("--topics", lda_args.topics, "Number of topics K");
  lda->add_option("--alpha", lda_args.alpha, "Document-topic concentration (default 50/K)");
  lda->add_option("--eta", lda_args.eta, "Topic-word concentration");
  lda->add_option("--iters", lda_args.iters, "Gibbs sweeps");
  lda->add_option("--resume", lda_args.resume, "Continue sampling from a model with retained state")
      ->check(CLI::ExistingFile);
  lda->add_flag("--no-state", lda_args.no_state, "Do not store sampler state in the model file");
  lda->add_option("--out", lda_args.out, "Model file to write")->required();

  // top-words
  std::string tw_model, tw_vocab, tw_out;
  std::optional<std::size_t> tw_topic;
  std::size_t tw_n = defaults::kTopWords;
  auto* tw = app.add_subcommand("top-words", "Write the most probable words of each topic");
  tw->add_option("--model", tw_model, "Model file")->required()->check(CLI::ExistingFile);
  tw->add_option("--vocab", tw_vocab, "Vocabulary TSV")->required()->check(CLI::ExistingFile);
  tw->add_option("--topic", tw_topic, "Only this topic (default: all)");
  tw->add_option("-n,--n", tw_n, "Words per topic");
  tw->add_option("--out", tw_out, "TSV to write")->required();

  // infer
  std::string inf_model, inf_vocab, inf_out;
  CorpusOptions inf_corpus;
  int inf_iters = defaults::kInferIters;
  auto* inf = app.add_subcommand("infer", "Infer topic distributions of documents");
  inf->add_option("--model", inf_model, "Model file")->required()->check(CLI::ExistingFile);
  inf->add_option("--vocab", inf_vocab, "Vocabulary TSV")->required()->check(CLI::ExistingFile);
  add_corpus_options(inf, inf_corpus);
  inf->add_option("--iters", inf_iters, "Fold-in Gibbs sweeps");
  inf->add_option("--out", inf_out, "Index-format JSON Lines to write")->required();

  // perplexity
  std::string px_model, px_vocab, px_out;
  CorpusOptions px_corpus;
  int px_iters = defaults::kInferIters;
  auto* px = app.add_subcommand("perplexity", "Per-token perplexity of a corpus under a model");
  px->add_option("--model", px_model, "Model file")->required()->check(CLI::ExistingFile);
  px->add_option("--vocab", px_vocab, "Vocabulary TSV")->required()->check(CLI::ExistingFile);
  add_corpus_options(px, px_corpus);
  px->add_option("--iters", px_iters, "Fold-in Gibbs sweeps per document");
  px->add_option("--out", px_out, "JSON report to write")->required();

  // train-embedder
  TrainEmbedderArgs emb_args;
  auto* emb = app.add_subcommand("train-embedder", "Train the image-to-topic embedder");
  emb->add_option("--features", emb_args.features, "Feature JSON Lines")->required()->check(CLI::ExistingFile);
  add_corpus_options(emb, emb_args.corpus);
  emb->add_option("--targets", emb_args.targets, "Text topic distributions (output of infer)")
      ->check(CLI::ExistingFile);
  emb->add_option("--target-mode", emb_args.target_mode, "lda or mean-embedding");
  emb->add_option("--vectors", emb_args.vectors, "Word-vector text file for mean-embedding targets")
      ->check(CLI::ExistingFile);
  emb->add_option("--layers", emb_args.layers, "Comma-separated layer sizes, input first (default D,256,K)");
  add_optimizer_options(emb, emb_args.opt);
  emb->add_option("--trace-out", emb_args.trace_out, "CSV loss trace to write");
  emb->add_option("--out", emb_args.out, "Net file to write")->required();

  // project
  std::string proj_net, proj_features, proj_corpus, proj_out;
  auto* proj = app.add_subcommand("project", "Project image features onto the topic simplex");
  proj->add_option("--net", proj_net, "Net file")->required()->check(CLI::ExistingFile);
  proj->add_option("--features", proj_features, "Feature JSON Lines")->required()->check(CLI::ExistingFile);
  proj->add_option("--corpus", proj_corpus, "Corpus for image labels")->check(CLI::ExistingFile);
  proj->add_option("--out", proj_out, "Index-format JSON Lines to write")->required();

  // index
  std::vector<std::string> idx_inputs;
  double idx_epsilon = defaults::kEpsilon;
  std::string idx_out;
  auto* idx = app.add_subcommand("index", "Merge and validate topic distributions into an index file");
  idx->add_option("--inputs", idx_inputs, "Index-format JSON Lines files")->required()->check(CLI::ExistingFile);
  idx->add_option("--epsilon", idx_epsilon, "Smoothing applied at build and query time");
  idx->add_option("--out", idx_out, "Index file to write")->required();

  // retrieve
  RetrieveArgs ret_args;
  auto* ret = app.add_subcommand("retrieve", "Rank index entries by KL divergence from queries");
  ret->add_option("--index", ret_args.index, "Index file")->required()->check(CLI::ExistingFile);
  ret->add_option("--query-id", ret_args.query_id, "Use this index entry as the query");
  ret->add_option("--queries", ret_args.queries, "Index-format file of queries")->check(CLI::ExistingFile);
  ret->add_option("--target-modality", ret_args.target, "same, cross, text or image");
  ret->add_option("--top-n", ret_args.top_n, "Results per query");
  ret->add_option("--epsilon", ret_args.epsilon, "Smoothing applied to entries and queries");
  ret->add_option("--direction", ret_args.direction, "Divergence direction (query-to-entry)");
  ret->add_option("--map-out", ret_args.map_out, "Also write mAP over labeled queries to this JSON file");
  ret->add_option("--out", ret_args.out, "JSON Lines results to write")->required();

  // probe
  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "One-vs-rest linear probe with grid search");
  probe->add_option("--features", probe_args.features, "Feature JSON Lines with label and split fields")
      ->required()
      ->check(CLI::ExistingFile);
  probe->add_option("--corpus", probe_args.corpus, "Corpus supplying labels for unlabeled features")
      ->check(CLI::ExistingFile);
  probe->add_option("--net", probe_args.net, "Embed features with this net first")->check(CLI::ExistingFile);
  probe->add_option("--layer", probe_args.layer, "topic, or a layer index of the net");
  probe->add_option("--grid", probe_args.grid, "Regularization weights");
  probe->add_option("--epochs", probe_args.epochs, "Subgradient epochs per classifier");
  probe->add_option("--threads", probe_args.threads, "Classes trained concurrently");
  probe->add_option("--out", probe_args.out, "JSON report to write")->required();

  // sweep
  SweepArgs sw_args;
  auto* sw = app.add_subcommand("sweep", "Select the topic count by validation probe mAP");
  add_corpus_options(sw, sw_args.corpus);
  sw->add_option("--vocab", sw_args.vocab, "Vocabulary TSV")->required()->check(CLI::ExistingFile);
  sw->add_option("--features", sw_args.features, "Feature JSON Lines with label and split fields")
      ->required()
      ->check(CLI::ExistingFile);
  sw->add_option("--topics", sw_args.topics, "Topic counts to evaluate");
  sw->add_option("--alpha", sw_args.alpha, "Document-topic concentration (default 50/K)");
  sw->add_option("--eta", sw_args.eta, "Topic-word concentration");
  sw->add_option("--lda-iters", sw_args.lda_iters, "Gibbs sweeps per topic model");
  sw->add_option("--hidden", sw_args.hidden, "Hidden layer sizes of the embedder");
  add_optimizer_options(sw, sw_args.opt);
  sw->add_option("--grid", sw_args.grid, "Probe regularization weights");
  sw->add_option("--probe-epochs", sw_args.probe_epochs, "Subgradient epochs per probe classifier");
  sw->add_option("--layer", sw_args.layer, "topic, or a layer index of the embedder");
  sw->add_option("--sweep-threads", sw_args.threads, "Topic counts evaluated concurrently");
  sw->add_option("--out", sw_args.out, "CSV report to write")->required();

  app.failure_message(CLI::FailureMessage::help);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.starts_with("-")) {
          if (arg == "--seed" || arg == "--config") ++i;
          continue;
        }
        if (!app.get_subcommand_no_throw(arg)) std::cerr << "ttn: error: unknown subcommand '" << arg << "'\n";
        break;
      }
    }
    return app.exit(e);
  }

  try {
    if (*dict) {
      build_dict(dict_corpus, min_doc_count, max_doc_fraction, dict_out);
    } else if (*lda) {
      if (lda_args.resume.empty() && (lda_args.corpus.path.empty() || lda_args.vocab.empty())) {
        throw Error("train-lda needs --corpus and --vocab (or --resume)");
      }
      train_lda_cmd(ctx, lda_args);
    } else if (*tw) {
      top_words_cmd(tw_model, tw_vocab, tw_topic, tw_n, tw_out);
    } else if (*inf) {
      infer_cmd(ctx, inf_model, inf_vocab, inf_corpus, inf_iters, inf_out);
    } else if (*px) {
      perplexity_cmd(ctx, px_model, px_vocab, px_corpus, px_iters, px_out);
    } else if (*emb) {
      train_embedder_cmd(ctx, emb_args);
    } else if (*proj) {
      project_cmd(proj_net, proj_features, proj_corpus, proj_out);
    } else if (*idx) {
      index_cmd(idx_inputs, idx_epsilon, idx_out);
    } else if (*ret) {
      retrieve_cmd(ret_args);
    } else if (*probe) {
      probe_cmd(ctx, probe_args);
    } else if (*sw) {
      sweep_cmd(ctx, sw_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "ttn: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ttn::cli
