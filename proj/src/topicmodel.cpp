#include "ttn/topicmodel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "ttn/error.hpp"
#include "ttn/jsonl.hpp"
#include "ttn/rng.hpp"

namespace ttn {

namespace {

constexpr double kSimplexTolerance = 1e-9;

void sweep(GibbsState& state, std::size_t num_topics, std::size_t vocab_size, double alpha, double eta,
           Rng& rng, std::vector<double>& weights) {
  const double eta_total = eta * static_cast<double>(vocab_size);
  for (std::size_t d = 0; d < state.tokens.size(); ++d) {
    auto& doc_topic = state.doc_topic[d];
    const auto& words = state.tokens[d];
    auto& topics = state.topics[d];
    for (std::size_t i = 0; i < words.size(); ++i) {
      const std::size_t w = words[i];
      std::size_t z = topics[i];
      --doc_topic[z];
      --state.topic_word[z * vocab_size + w];
      --state.topic_total[z];
      for (std::size_t k = 0; k < num_topics; ++k) {
        weights[k] = (doc_topic[k] + alpha) * (state.topic_word[k * vocab_size + w] + eta) /
                     (static_cast<double>(state.topic_total[k]) + eta_total);
      }
      z = rng.categorical(weights);
      topics[i] = static_cast<std::uint32_t>(z);
      ++doc_topic[z];
      ++state.topic_word[z * vocab_size + w];
      ++state.topic_total[z];
    }
  }
}

std::vector<double> phi_from_counts(const GibbsState& state, std::size_t num_topics, std::size_t vocab_size,
                                    double eta) {
  std::vector<double> phi(num_topics * vocab_size);
  const double eta_total = eta * static_cast<double>(vocab_size);
  for (std::size_t k = 0; k < num_topics; ++k) {
    const double denom = static_cast<double>(state.topic_total[k]) + eta_total;
    for (std::size_t w = 0; w < vocab_size; ++w) {
      phi[k * vocab_size + w] = (state.topic_word[k * vocab_size + w] + eta) / denom;
    }
  }
  return phi;
}

void run_chain(TopicModel& model, int iters, std::uint64_t seed,
               const std::function<void(int, const GibbsState&)>& on_sweep) {
  GibbsState& state = *model.train_state;
  Rng rng(seed);
  std::vector<double> weights(model.num_topics);
  for (int it = 1; it <= iters; ++it) {
    sweep(state, model.num_topics, model.vocab_size, model.alpha, model.eta, rng, weights);
    if (on_sweep) on_sweep(it, state);
  }
  model.phi = phi_from_counts(state, model.num_topics, model.vocab_size, model.eta);
}

std::vector<std::uint32_t> expand_tokens(const BowDocument& doc, std::size_t vocab_size, std::size_t* dropped) {
  std::vector<std::uint32_t> tokens;
  tokens.reserve(doc.total_tokens());
  for (const auto& wc : doc.counts) {
    if (wc.word >= vocab_size) {
      if (dropped) *dropped += wc.count;
      continue;
    }
    tokens.insert(tokens.end(), wc.count, wc.word);
  }
  return tokens;
}

}  // namespace

TopicDistribution::TopicDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("topic distribution must be non-empty");
  double total = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("topic distribution has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw std::invalid_argument("topic distribution sums to " + std::to_string(total) + ", not 1");
  }
}

TopicDistribution TopicDistribution::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("weights must have a positive sum");
  for (double& w : weights) w /= total;
  return TopicDistribution(std::move(weights));
}

TopicDistribution TopicDistribution::uniform(std::size_t k) {
  if (k == 0) throw std::invalid_argument("topic count must be positive");
  return TopicDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

void GibbsState::rebuild_counts(std::size_t num_topics, std::size_t vocab_size) {
  doc_topic.assign(tokens.size(), std::vector<std::uint32_t>(num_topics, 0));
  topic_word.assign(num_topics * vocab_size, 0);
  topic_total.assign(num_topics, 0);
  for (std::size_t d = 0; d < tokens.size(); ++d) {
    if (topics[d].size() != tokens[d].size()) throw std::invalid_argument("token/topic length mismatch");
    for (std::size_t i = 0; i < tokens[d].size(); ++i) {
      const std::size_t w = tokens[d][i];
      const std::size_t z = topics[d][i];
      if (w >= vocab_size || z >= num_topics) throw std::invalid_argument("assignment out of range");
      ++doc_topic[d][z];
      ++topic_word[z * vocab_size + w];
      ++topic_total[z];
    }
  }
}

TopicDistribution TopicModel::training_theta(std::size_t doc) const {
  if (!train_state) throw Error("model has no retained training state");
  const auto& counts = train_state->doc_topic.at(doc);
  std::vector<double> theta(num_topics);
  const double denom = static_cast<double>(train_state->tokens[doc].size()) + alpha * static_cast<double>(num_topics);
  for (std::size_t k = 0; k < num_topics; ++k) theta[k] = (counts[k] + alpha) / denom;
  return TopicDistribution::normalized(std::move(theta));
}

void TopicModel::check_invariants() const {
  if (num_topics < 1) throw std::invalid_argument("topic count must be >= 1");
  if (!(alpha > 0.0) || !(eta > 0.0)) throw std::invalid_argument("alpha and eta must be positive");
  if (phi.size() != num_topics * vocab_size) throw std::invalid_argument("phi shape does not match K x N");
  for (std::size_t k = 0; k < num_topics; ++k) {
    double total = 0.0;
    for (double p : topic_row(k)) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("phi has a negative or non-finite entry");
      total += p;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance) {
      throw std::invalid_argument("phi row " + std::to_string(k) + " sums to " + std::to_string(total));
    }
  }
}

TopicModel train_lda(std::span<const BowDocument> docs, const Vocabulary& vocab, const LdaOptions& options) {
  if (docs.empty()) throw Error("cannot train a topic model on an empty corpus");
  if (options.num_topics < 1) throw std::invalid_argument("topic count must be >= 1");
  if (options.iters < 0) throw std::invalid_argument("iteration count must be >= 0");
  const double alpha = options.resolved_alpha();
  if (!(alpha > 0.0) || !(options.eta > 0.0)) throw std::invalid_argument("alpha and eta must be positive");
  if (vocab.empty()) throw std::invalid_argument("vocabulary is empty");

  TopicModel model;
  model.num_topics = options.num_topics;
  model.alpha = alpha;
  model.eta = options.eta;
  model.vocab_size = vocab.size();
  model.vocab_fingerprint = vocab.fingerprint();

  GibbsState state;
  state.doc_ids.reserve(docs.size());
  state.tokens.reserve(docs.size());
  for (const auto& doc : docs) {
    auto tokens = expand_tokens(doc, vocab.size(), nullptr);
    if (tokens.empty()) throw EmptyDocumentError(doc.doc_id);
    state.doc_ids.push_back(doc.doc_id);
    state.tokens.push_back(std::move(tokens));
  }

  Rng init_rng(derive_seed(options.seed, "lda-init"));
  state.topics.resize(state.tokens.size());
  for (std::size_t d = 0; d < state.tokens.size(); ++d) {
    state.topics[d].resize(state.tokens[d].size());
    for (auto& z : state.topics[d]) z = static_cast<std::uint32_t>(init_rng.below(model.num_topics));
  }
  state.rebuild_counts(model.num_topics, model.vocab_size);
  model.train_state = std::move(state);

  run_chain(model, options.iters, derive_seed(options.seed, "lda-sweeps"), options.on_sweep);
  return model;
}

TopicModel resume_lda(const TopicModel& model, int iters, std::uint64_t seed,
                      const std::function<void(int, const GibbsState&)>& on_sweep) {
  if (!model.train_state) throw Error("model has no retained training state to resume from");
  if (iters < 0) throw std::invalid_argument("iteration count must be >= 0");
  TopicModel resumed = model;
  run_chain(resumed, iters, derive_seed(seed, "lda-sweeps"), on_sweep);
  return resumed;
}

Inference infer_topics(const TopicModel& model, const BowDocument& doc, int iters, std::uint64_t seed) {
  if (model.num_topics == 0 || model.phi.size() != model.num_topics * model.vocab_size) {
    throw std::invalid_argument("model is not trained");
  }
  const std::size_t K = model.num_topics;
  Inference result;
  const auto tokens = expand_tokens(doc, model.vocab_size, &result.dropped_tokens);
  if (tokens.empty()) {
    result.theta = TopicDistribution::uniform(K);
    result.prior_only = true;
    return result;
  }

  Rng rng(seed);
  std::vector<std::uint32_t> topics(tokens.size());
  std::vector<std::uint32_t> counts(K, 0);
  for (auto& z : topics) {
    z = static_cast<std::uint32_t>(rng.below(K));
    ++counts[z];
  }
  std::vector<double> weights(K);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      --counts[topics[i]];
      for (std::size_t k = 0; k < K; ++k) weights[k] = model.phi_at(k, tokens[i]) * (counts[k] + model.alpha);
      const auto z = static_cast<std::uint32_t>(rng.categorical(weights));
      topics[i] = z;
      ++counts[z];
    }
  }
  std::vector<double> theta(K);
  const double denom = static_cast<double>(tokens.size()) + model.alpha * static_cast<double>(K);
  for (std::size_t k = 0; k < K; ++k) theta[k] = (counts[k] + model.alpha) / denom;
  result.theta = TopicDistribution::normalized(std::move(theta));
  return result;
}

PerplexityReport perplexity(const TopicModel& model, std::span<const BowDocument> docs, int infer_iters,
                            std::uint64_t seed) {
  if (docs.empty()) throw Error("perplexity needs at least one document");
  PerplexityReport report;
  double log_likelihood = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto inference = infer_topics(model, docs[d], infer_iters, derive_seed(seed, d));
    if (inference.prior_only) {
      report.skipped_docs.push_back(docs[d].doc_id);
      continue;
    }
    for (const auto& wc : docs[d].counts) {
      if (wc.word >= model.vocab_size) continue;
      double p = 0.0;
      for (std::size_t k = 0; k < model.num_topics; ++k) p += inference.theta[k] * model.phi_at(k, wc.word);
      log_likelihood += wc.count * std::log(p);
      report.total_tokens += wc.count;
    }
  }
  if (report.total_tokens == 0) throw Error("no document has in-vocabulary tokens");
  report.perplexity = std::exp(-log_likelihood / static_cast<double>(report.total_tokens));
  return report;
}

std::vector<std::pair<std::string, double>> top_words(const TopicModel& model, const Vocabulary& vocab,
                                                      std::size_t topic, std::size_t n) {
  if (topic >= model.num_topics) {
    throw std::out_of_range("topic " + std::to_string(topic) + " out of range [0, " +
                            std::to_string(model.num_topics) + ")");
  }
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (vocab.size() != model.vocab_size) throw DimensionError("vocabulary size does not match the model");
  std::vector<std::size_t> order(model.vocab_size);
  std::iota(order.begin(), order.end(), 0);
  const auto row = model.topic_row(topic);
  const std::size_t count = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (row[a] != row[b]) return row[a] > row[b];
                      return vocab.word(a) < vocab.word(b);
                    });
  std::vector<std::pair<std::string, double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(vocab.word(order[i]), row[order[i]]);
  return out;
}

void write_model(std::ostream& out, const TopicModel& model, bool include_state) {
  io::Json obj;
  obj["format"] = "ttn-lda";
  obj["version"] = 1;
  obj["num_topics"] = model.num_topics;
  obj["alpha"] = model.alpha;
  obj["eta"] = model.eta;
  obj["vocab_size"] = model.vocab_size;
  obj["vocab_fingerprint"] = model.vocab_fingerprint;
  obj["phi"] = model.phi;
  if (include_state && model.train_state) {
    obj["state"] = {{"doc_ids", model.train_state->doc_ids},
                    {"tokens", model.train_state->tokens},
                    {"topics", model.train_state->topics}};
  }
  out << obj.dump() << '\n';
}

void write_model(const std::string& path, const TopicModel& model, bool include_state) {
  auto out = io::open_output(path);
  write_model(out, model, include_state);
}

TopicModel read_model(std::istream& in, const std::string& name) {
  io::Json obj;
  try {
    obj = io::Json::parse(in);
  } catch (const io::Json::parse_error& e) {
    throw FormatError(name, 1, std::string("invalid JSON: ") + e.what());
  }
  try {
    if (io::require_string(obj, "format") != "ttn-lda") throw std::invalid_argument("not a ttn-lda model");
    if (io::require(obj, "version").get<int>() != 1) throw std::invalid_argument("unsupported model version");
    TopicModel model;
    model.num_topics = io::require(obj, "num_topics").get<std::size_t>();
    model.alpha = io::require(obj, "alpha").get<double>();
    model.eta = io::require(obj, "eta").get<double>();
    model.vocab_size = io::require(obj, "vocab_size").get<std::size_t>();
    model.vocab_fingerprint = io::require_string(obj, "vocab_fingerprint");
    model.phi = io::require(obj, "phi").get<std::vector<double>>();
    if (auto it = obj.find("state"); it != obj.end()) {
      GibbsState state;
      state.doc_ids = io::require(*it, "doc_ids").get<std::vector<std::string>>();
      state.tokens = io::require(*it, "tokens").get<std::vector<std::vector<std::uint32_t>>>();
      state.topics = io::require(*it, "topics").get<std::vector<std::vector<std::uint32_t>>>();
      if (state.doc_ids.size() != state.tokens.size() || state.tokens.size() != state.topics.size()) {
        throw std::invalid_argument("state arrays have inconsistent lengths");
      }
      state.rebuild_counts(model.num_topics, model.vocab_size);
      model.train_state = std::move(state);
    }
    model.check_invariants();
    return model;
  } catch (const io::Json::exception& e) {
    throw FormatError(name, 1, e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(name, 1, e.what());
  }
}

TopicModel read_model(const std::string& path) {
  auto in = io::open_input(path);
  return read_model(in, path);
}

}  // namespace ttn
