#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/defaults.hpp"

namespace ttn {

/// A point on the probability simplex: nonnegative, sums to 1 within 1e-9.
class TopicDistribution {
 public:
  TopicDistribution() = default;
  /// Validates the simplex invariant; throws std::invalid_argument otherwise.
  explicit TopicDistribution(std::vector<double> probs);

  /// Divides by the sum. Values must be finite and nonnegative with a
  /// positive total.
  static TopicDistribution normalized(std::vector<double> weights);
  static TopicDistribution uniform(std::size_t k);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& values() const { return probs_; }

  bool operator==(const TopicDistribution&) const = default;

 private:
  std::vector<double> probs_;
};

/// Collapsed Gibbs sampler state: token assignments and the count tables
/// derived from them.
struct GibbsState {
  std::vector<std::string> doc_ids;
  std::vector<std::vector<std::uint32_t>> tokens;  // word index per token
  std::vector<std::vector<std::uint32_t>> topics;  // topic per token
  std::vector<std::vector<std::uint32_t>> doc_topic;  // docs x K
  std::vector<std::uint32_t> topic_word;              // K x N, row-major
  std::vector<std::uint64_t> topic_total;             // K

  /// Recomputes doc_topic, topic_word and topic_total from tokens/topics.
  void rebuild_counts(std::size_t num_topics, std::size_t vocab_size);
};

struct TopicModel {
  std::size_t num_topics = 0;
  double alpha = 0.0;
  double eta = 0.0;
  std::size_t vocab_size = 0;
  std::string vocab_fingerprint;
  std::vector<double> phi;  // num_topics x vocab_size, row-major
  std::optional<GibbsState> train_state;

  double phi_at(std::size_t topic, std::size_t word) const { return phi[topic * vocab_size + word]; }
  std::span<const double> topic_row(std::size_t topic) const {
    return std::span<const double>(phi).subspan(topic * vocab_size, vocab_size);
  }

  /// Smoothed topic proportions of the d-th training document from the
  /// retained count tables: (n_dk + alpha) / (n_d + K alpha).
  TopicDistribution training_theta(std::size_t doc) const;

  /// Throws std::invalid_argument when shapes or the row-stochastic
  /// invariant are violated.
  void check_invariants() const;
};

struct LdaOptions {
  std::size_t num_topics = defaults::kNumTopics;
  // Unset means 50 / num_topics.
  std::optional<double> alpha;
  double eta = defaults::kEta;
  int iters = defaults::kLdaIters;
  std::uint64_t seed = defaults::kSeed;
  // Called after every full sweep with the 1-based sweep number.
  std::function<void(int, const GibbsState&)> on_sweep;

  double resolved_alpha() const { return alpha.value_or(defaults::alpha_for(static_cast<int>(num_topics))); }
};

/// Collapsed Gibbs sampling, one chain, `iters` sweeps; phi is the smoothed
/// topic-word table of the final state. Every document needs at least one
/// in-vocabulary token.
TopicModel train_lda(std::span<const BowDocument> docs, const Vocabulary& vocab, const LdaOptions& options);

/// Continues sampling from the retained train_state for `iters` more sweeps.
TopicModel resume_lda(const TopicModel& model, int iters, std::uint64_t seed,
                      const std::function<void(int, const GibbsState&)>& on_sweep = {});

struct Inference {
  TopicDistribution theta;
  bool prior_only = false;     // no usable tokens; theta is the prior mean
  std::size_t dropped_tokens = 0;  // word indices outside the model vocabulary
};

/// Fold-in Gibbs sampling with phi held fixed.
Inference infer_topics(const TopicModel& model, const BowDocument& doc, int iters = defaults::kInferIters,
                       std::uint64_t seed = defaults::kSeed);

struct PerplexityReport {
  double perplexity = 0.0;
  std::size_t total_tokens = 0;
  std::vector<std::string> skipped_docs;
};

/// exp(-sum count * log p(w|d) / tokens), p(w|d) = sum_k theta_dk phi_kw
/// with theta_d from infer_topics. Empty documents are skipped.
PerplexityReport perplexity(const TopicModel& model, std::span<const BowDocument> docs,
                            int infer_iters = defaults::kInferIters, std::uint64_t seed = defaults::kSeed);

/// Highest-probability words of one topic; ties broken lexicographically.
std::vector<std::pair<std::string, double>> top_words(const TopicModel& model, const Vocabulary& vocab,
                                                      std::size_t topic, std::size_t n = defaults::kTopWords);

// JSON model container, format tag "ttn-lda", version 1.
void write_model(std::ostream& out, const TopicModel& model, bool include_state = true);
void write_model(const std::string& path, const TopicModel& model, bool include_state = true);
TopicModel read_model(std::istream& in, const std::string& name);
TopicModel read_model(const std::string& path);

}  // namespace ttn
