#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/defaults.hpp"
#include "ttn/embedder.hpp"
#include "ttn/error.hpp"
#include "ttn/topicmodel.hpp"

namespace ttn {

/// Non-interpolated AP: items sorted by score descending (ties keep input
/// order), then the mean of precision@rank over the relevant ranks.
/// Requires equal lengths and at least one relevant item.
double average_precision(std::span<const double> scores, const std::vector<bool>& relevance);

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;

  double decision(std::span<const double> x) const;
};

/// Binary hinge-loss + L2 classifier trained by stochastic subgradient
/// descent with step 1/(lambda t) (Pegasos). Labels are +1 / -1. The bias is
/// an extra constant feature. Returns the average of the second-half iterates.
LinearModel train_hinge_l2(std::span<const std::vector<double>> x, std::span<const int> y, double lambda,
                           int epochs, std::uint64_t seed);

struct LabeledVector {
  std::vector<double> x;
  std::string label;
};

struct ProbeData {
  std::vector<LabeledVector> train;
  std::vector<LabeledVector> validation;
  std::vector<LabeledVector> test;
};

struct ProbeOptions {
  int epochs = defaults::kProbeEpochs;
  // z-score features with statistics of the split the classifier is fit on.
  bool standardize = true;
  unsigned threads = 1;
};

struct ProbeResult {
  std::map<std::string, double> per_class_ap;       // test AP
  double mean_ap = 0.0;
  std::map<std::string, double> best_hyperparams;   // chosen regularization weight
  std::map<std::string, double> validation_ap;      // AP at the chosen value
  double validation_map = 0.0;
  std::vector<std::string> warnings;                // skipped classes
};

/// Per class and grid value, fit on train and score AP on validation; keep
/// the best value (ties: earliest in the grid). Test fields are left empty.
ProbeResult select_probe_hyperparams(const ProbeData& data, std::span<const std::string> classes,
                                     std::span<const double> reg_grid, std::uint64_t seed,
                                     const ProbeOptions& options = {});

/// select_probe_hyperparams, then refit on train + validation with the
/// chosen value and report test AP per class.
ProbeResult train_linear_probe(const ProbeData& data, std::span<const std::string> classes,
                               std::span<const double> reg_grid, std::uint64_t seed,
                               const ProbeOptions& options = {});

/// Sorted distinct labels of the training split.
std::vector<std::string> probe_classes(const ProbeData& data);

class SweepError : public Error {
 public:
  SweepError(std::size_t num_topics, const std::string& what)
      : Error("sweep point K=" + std::to_string(num_topics) + ": " + what), num_topics_(num_topics) {}
  std::size_t num_topics() const noexcept { return num_topics_; }

 private:
  std::size_t num_topics_;
};

/// Image features paired with the document they illustrate.
struct FeaturePair {
  std::string doc_id;
  std::vector<double> features;
};

struct SweepConfig {
  std::vector<std::size_t> topic_counts{defaults::kSweepTopics.begin(), defaults::kSweepTopics.end()};
  // num_topics is set per point; an unset alpha resolves to 50 / K.
  LdaOptions lda;
  std::vector<std::size_t> hidden_dims;
  TrainConfig embedder;
  std::vector<double> reg_grid{defaults::kRegGrid.begin(), defaults::kRegGrid.end()};
  ProbeOptions probe;
  // Representation fed to the probe: nullopt = projected topic
  // distribution, otherwise EmbedderNet::activations layer index.
  std::optional<std::size_t> layer;
  std::uint64_t seed = defaults::kSeed;
  unsigned threads = 1;  // sweep points evaluated concurrently
};

struct SweepPoint {
  std::size_t num_topics = 0;
  double validation_map = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // in ascending K
  std::size_t best_k = 0;          // argmax of validation_map, ties to smaller K
};

/// For each K: train_lda -> per-document topic targets -> train_embedder ->
/// probe representation of the probe features -> validation mAP.
SweepResult topic_count_sweep(std::span<const BowDocument> corpus, const Vocabulary& vocab,
                              std::span<const FeaturePair> pairs, const ProbeData& probe_data,
                              const SweepConfig& config);

/// Features as the probe sees them for a given net and layer choice.
std::vector<double> probe_representation(const EmbedderNet& net, std::span<const double> features,
                                         const std::optional<std::size_t>& layer);

/// {"per_class": {...}, "mean_ap": x, "grid": {...}}
void write_probe_report(std::ostream& out, const ProbeResult& result);
/// `K,validation_map` rows followed by a `#best_K=<k>` line.
void write_sweep_report(std::ostream& out, const SweepResult& result);

}  // namespace ttn
