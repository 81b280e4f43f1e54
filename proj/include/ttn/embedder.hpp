#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttn/defaults.hpp"
#include "ttn/topicmodel.hpp"

namespace ttn {

/// Fully-connected layer, weights row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward net: rectifier on hidden layers, identity on the output.
class EmbedderNet {
 public:
  EmbedderNet() = default;

  /// All parameters zero.
  static EmbedderNet zeros(std::vector<std::size_t> layer_dims);
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  static EmbedderNet glorot(std::vector<std::size_t> layer_dims, std::uint64_t seed);
  /// Checks shape consistency.
  static EmbedderNet from_layers(std::vector<DenseLayer> layers);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

  /// Output logits.
  std::vector<double> forward(std::span<const double> features) const;

  /// Activations after layer `layer` (1-based; layer_dims().size() - 1 gives
  /// the logits, 0 the input itself).
  std::vector<double> activations(std::span<const double> features, std::size_t layer) const;

  std::size_t parameter_count() const;
  /// Flattened as layer by layer, weights then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  bool operator==(const EmbedderNet&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

/// Mean over dimensions of the sigmoid cross-entropy, computed as
/// max(x, 0) - x t + log(1 + exp(-|x|)).
double sigmoid_ce_loss(std::span<const double> logits, std::span<const double> targets);

/// d loss / d logits = (sigmoid(x) - t) / K.
std::vector<double> sigmoid_ce_gradient(std::span<const double> logits, std::span<const double> targets);

double sigmoid(double x);

struct TrainingPair {
  std::vector<double> features;
  std::vector<double> target;  // entries in [0, 1]
};

/// Mean loss over the batch and its gradient, flattened like parameters().
double batch_loss_and_gradient(const EmbedderNet& net, std::span<const TrainingPair> batch,
                               std::span<const std::size_t> indices, std::vector<double>& gradient);

struct TrainConfig {
  double base_lr = defaults::kBaseLr;
  double lr_decay_factor = defaults::kLrDecayFactor;
  long lr_decay_every = defaults::kLrDecayEvery;
  double momentum = defaults::kMomentum;
  std::size_t batch_size = defaults::kBatchSize;
  long max_iters = defaults::kEmbedderIters;
  std::uint64_t seed = defaults::kSeed;
  // Record the mean batch loss every this many iterations.
  long log_every = 100;

  /// Throws std::invalid_argument on an invalid configuration.
  void validate() const;
  double learning_rate(long iteration) const;
};

struct LossTrace {
  std::vector<long> iterations;        // logged iteration (1-based)
  std::vector<double> interval_loss;   // mean batch loss since the previous log point
  std::vector<double> epoch_loss;      // sample-weighted mean loss of each completed epoch
};

struct TrainResult {
  EmbedderNet net;
  LossTrace trace;
};

/// Classic momentum SGD (v = mu v - lr g; w += v) with step decay; batches
/// from a seeded reshuffle each epoch, partial last batch used as-is.
/// Throws DivergenceError on a non-finite loss.
TrainResult train_embedder(EmbedderNet net, std::span<const TrainingPair> pairs, const TrainConfig& cfg);

/// sigmoid(logits) renormalized onto the simplex.
TopicDistribution project_logits(std::span<const double> logits);
TopicDistribution project_image(const EmbedderNet& net, std::span<const double> features);

/// Word-vector table in the plain text format `word v1 ... vD`. An optional
/// leading `count dim` header line is accepted.
class WordVectors {
 public:
  static WordVectors read(std::istream& in, const std::string& name);
  static WordVectors read(const std::string& path);

  void add(std::string word, std::vector<double> vec);
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }
  const std::vector<double>* find(const std::string& word) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

struct MeanEmbedding {
  std::vector<double> vec;
  std::size_t matched = 0;
  bool empty() const { return matched == 0; }  // zero vector returned
};

MeanEmbedding mean_embedding_target(std::span<const std::string> tokens, const WordVectors& vectors);

/// Affine per-dimension map of targets onto [0, 1] using the min/max over
/// the set; constant dimensions map to 0.5.
void rescale_to_unit_interval(std::vector<std::vector<double>>& targets);

// Net container: JSON, format tag "ttn-embedder", version 1.
void write_net(std::ostream& out, const EmbedderNet& net);
void write_net(const std::string& path, const EmbedderNet& net);
EmbedderNet read_net(std::istream& in, const std::string& name);
EmbedderNet read_net(const std::string& path);

struct FeatureRecord {
  std::string id;
  std::vector<double> vec;
  std::optional<std::string> label;
  std::optional<std::string> split;  // "train", "val" or "test"
};

/// Feature JSON Lines {"id", "vec"} with optional "label" and "split".
/// All vectors must share one dimension; ids must be unique.
std::vector<FeatureRecord> read_features(std::istream& in, const std::string& name);
std::vector<FeatureRecord> read_features(const std::string& path);
void write_features(std::ostream& out, std::span<const FeatureRecord> records);

}  // namespace ttn
