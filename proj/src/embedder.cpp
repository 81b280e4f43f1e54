#include "ttn/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ttn/error.hpp"
#include "ttn/jsonl.hpp"
#include "ttn/rng.hpp"

namespace ttn {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw DimensionError("a net needs at least an input and an output dimension");
  for (auto d : dims) {
    if (d == 0) throw DimensionError("layer dimensions must be positive");
  }
}

double softplus_neg_abs(double x) { return std::log1p(std::exp(-std::abs(x))); }

// log sigmoid(x) = -log(1 + exp(-x)), stable for any x.
double log_sigmoid(double x) { return std::min(x, 0.0) - softplus_neg_abs(x); }

void check_loss_inputs(std::span<const double> logits, std::span<const double> targets) {
  if (logits.size() != targets.size()) {
    throw DimensionError("logits have length " + std::to_string(logits.size()) + " but targets have " +
                         std::to_string(targets.size()));
  }
  if (logits.empty()) throw DimensionError("loss needs at least one dimension");
  for (double t : targets) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("targets must lie in [0, 1]");
  }
}

struct ForwardCache {
  std::vector<std::vector<double>> pre;   // pre-activation per layer
  std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = activation of layer l
};

void forward_cached(const EmbedderNet& net, std::span<const double> x, ForwardCache& cache) {
  const auto& layers = net.layers();
  cache.pre.resize(layers.size());
  cache.post.resize(layers.size() + 1);
  cache.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    auto& z = cache.pre[l];
    z.assign(layer.bias.begin(), layer.bias.end());
    const auto& a = cache.post[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* row = layer.weights.data() + o * layer.in;
      double acc = z[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    auto& out = cache.post[l + 1];
    out = z;
    if (l + 1 < layers.size()) {
      for (double& v : out) v = std::max(v, 0.0);
    }
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

EmbedderNet EmbedderNet::zeros(std::vector<std::size_t> layer_dims) {
  check_dims(layer_dims);
  EmbedderNet net;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.in = layer_dims[l];
    layer.out = layer_dims[l + 1];
    layer.weights.assign(layer.in * layer.out, 0.0);
    layer.bias.assign(layer.out, 0.0);
    net.layers_.push_back(std::move(layer));
  }
  net.dims_ = std::move(layer_dims);
  return net;
}

EmbedderNet EmbedderNet::glorot(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
  EmbedderNet net = zeros(std::move(layer_dims));
  Rng rng(seed);
  for (auto& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (double& w : layer.weights) w = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return net;
}

EmbedderNet EmbedderNet::from_layers(std::vector<DenseLayer> layers) {
  if (layers.empty()) throw DimensionError("a net needs at least one layer");
  EmbedderNet net;
  net.dims_.push_back(layers.front().in);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.in == 0 || layer.out == 0) throw DimensionError("layer dimensions must be positive");
    if (layer.in != net.dims_.back()) {
      throw DimensionError("layer " + std::to_string(l) + " expects input " + std::to_string(layer.in) +
                           " but the previous layer produces " + std::to_string(net.dims_.back()));
    }
    if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
      throw DimensionError("layer " + std::to_string(l) + " parameter shapes are inconsistent");
    }
    net.dims_.push_back(layer.out);
  }
  net.layers_ = std::move(layers);
  return net;
}

std::vector<double> EmbedderNet::forward(std::span<const double> features) const {
  return activations(features, layers_.size());
}

std::vector<double> EmbedderNet::activations(std::span<const double> features, std::size_t layer) const {
  if (layers_.empty()) throw DimensionError("net has no layers");
  if (features.size() != input_dim()) {
    throw DimensionError("feature vector has dimension " + std::to_string(features.size()) + ", net expects " +
                         std::to_string(input_dim()));
  }
  if (layer > layers_.size()) throw std::out_of_range("layer index " + std::to_string(layer) + " out of range");
  std::vector<double> a(features.begin(), features.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < layer; ++l) {
    const auto& L = layers_[l];
    z.assign(L.bias.begin(), L.bias.end());
    for (std::size_t o = 0; o < L.out; ++o) {
      const double* row = L.weights.data() + o * L.in;
      double acc = z[o];
      for (std::size_t i = 0; i < L.in; ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    if (l + 1 < layers_.size()) {
      for (double& v : z) v = std::max(v, 0.0);
    }
    a.swap(z);
  }
  return a;
}

std::size_t EmbedderNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<double> EmbedderNet::parameters() const {
  std::vector<double> params;
  params.reserve(parameter_count());
  for (const auto& l : layers_) {
    params.insert(params.end(), l.weights.begin(), l.weights.end());
    params.insert(params.end(), l.bias.begin(), l.bias.end());
  }
  return params;
}

void EmbedderNet::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) throw DimensionError("parameter vector has the wrong length");
  std::size_t pos = 0;
  for (auto& l : layers_) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(), l.weights.begin());
    pos += l.weights.size();
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

double sigmoid_ce_loss(std::span<const double> logits, std::span<const double> targets) {
  check_loss_inputs(logits, targets);
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double x = logits[k];
    total += std::max(x, 0.0) - x * targets[k] + softplus_neg_abs(x);
  }
  return total / static_cast<double>(logits.size());
}

std::vector<double> sigmoid_ce_gradient(std::span<const double> logits, std::span<const double> targets) {
  check_loss_inputs(logits, targets);
  std::vector<double> grad(logits.size());
  const double scale = 1.0 / static_cast<double>(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) grad[k] = (sigmoid(logits[k]) - targets[k]) * scale;
  return grad;
}

double batch_loss_and_gradient(const EmbedderNet& net, std::span<const TrainingPair> pairs,
                               std::span<const std::size_t> indices, std::vector<double>& gradient) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const auto& layers = net.layers();
  gradient.assign(net.parameter_count(), 0.0);

  // Offsets of each layer's weights and bias in the flattened vector.
  std::vector<std::size_t> offset(layers.size());
  for (std::size_t l = 0, pos = 0; l < layers.size(); ++l) {
    offset[l] = pos;
    pos += layers[l].weights.size() + layers[l].bias.size();
  }

  ForwardCache cache;
  std::vector<double> delta, prev_delta;
  double loss = 0.0;
  for (std::size_t idx : indices) {
    const auto& pair = pairs[idx];
    if (pair.features.size() != net.input_dim()) throw DimensionError("feature dimension does not match the net");
    if (pair.target.size() != net.output_dim()) throw DimensionError("target dimension does not match the net");
    forward_cached(net, pair.features, cache);
    const auto& logits = cache.pre.back();
    loss += sigmoid_ce_loss(logits, pair.target);
    delta = sigmoid_ce_gradient(logits, pair.target);
    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& layer = layers[l];
      const auto& a = cache.post[l];
      double* gw = gradient.data() + offset[l];
      double* gb = gw + layer.weights.size();
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* grow = gw + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * a[i];
      }
      if (l == 0) break;
      prev_delta.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = layer.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) prev_delta[i] += row[i] * d;
      }
      const auto& z_prev = cache.pre[l - 1];
      for (std::size_t i = 0; i < layer.in; ++i) {
        if (z_prev[i] <= 0.0) prev_delta[i] = 0.0;
      }
      delta.swap(prev_delta);
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (double& g : gradient) g *= inv;
  return loss * inv;
}

void TrainConfig::validate() const {
  // A zero learning rate is accepted: it freezes the parameters.
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("base_lr must be >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw std::invalid_argument("lr_decay_factor must be in (0, 1]");
  }
  if (lr_decay_every < 1) throw std::invalid_argument("lr_decay_every must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
}

double TrainConfig::learning_rate(long iteration) const {
  return base_lr * std::pow(lr_decay_factor, static_cast<double>(iteration / lr_decay_every));
}

TrainResult train_embedder(EmbedderNet net, std::span<const TrainingPair> pairs, const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("no training pairs");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].features.size() != net.input_dim() || pairs[i].target.size() != net.output_dim()) {
      throw DimensionError("training pair " + std::to_string(i) + " does not match net dimensions " +
                           std::to_string(net.input_dim()) + " -> " + std::to_string(net.output_dim()));
    }
    for (double t : pairs[i].target) {
      if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("training pair " + std::to_string(i) + " has a target outside [0, 1]");
    }
  }

  TrainResult result;
  Rng rng(derive_seed(cfg.seed, "embedder-shuffle"));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> params = net.parameters();
  std::vector<double> velocity(params.size(), 0.0);
  std::vector<double> gradient;

  double interval_sum = 0.0;
  long interval_count = 0;
  double epoch_sum = 0.0;
  std::size_t epoch_seen = 0;
  std::size_t cursor = pairs.size();  // forces a shuffle before the first batch

  for (long it = 0; it < cfg.max_iters; ++it) {
    if (cursor >= pairs.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t end = std::min(cursor + cfg.batch_size, pairs.size());
    std::span<const std::size_t> batch(order.data() + cursor, end - cursor);

    const double loss = batch_loss_and_gradient(net, pairs, batch, gradient);
    if (!std::isfinite(loss)) throw DivergenceError(it + 1);

    const double lr = cfg.learning_rate(it);
    for (std::size_t p = 0; p < params.size(); ++p) {
      velocity[p] = cfg.momentum * velocity[p] - lr * gradient[p];
      params[p] += velocity[p];
    }
    net.set_parameters(params);

    interval_sum += loss;
    ++interval_count;
    if ((it + 1) % cfg.log_every == 0) {
      result.trace.iterations.push_back(it + 1);
      result.trace.interval_loss.push_back(interval_sum / static_cast<double>(interval_count));
      interval_sum = 0.0;
      interval_count = 0;
    }
    epoch_sum += loss * static_cast<double>(batch.size());
    epoch_seen += batch.size();
    cursor = end;
    if (cursor >= pairs.size()) {
      result.trace.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_seen));
      epoch_sum = 0.0;
      epoch_seen = 0;
    }
  }
  result.net = std::move(net);
  return result;
}

TopicDistribution project_logits(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("cannot project an empty logit vector");
  // Normalize in the log domain so that very negative logits cannot
  // underflow every entry to zero.
  std::vector<double> log_s(logits.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (std::isnan(logits[k])) throw std::invalid_argument("NaN logit");
    log_s[k] = log_sigmoid(logits[k]);
    max_log = std::max(max_log, log_s[k]);
  }
  if (!std::isfinite(max_log)) {
    return TopicDistribution::uniform(logits.size());
  }
  double total = 0.0;
  for (double& v : log_s) {
    v = std::exp(v - max_log);
    total += v;
  }
  for (double& v : log_s) v /= total;
  return TopicDistribution(std::move(log_s));
}

TopicDistribution project_image(const EmbedderNet& net, std::span<const double> features) {
  return project_logits(net.forward(features));
}

void WordVectors::add(std::string word, std::vector<double> vec) {
  if (vec.empty()) throw DimensionError("word vector must be non-empty");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) throw DimensionError("word vector dimension mismatch");
  table_.insert_or_assign(std::move(word), std::move(vec));
}

const std::vector<double>* WordVectors::find(const std::string& word) const {
  auto it = table_.find(word);
  return it == table_.end() ? nullptr : &it->second;
}

WordVectors WordVectors::read(std::istream& in, const std::string& name) {
  WordVectors table;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string part; fields >> part;) parts.push_back(std::move(part));
    if (first) {
      first = false;
      // word2vec-style "count dim" header.
      if (parts.size() == 2 && parts[0].find_first_not_of("0123456789") == std::string::npos &&
          parts[1].find_first_not_of("0123456789") == std::string::npos) {
        continue;
      }
    }
    if (parts.size() < 2) throw FormatError(name, line_no, "expected 'word v1 ... vD'");
    std::vector<double> vec;
    vec.reserve(parts.size() - 1);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(parts[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != parts[i].size() || !std::isfinite(v)) {
        throw FormatError(name, line_no, "invalid number '" + parts[i] + "'");
      }
      vec.push_back(v);
    }
    if (table.dim_ != 0 && vec.size() != table.dim_) {
      throw FormatError(name, line_no, "vector has dimension " + std::to_string(vec.size()) + ", expected " +
                                           std::to_string(table.dim_));
    }
    table.add(std::move(parts[0]), std::move(vec));
  }
  if (table.size() == 0) throw FormatError(name, line_no, "no word vectors found");
  return table;
}

WordVectors WordVectors::read(const std::string& path) {
  auto in = io::open_input(path);
  return read(in, path);
}

MeanEmbedding mean_embedding_target(std::span<const std::string> tokens, const WordVectors& vectors) {
  MeanEmbedding result;
  result.vec.assign(vectors.dim(), 0.0);
  for (const auto& token : tokens) {
    const auto* v = vectors.find(token);
    if (!v) continue;
    for (std::size_t i = 0; i < v->size(); ++i) result.vec[i] += (*v)[i];
    ++result.matched;
  }
  if (result.matched > 0) {
    for (double& x : result.vec) x /= static_cast<double>(result.matched);
  }
  return result;
}

void rescale_to_unit_interval(std::vector<std::vector<double>>& targets) {
  if (targets.empty()) return;
  const std::size_t dim = targets.front().size();
  for (std::size_t j = 0; j < dim; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& t : targets) {
      if (t.size() != dim) throw DimensionError("targets have inconsistent dimensions");
      lo = std::min(lo, t[j]);
      hi = std::max(hi, t[j]);
    }
    for (auto& t : targets) t[j] = hi > lo ? std::clamp((t[j] - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  }
}

void write_net(std::ostream& out, const EmbedderNet& net) {
  io::Json obj;
  obj["format"] = "ttn-embedder";
  obj["version"] = 1;
  obj["layer_dims"] = net.layer_dims();
  io::Json layers = io::Json::array();
  for (const auto& l : net.layers()) layers.push_back({{"weights", l.weights}, {"bias", l.bias}});
  obj["layers"] = std::move(layers);
  out << obj.dump() << '\n';
}

void write_net(const std::string& path, const EmbedderNet& net) {
  auto out = io::open_output(path);
  write_net(out, net);
}

EmbedderNet read_net(std::istream& in, const std::string& name) {
  io::Json obj;
  try {
    obj = io::Json::parse(in);
  } catch (const io::Json::parse_error& e) {
    throw FormatError(name, 1, std::string("invalid JSON: ") + e.what());
  }
  try {
    if (io::require_string(obj, "format") != "ttn-embedder") throw std::invalid_argument("not a ttn-embedder net");
    if (io::require(obj, "version").get<int>() != 1) throw std::invalid_argument("unsupported net version");
    const auto dims = io::require(obj, "layer_dims").get<std::vector<std::size_t>>();
    const auto& layers_json = io::require(obj, "layers");
    if (dims.size() < 2 || layers_json.size() != dims.size() - 1) {
      throw std::invalid_argument("layer count does not match layer_dims");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < layers_json.size(); ++l) {
      DenseLayer layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      layer.weights = io::require(layers_json[l], "weights").get<std::vector<double>>();
      layer.bias = io::require(layers_json[l], "bias").get<std::vector<double>>();
      layers.push_back(std::move(layer));
    }
    return EmbedderNet::from_layers(std::move(layers));
  } catch (const io::Json::exception& e) {
    throw FormatError(name, 1, e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(name, 1, e.what());
  } catch (const DimensionError& e) {
    throw FormatError(name, 1, e.what());
  }
}

EmbedderNet read_net(const std::string& path) {
  auto in = io::open_input(path);
  return read_net(in, path);
}

std::vector<FeatureRecord> read_features(std::istream& in, const std::string& name) {
  std::vector<FeatureRecord> records;
  std::unordered_set<std::string> seen;
  io::for_each_jsonl(in, name, [&](const io::Json& obj, std::size_t) {
    FeatureRecord rec;
    rec.id = io::require_string(obj, "id");
    if (rec.id.empty()) throw std::invalid_argument("empty feature id");
    if (!seen.insert(rec.id).second) throw std::invalid_argument("duplicate feature id '" + rec.id + "'");
    rec.vec = io::require(obj, "vec").get<std::vector<double>>();
    if (rec.vec.empty()) throw std::invalid_argument("empty feature vector");
    for (double v : rec.vec) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
    }
    if (!records.empty() && rec.vec.size() != records.front().vec.size()) {
      throw std::invalid_argument("feature dimension " + std::to_string(rec.vec.size()) + " differs from " +
                                  std::to_string(records.front().vec.size()));
    }
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) rec.label = it->get<std::string>();
    if (auto it = obj.find("split"); it != obj.end() && !it->is_null()) {
      rec.split = it->get<std::string>();
      if (*rec.split != "train" && *rec.split != "val" && *rec.split != "test") {
        throw std::invalid_argument("split must be one of train, val, test");
      }
    }
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<FeatureRecord> read_features(const std::string& path) {
  auto in = io::open_input(path);
  return read_features(in, path);
}

void write_features(std::ostream& out, std::span<const FeatureRecord> records) {
  for (const auto& rec : records) {
    io::Json obj;
    obj["id"] = rec.id;
    obj["vec"] = rec.vec;
    if (rec.label) obj["label"] = *rec.label;
    if (rec.split) obj["split"] = *rec.split;
    io::write_jsonl_line(out, obj);
  }
}

}  // namespace ttn
