#include "ttn/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "ttn/jsonl.hpp"
#include "ttn/rng.hpp"

namespace ttn {

namespace {

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;  // 0 for constant columns

  static Standardizer fit(const std::vector<const LabeledVector*>& rows, bool enabled) {
    Standardizer s;
    if (rows.empty()) return s;
    const std::size_t dim = rows.front()->x.size();
    s.mean.assign(dim, 0.0);
    s.inv_std.assign(dim, 1.0);
    if (!enabled) return s;
    for (const auto* r : rows) {
      for (std::size_t j = 0; j < dim; ++j) s.mean[j] += r->x[j];
    }
    for (double& m : s.mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(dim, 0.0);
    for (const auto* r : rows) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = r->x[j] - s.mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
      s.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
    return s;
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) * inv_std[j];
    return out;
  }
};

double class_ap(const LinearModel& model, const Standardizer& scaler, const std::vector<LabeledVector>& split,
                const std::string& cls) {
  std::vector<double> scores;
  std::vector<bool> relevance;
  scores.reserve(split.size());
  for (const auto& row : split) {
    scores.push_back(model.decision(scaler.apply(row.x)));
    relevance.push_back(row.label == cls);
  }
  return average_precision(scores, relevance);
}

LinearModel fit_class(const std::vector<const LabeledVector*>& rows, const Standardizer& scaler,
                      const std::string& cls, double lambda, int epochs, std::uint64_t seed) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  x.reserve(rows.size());
  for (const auto* r : rows) {
    x.push_back(scaler.apply(r->x));
    y.push_back(r->label == cls ? 1 : -1);
  }
  return train_hinge_l2(x, y, lambda, epochs, seed);
}

std::size_t count_label(const std::vector<LabeledVector>& split, const std::string& cls) {
  return static_cast<std::size_t>(
      std::count_if(split.begin(), split.end(), [&](const LabeledVector& r) { return r.label == cls; }));
}

void check_dimensions(const ProbeData& data) {
  std::optional<std::size_t> dim;
  for (const auto* split : {&data.train, &data.validation, &data.test}) {
    for (const auto& row : *split) {
      if (!dim) dim = row.x.size();
      if (row.x.size() != *dim) throw DimensionError("probe features have inconsistent dimensions");
    }
  }
}

struct ClassSelection {
  std::string cls;
  bool skipped = false;
  std::string warning;
  double best_lambda = 0.0;
  double validation_ap = 0.0;
  double test_ap = 0.0;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers; results by index.
template <typename Fn>
auto parallel_map(std::size_t n, unsigned threads, Fn fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> results(n);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
    return results;
  }
  std::vector<std::future<void>> futures;
  std::atomic<std::size_t> next{0};
  for (unsigned t = 0; t < std::min<std::size_t>(threads, n); ++t) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) results[i] = fn(i);
    }));
  }
  for (auto& f : futures) f.get();
  return results;
}

ClassSelection select_for_class(const ProbeData& data, const std::string& cls, std::span<const double> grid,
                                std::uint64_t seed, const ProbeOptions& options, bool need_test) {
  ClassSelection sel;
  sel.cls = cls;
  const std::size_t n_train = count_label(data.train, cls);
  if (n_train < 2) {
    sel.skipped = true;
    sel.warning = "class '" + cls + "' has " + std::to_string(n_train) + " training examples (need 2); skipped";
    return sel;
  }
  if (count_label(data.validation, cls) == 0) {
    sel.skipped = true;
    sel.warning = "class '" + cls + "' is absent from the validation split; skipped";
    return sel;
  }
  if (need_test && count_label(data.test, cls) == 0) {
    sel.skipped = true;
    sel.warning = "class '" + cls + "' is absent from the test split; skipped";
    return sel;
  }

  std::vector<const LabeledVector*> train_rows;
  for (const auto& r : data.train) train_rows.push_back(&r);
  const Standardizer scaler = Standardizer::fit(train_rows, options.standardize);
  const std::uint64_t class_seed = derive_seed(seed, cls);

  double best_ap = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto model = fit_class(train_rows, scaler, cls, grid[g], options.epochs, derive_seed(class_seed, g));
    const double ap = class_ap(model, scaler, data.validation, cls);
    if (ap > best_ap) {
      best_ap = ap;
      sel.best_lambda = grid[g];
    }
  }
  sel.validation_ap = best_ap;

  if (need_test) {
    std::vector<const LabeledVector*> all_rows = train_rows;
    for (const auto& r : data.validation) all_rows.push_back(&r);
    const Standardizer full_scaler = Standardizer::fit(all_rows, options.standardize);
    const auto model =
        fit_class(all_rows, full_scaler, cls, sel.best_lambda, options.epochs, derive_seed(class_seed, "refit"));
    sel.test_ap = class_ap(model, full_scaler, data.test, cls);
  }
  return sel;
}

ProbeResult run_probe(const ProbeData& data, std::span<const std::string> classes, std::span<const double> grid,
                      std::uint64_t seed, const ProbeOptions& options, bool need_test) {
  if (grid.empty()) throw std::invalid_argument("regularization grid is empty");
  for (double g : grid) {
    if (!(g > 0.0)) throw std::invalid_argument("regularization values must be positive");
  }
  if (data.train.empty()) throw std::invalid_argument("training split is empty");
  if (data.validation.empty()) throw std::invalid_argument("validation split is empty");
  if (need_test && data.test.empty()) throw std::invalid_argument("test split is empty");
  if (options.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  check_dimensions(data);

  const auto selections = parallel_map(classes.size(), options.threads, [&](std::size_t i) {
    return select_for_class(data, classes[i], grid, seed, options, need_test);
  });

  ProbeResult result;
  double test_sum = 0.0, val_sum = 0.0;
  std::size_t used = 0;
  for (const auto& sel : selections) {
    if (sel.skipped) {
      result.warnings.push_back(sel.warning);
      continue;
    }
    result.best_hyperparams[sel.cls] = sel.best_lambda;
    result.validation_ap[sel.cls] = sel.validation_ap;
    val_sum += sel.validation_ap;
    if (need_test) {
      result.per_class_ap[sel.cls] = sel.test_ap;
      test_sum += sel.test_ap;
    }
    ++used;
  }
  if (used == 0) throw Error("every class was skipped; nothing to evaluate");
  result.validation_map = val_sum / static_cast<double>(used);
  if (need_test) result.mean_ap = test_sum / static_cast<double>(used);
  return result;
}

std::vector<LabeledVector> transform_split(const EmbedderNet& net, const std::vector<LabeledVector>& split,
                                           const std::optional<std::size_t>& layer) {
  std::vector<LabeledVector> out;
  out.reserve(split.size());
  for (const auto& row : split) out.push_back({probe_representation(net, row.x, layer), row.label});
  return out;
}

SweepPoint run_sweep_point(std::span<const BowDocument> corpus, const Vocabulary& vocab,
                           std::span<const FeaturePair> pairs, const ProbeData& probe_data,
                           const SweepConfig& config, std::size_t num_topics,
                           const std::unordered_map<std::string, std::size_t>& doc_index) {
  const std::uint64_t point_seed = derive_seed(derive_seed(config.seed, "sweep"), num_topics);

  LdaOptions lda = config.lda;
  lda.num_topics = num_topics;
  lda.seed = derive_seed(point_seed, "train-lda");
  const TopicModel model = train_lda(corpus, vocab, lda);

  std::vector<TrainingPair> training;
  training.reserve(pairs.size());
  for (const auto& pair : pairs) {
    const std::size_t d = doc_index.at(pair.doc_id);
    training.push_back({pair.features, model.training_theta(d).values()});
  }

  std::vector<std::size_t> dims;
  dims.push_back(pairs.front().features.size());
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(num_topics);
  TrainConfig cfg = config.embedder;
  cfg.seed = derive_seed(point_seed, "train-embedder");
  auto trained = train_embedder(EmbedderNet::glorot(dims, derive_seed(point_seed, "embedder-init")), training, cfg);

  ProbeData transformed;
  transformed.train = transform_split(trained.net, probe_data.train, config.layer);
  transformed.validation = transform_split(trained.net, probe_data.validation, config.layer);
  const auto classes = probe_classes(transformed);
  const auto probe =
      select_probe_hyperparams(transformed, classes, config.reg_grid, derive_seed(point_seed, "probe"), config.probe);
  return {num_topics, probe.validation_map};
}

}  // namespace

double average_precision(std::span<const double> scores, const std::vector<bool>& relevance) {
  if (scores.size() != relevance.size()) throw DimensionError("scores and relevance differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double precision_sum = 0.0;
  std::size_t relevant = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (relevance[order[rank]]) {
      ++relevant;
      precision_sum += static_cast<double>(relevant) / static_cast<double>(rank + 1);
    }
  }
  if (relevant == 0) throw std::invalid_argument("average precision needs at least one relevant item");
  return precision_sum / static_cast<double>(relevant);
}

double LinearModel::decision(std::span<const double> x) const {
  if (x.size() != weights.size()) throw DimensionError("feature dimension does not match the classifier");
  double s = bias;
  for (std::size_t j = 0; j < x.size(); ++j) s += weights[j] * x[j];
  return s;
}

LinearModel train_hinge_l2(std::span<const std::vector<double>> x, std::span<const int> y, double lambda,
                           int epochs, std::uint64_t seed) {
  if (x.empty() || x.size() != y.size()) throw std::invalid_argument("need one label per example");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  for (int label : y) {
    if (label != 1 && label != -1) throw std::invalid_argument("labels must be +1 or -1");
  }
  const std::size_t dim = x.front().size();
  for (const auto& row : x) {
    if (row.size() != dim) throw DimensionError("examples differ in dimension");
  }
  // w[dim] is the bias weight on a constant feature of 1.
  std::vector<double> w(dim + 1, 0.0), avg(dim + 1, 0.0);
  const double radius = 1.0 / std::sqrt(lambda);
  Rng rng(seed);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t total = static_cast<std::size_t>(epochs) * x.size();
  const std::size_t avg_from = total / 2;
  std::size_t averaged = 0;
  std::size_t t = 0;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      const auto& xi = x[i];
      if (xi.size() != dim) throw DimensionError("examples have inconsistent dimensions");
      const double yi = y[i] > 0 ? 1.0 : -1.0;
      double margin = w[dim];
      for (std::size_t j = 0; j < dim; ++j) margin += w[j] * xi[j];
      margin *= yi;
      const double step = 1.0 / (lambda * static_cast<double>(t));
      const double shrink = 1.0 - step * lambda;
      for (double& wj : w) wj *= shrink;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < dim; ++j) w[j] += step * yi * xi[j];
        w[dim] += step * yi;
      }
      double norm2 = 0.0;
      for (double wj : w) norm2 += wj * wj;
      if (norm2 > radius * radius) {
        const double scale = radius / std::sqrt(norm2);
        for (double& wj : w) wj *= scale;
      }
      if (t > avg_from) {
        for (std::size_t j = 0; j <= dim; ++j) avg[j] += w[j];
        ++averaged;
      }
    }
  }
  LinearModel model;
  model.weights.assign(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) model.weights[j] = avg[j] / static_cast<double>(averaged);
  model.bias = avg[dim] / static_cast<double>(averaged);
  return model;
}

std::vector<std::string> probe_classes(const ProbeData& data) {
  std::set<std::string> labels;
  for (const auto& r : data.train) labels.insert(r.label);
  return {labels.begin(), labels.end()};
}

ProbeResult select_probe_hyperparams(const ProbeData& data, std::span<const std::string> classes,
                                     std::span<const double> reg_grid, std::uint64_t seed,
                                     const ProbeOptions& options) {
  return run_probe(data, classes, reg_grid, seed, options, false);
}

ProbeResult train_linear_probe(const ProbeData& data, std::span<const std::string> classes,
                               std::span<const double> reg_grid, std::uint64_t seed, const ProbeOptions& options) {
  return run_probe(data, classes, reg_grid, seed, options, true);
}

std::vector<double> probe_representation(const EmbedderNet& net, std::span<const double> features,
                                         const std::optional<std::size_t>& layer) {
  if (!layer) return project_image(net, features).values();
  return net.activations(features, *layer);
}

SweepResult topic_count_sweep(std::span<const BowDocument> corpus, const Vocabulary& vocab,
                              std::span<const FeaturePair> pairs, const ProbeData& probe_data,
                              const SweepConfig& config) {
  if (config.topic_counts.empty()) throw std::invalid_argument("sweep needs at least one topic count");
  if (pairs.empty()) throw std::invalid_argument("sweep needs image-text training pairs");
  std::unordered_map<std::string, std::size_t> doc_index;
  for (std::size_t d = 0; d < corpus.size(); ++d) doc_index.emplace(corpus[d].doc_id, d);
  for (const auto& pair : pairs) {
    if (!doc_index.contains(pair.doc_id)) {
      throw std::invalid_argument("feature pair refers to unknown document '" + pair.doc_id + "'");
    }
  }

  std::vector<std::size_t> ks = config.topic_counts;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  const auto points = parallel_map(ks.size(), config.threads, [&](std::size_t i) -> SweepPoint {
    try {
      return run_sweep_point(corpus, vocab, pairs, probe_data, config, ks[i], doc_index);
    } catch (const std::exception& e) {
      throw SweepError(ks[i], e.what());
    }
  });

  SweepResult result;
  result.points = points;
  double best = -1.0;
  for (const auto& p : result.points) {
    if (p.validation_map > best) {
      best = p.validation_map;
      result.best_k = p.num_topics;
    }
  }
  return result;
}

void write_probe_report(std::ostream& out, const ProbeResult& result) {
  io::Json obj;
  obj["per_class"] = result.per_class_ap;
  obj["mean_ap"] = result.mean_ap;
  obj["grid"] = result.best_hyperparams;
  obj["validation"] = result.validation_ap;
  obj["validation_map"] = result.validation_map;
  obj["warnings"] = result.warnings;
  out << obj.dump(2) << '\n';
}

void write_sweep_report(std::ostream& out, const SweepResult& result) {
  std::ostringstream body;
  body << std::setprecision(17);
  body << "K,validation_map\n";
  for (const auto& p : result.points) body << p.num_topics << ',' << p.validation_map << '\n';
  body << "#best_K=" << result.best_k << '\n';
  out << body.str();
}

}  // namespace ttn
