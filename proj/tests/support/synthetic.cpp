#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "ttn/rng.hpp"

namespace ttn::testing {

namespace {

void sample_docs(PlantedCorpus& out, const PlantedSpec& spec, std::size_t num_docs, Rng& rng) {
  const std::size_t K = spec.num_topics;
  std::vector<double> concentration(K, spec.doc_alpha);
  std::vector<std::vector<double>> mixing;  // feature_dim x K
  if (spec.feature_dim > 0) {
    Rng mix_rng(spec.seed ^ 0x5eedULL);
    mixing.assign(spec.feature_dim, std::vector<double>(K));
    for (auto& row : mixing) {
      for (double& v : row) v = mix_rng.normal();
    }
  }
  for (std::size_t d = 0; d < num_docs; ++d) {
    std::vector<double> theta;
    std::size_t label = 0;
    if (spec.dominant_mass > 0.0) {
      label = d % K;
      auto rest = rng.dirichlet(concentration);
      theta.resize(K);
      for (std::size_t k = 0; k < K; ++k) theta[k] = (1.0 - spec.dominant_mass) * rest[k];
      theta[label] += spec.dominant_mass;
    } else {
      theta = rng.dirichlet(concentration);
      label = static_cast<std::size_t>(std::max_element(theta.begin(), theta.end()) - theta.begin());
    }
    std::vector<std::string> tokens;
    tokens.reserve(spec.doc_length);
    for (std::size_t i = 0; i < spec.doc_length; ++i) {
      const std::size_t k = rng.categorical(theta);
      const std::size_t w = rng.categorical(out.phi[k]);
      tokens.push_back(out.vocab.word(w));
    }
    const std::string id = "doc" + std::to_string(out.docs.size());
    out.docs.push_back(vectorize(tokens, out.vocab, id, "class" + std::to_string(label)));
    out.tokens.push_back(std::move(tokens));
    if (spec.feature_dim > 0) {
      std::vector<double> x(spec.feature_dim);
      for (std::size_t j = 0; j < spec.feature_dim; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += mixing[j][k] * theta[k];
        x[j] = acc + spec.feature_noise * rng.normal();
      }
      out.features.push_back(std::move(x));
    }
    out.theta.push_back(std::move(theta));
    out.label_topic.push_back(label);
  }
}

}  // namespace

std::vector<std::string> pseudo_words(std::size_t count, std::uint64_t seed) {
  static const std::string consonants = "bdfgkmnprtv";
  static const std::string vowels = "aiou";
  Rng rng(seed);
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  while (words.size() < count) {
    std::string w;
    for (int i = 0; i < 5; ++i) {
      const std::string& pool = (i % 2 == 0) ? consonants : vowels;
      w.push_back(pool[rng.below(pool.size())]);
    }
    if (porter_stem(w) != w || default_stopwords().contains(w) || !seen.insert(w).second) continue;
    words.push_back(std::move(w));
  }
  return words;
}

PlantedCorpus make_planted_corpus(const PlantedSpec& spec) {
  const std::size_t K = spec.num_topics;
  const std::size_t V = spec.words_per_topic;
  Rng rng(spec.seed);
  const auto words = pseudo_words(K * V, spec.seed + 17);

  // Vocabulary of all generating words; lexicographic index order.
  PlantedCorpus out;
  out.vocab = Vocabulary::build(std::vector<std::vector<std::string>>{words}, 1, 1.0);
  const std::size_t N = out.vocab.size();

  out.phi.assign(K, std::vector<double>(N, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> conc(V, 2.0);
    auto weights = rng.dirichlet(conc);
    for (std::size_t j = 0; j < V; ++j) out.phi[k][*out.vocab.lookup(words[k * V + j])] = weights[j];
  }
  sample_docs(out, spec, spec.num_docs, rng);
  return out;
}

PlantedCorpus make_heldout(const PlantedCorpus& source, const PlantedSpec& spec, std::size_t num_docs,
                           std::uint64_t seed) {
  PlantedCorpus out;
  out.vocab = source.vocab;
  out.phi = source.phi;
  Rng rng(seed);
  sample_docs(out, spec, num_docs, rng);
  return out;
}

double analytic_perplexity(const PlantedCorpus& corpus) {
  double ll = 0.0;
  std::size_t tokens = 0;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    for (const auto& wc : corpus.docs[d].counts) {
      double p = 0.0;
      for (std::size_t k = 0; k < corpus.phi.size(); ++k) p += corpus.theta[d][k] * corpus.phi[k][wc.word];
      ll += wc.count * std::log(p);
      tokens += wc.count;
    }
  }
  return std::exp(-ll / static_cast<double>(tokens));
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> matched_topic_tv(const std::vector<std::vector<double>>& learned,
                                     const std::vector<std::vector<double>>& truth) {
  const std::size_t K = truth.size();
  if (learned.size() != K || K > 8) throw std::invalid_argument("matched_topic_tv: K mismatch or too large");
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> best;
  double best_max = 1e300;
  do {
    std::vector<double> tv(K);
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      tv[k] = total_variation(learned[perm[k]], truth[k]);
      worst = std::max(worst, tv[k]);
    }
    if (worst < best_max) {
      best_max = worst;
      best = tv;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

RealizableTask make_realizable_task(std::size_t n, std::size_t in_dim, std::size_t out_dim, double scale,
                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> A(out_dim * in_dim);
  for (double& a : A) a = scale * rng.normal() / std::sqrt(static_cast<double>(in_dim));
  RealizableTask task;
  double floor_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingPair pair;
    pair.features.resize(in_dim);
    for (double& x : pair.features) x = rng.normal();
    pair.target.resize(out_dim);
    double h = 0.0;
    for (std::size_t k = 0; k < out_dim; ++k) {
      double z = 0.0;
      for (std::size_t j = 0; j < in_dim; ++j) z += A[k * in_dim + j] * pair.features[j];
      const double t = 1.0 / (1.0 + std::exp(-z));
      pair.target[k] = t;
      if (t > 0.0 && t < 1.0) h -= t * std::log(t) + (1.0 - t) * std::log(1.0 - t);
    }
    floor_sum += h / static_cast<double>(out_dim);
    task.pairs.push_back(std::move(pair));
  }
  task.entropy_floor = floor_sum / static_cast<double>(n);
  return task;
}

double reference_ap(const std::vector<bool>& ranked_relevance) {
  const double R = static_cast<double>(std::count(ranked_relevance.begin(), ranked_relevance.end(), true));
  if (R == 0) throw std::invalid_argument("no relevant items");
  double area = 0.0;
  double hits = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (ranked_relevance[k]) hits += 1.0;
    const double precision_at_k = hits / static_cast<double>(k + 1);
    const double recall_step = ranked_relevance[k] ? 1.0 / R : 0.0;
    area += precision_at_k * recall_step;
  }
  return area;
}

std::vector<double> numeric_gradient(const EmbedderNet& net, const std::vector<TrainingPair>& pairs, double step) {
  // Loss written out from the definition, not the library's stable form.
  const auto mean_loss = [&](const EmbedderNet& n) {
    double total = 0.0;
    for (const auto& p : pairs) {
      const auto logits = n.forward(p.features);
      double l = 0.0;
      for (std::size_t k = 0; k < logits.size(); ++k) {
        const double s = 1.0 / (1.0 + std::exp(-logits[k]));
        l -= p.target[k] * std::log(s) + (1.0 - p.target[k]) * std::log(1.0 - s);
      }
      total += l / static_cast<double>(logits.size());
    }
    return total / static_cast<double>(pairs.size());
  };
  EmbedderNet probe = net;
  auto params = net.parameters();
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double original = params[i];
    params[i] = original + step;
    probe.set_parameters(params);
    const double up = mean_loss(probe);
    params[i] = original - step;
    probe.set_parameters(params);
    const double down = mean_loss(probe);
    params[i] = original;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

std::vector<LabeledVector> make_blobs(std::size_t per_class, std::size_t dim, const std::vector<std::string>& classes,
                                      double separation, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<double> center(dim, 0.0);
    center[c % dim] = separation;
    centers.push_back(std::move(center));
  }
  std::vector<LabeledVector> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      LabeledVector row;
      row.label = classes[c];
      row.x.resize(dim);
      for (std::size_t j = 0; j < dim; ++j) row.x[j] = centers[c][j] + rng.normal();
      out.push_back(std::move(row));
    }
  }
  return out;
}

SweepFixture make_sweep_fixture(std::uint64_t seed) {
  SweepFixture f;
  f.spec = PlantedSpec{.num_topics = 4,
                       .words_per_topic = 10,
                       .num_docs = 400,
                       .doc_length = 50,
                       .doc_alpha = 0.5,
                       .dominant_mass = 0.6,
                       .feature_dim = 16,
                       .feature_noise = 0.8,
                       .seed = seed};
  f.corpus = make_planted_corpus(f.spec);
  for (std::size_t d = 0; d < f.corpus.docs.size(); ++d) {
    const auto& doc = f.corpus.docs[d];
    f.pairs.push_back({doc.doc_id, f.corpus.features[d]});
    LabeledVector row{f.corpus.features[d], *doc.class_label};
    const std::size_t fold = d % 5;
    (fold < 3 ? f.probe.train : fold == 3 ? f.probe.validation : f.probe.test).push_back(std::move(row));
  }
  f.config.topic_counts = {2, 4, 8};
  f.config.lda.alpha = 0.5;
  f.config.lda.iters = 200;
  f.config.hidden_dims = {32};
  f.config.embedder.base_lr = 0.05;
  f.config.embedder.batch_size = 16;
  f.config.embedder.max_iters = 2000;
  f.config.embedder.lr_decay_every = 1500;
  f.config.seed = seed;
  return f;
}

}  // namespace ttn::testing
