// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "pipeline.hpp"
#include "synthetic.hpp"
#include "ttn/defaults.hpp"
#include "ttn/embedder.hpp"
#include "ttn/evaluation.hpp"
#include "ttn/retrieval.hpp"
#include "ttn/rng.hpp"
#include "ttn/topicmodel.hpp"

using namespace ttn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::vector<double>> phi_rows(const TopicModel& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < m.num_topics; ++k) {
    auto r = m.topic_row(k);
    rows.emplace_back(r.begin(), r.end());
  }
  return rows;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Outcome planted_recovery() {
  const auto c = testing::make_planted_corpus(testing::PlantedSpec{});
  LdaOptions opt;
  opt.num_topics = 2;
  opt.alpha = 0.5;
  opt.iters = 200;
  opt.seed = 3;
  const auto m = train_lda(c.docs, c.vocab, opt);
  const auto tv = testing::matched_topic_tv(phi_rows(m), c.phi);
  const double worst = *std::max_element(tv.begin(), tv.end());
  return {worst <= 0.1, "max per-topic TV " + fmt("%.4f", worst) + " (limit 0.1)"};
}

Outcome perplexity_sanity() {
  const testing::PlantedSpec spec;
  const auto c = testing::make_planted_corpus(spec);
  TopicModel uniform;
  uniform.num_topics = 2;
  uniform.alpha = 0.5;
  uniform.eta = 0.01;
  uniform.vocab_size = c.vocab.size();
  uniform.phi.assign(2 * uniform.vocab_size, 1.0 / static_cast<double>(uniform.vocab_size));
  const double N = static_cast<double>(c.vocab.size());
  const double pu = perplexity(uniform, c.docs).perplexity;
  const bool uniform_ok = std::abs(pu - N) <= 1e-12 * N;

  LdaOptions opt;
  opt.num_topics = 2;
  opt.alpha = spec.doc_alpha;
  opt.iters = 200;
  opt.seed = 3;
  const auto m = train_lda(c.docs, c.vocab, opt);
  const auto held = testing::make_heldout(c, spec, 200, 77);
  const double ph = perplexity(m, held.docs, defaults::kInferIters, 5).perplexity;
  const double truth = testing::analytic_perplexity(held);
  const double rel = std::abs(ph - truth) / truth;
  return {uniform_ok && rel <= 0.1, "uniform " + fmt("%.12g", pu) + " vs N=" + fmt("%.0f", N) + "; held-out " +
                                        fmt("%.3f", ph) + " vs analytic " + fmt("%.3f", truth) + " (" +
                                        fmt("%.2f", 100 * rel) + "%, limit 10%)"};
}

Outcome gradient_check() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t depth = 1 + rng.below(3);
    std::vector<std::size_t> dims{1 + rng.below(16)};
    for (std::size_t l = 0; l < depth; ++l) dims.push_back(1 + rng.below(16));
    // Random biases too: zero biases behind a dead unit put the next layer
    // exactly on the rectifier kink, where finite differences are invalid.
    auto net = EmbedderNet::glorot(dims, rng.next_u64());
    auto params = net.parameters();
    for (double& p : params) p += 0.1 * rng.normal();
    net.set_parameters(params);
    std::vector<TrainingPair> pairs(2);
    for (auto& p : pairs) {
      p.features.resize(dims.front());
      for (double& v : p.features) v = rng.normal();
      p.target.resize(dims.back());
      for (double& v : p.target) v = rng.uniform();
    }
    std::vector<double> grad;
    batch_loss_and_gradient(net, pairs, all_indices(pairs.size()), grad);
    const auto numeric = testing::numeric_gradient(net, pairs, 1e-5);
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      diff += (grad[i] - numeric[i]) * (grad[i] - numeric[i]);
      na += grad[i] * grad[i];
      nb += numeric[i] * numeric[i];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12}));
  }
  return {worst <= 1e-4, "worst relative error " + fmt("%.2e", worst) + " over 100 nets (limit 1e-4)"};
}

Outcome realizable_floor() {
  const std::size_t n = 200;
  const auto task = testing::make_realizable_task(n, 8, 4, 3.0, 1);
  TrainConfig cfg;
  cfg.base_lr = 0.1;
  cfg.batch_size = 10;
  const long per_epoch = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  cfg.max_iters = 50 * per_epoch;
  cfg.lr_decay_every = 40 * per_epoch;
  cfg.seed = 2;
  const auto result = train_embedder(EmbedderNet::glorot({8, 32, 4}, 1), task.pairs, cfg);
  std::vector<double> grad;
  const double loss = batch_loss_and_gradient(result.net, task.pairs, all_indices(n), grad);
  const double ratio = loss / task.entropy_floor;
  return {ratio <= 1.05, "loss " + fmt("%.5f", loss) + " vs floor " + fmt("%.5f", task.entropy_floor) + " after " +
                             std::to_string(result.trace.epoch_loss.size()) + " epochs (ratio " +
                             fmt("%.4f", ratio) + ", limit 1.05)"};
}

Outcome retrieval_exactness() {
  bool ok = true;
  std::string why;
  Rng rng(5);
  std::vector<IndexEntry> entries;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> w(8);
    for (double& v : w) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    w[0] += 1e-3;
    entries.push_back({"e" + std::to_string(i), Modality::Text, TopicDistribution::normalized(w), std::nullopt});
  }
  const auto index = TopicIndex::build(entries);
  for (const auto& e : entries) {
    if (kl_divergence(e.dist, e.dist) != 0.0) ok = false;
    const auto hits = index.query(e.dist, Modality::Text, 1);
    if (hits[0].id != e.id || hits[0].divergence != 0.0) ok = false;
  }
  if (!ok) why += " self-retrieval failed;";

  // Hand-computed KL(q || e) for q = [.5, .3, .2].
  const auto five = TopicIndex::build({
      {"flip", Modality::Text, TopicDistribution({.2, .3, .5}), std::nullopt},
      {"flat", Modality::Text, TopicDistribution::uniform(3), std::nullopt},
      {"tilt", Modality::Text, TopicDistribution({.6, .2, .2}), std::nullopt},
      {"same", Modality::Text, TopicDistribution({.5, .3, .2}), std::nullopt},
      {"near", Modality::Text, TopicDistribution({.4, .4, .2}), std::nullopt},
  });
  const std::vector<std::string> order{"same", "near", "tilt", "flat", "flip"};
  const std::vector<double> kl{0.0, 0.025267, 0.030479, 0.068960, 0.274887};
  const auto hits = five.query(TopicDistribution({.5, .3, .2}), Modality::Text, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    if (hits[i].id != order[i] || std::abs(hits[i].divergence - kl[i]) > 1e-5) {
      ok = false;
      why += " order mismatch at rank " + std::to_string(i + 1) + ";";
    }
  }
  const double v = kl_divergence(TopicDistribution({0.5, 0.5}), TopicDistribution({0.25, 0.75}));
  if (std::abs(v - 0.14384) > 1e-5) {
    ok = false;
    why += " KL value off;";
  }
  return {ok, "self-retrieval over 50 entries, 5-entry order, KL([.5,.5],[.25,.75]) = " + fmt("%.6f", v) + why};
}

Outcome ap_oracle() {
  std::size_t cases = 0;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      // perm[i] is the rank of item i: scores descending by rank.
      std::vector<double> scores(n);
      for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(n - perm[i]);
      for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<bool> rel(n);
        for (std::size_t i = 0; i < n; ++i) rel[i] = (mask >> i) & 1u;
        std::vector<bool> ranked(n);
        for (std::size_t i = 0; i < n; ++i) ranked[perm[i]] = rel[i];
        worst = std::max(worst, std::abs(average_precision(scores, rel) - testing::reference_ap(ranked)));
        ++cases;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    // All-tied scores rank in input order.
    const std::vector<double> tied(n, 1.0);
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      std::vector<bool> rel(n);
      for (std::size_t i = 0; i < n; ++i) rel[i] = (mask >> i) & 1u;
      worst = std::max(worst, std::abs(average_precision(tied, rel) - testing::reference_ap(rel)));
      ++cases;
    }
  }
  return {worst <= 1e-12, std::to_string(cases) + " rankings of length <= 6, max deviation " + fmt("%.1e", worst)};
}

Outcome sweep_selects_planted() {
  auto f = testing::make_sweep_fixture(1);
  f.config.threads = 3;
  const auto result = topic_count_sweep(f.corpus.docs, f.corpus.vocab, f.pairs, f.probe, f.config);
  std::string detail = "best_K=" + std::to_string(result.best_k) + " (";
  for (const auto& p : result.points) {
    detail += "K" + std::to_string(p.num_topics) + "=" + fmt("%.4f", p.validation_map) + " ";
  }
  // Planted-structure precondition: held-out perplexity is lowest at K=4.
  const auto held = testing::make_heldout(f.corpus, f.spec, 200, 101);
  std::size_t best_pp_k = 0;
  double best_pp = 1e300;
  for (std::size_t K : {2, 4, 8}) {
    LdaOptions opt = f.config.lda;
    opt.num_topics = K;
    const double pp = perplexity(train_lda(f.corpus.docs, f.corpus.vocab, opt), held.docs).perplexity;
    detail += "pp" + std::to_string(K) + "=" + fmt("%.2f", pp) + " ";
    if (pp < best_pp) {
      best_pp = pp;
      best_pp_k = K;
    }
  }
  detail.back() = ')';
  return {result.best_k == 4 && best_pp_k == 4, detail};
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / ("ttn_acceptance_" + std::to_string(::getpid()));
  const auto a = testing::run_fixture_pipeline(TTN_TOOL_PATH, TTN_SOURCE_DIR, base / "a", 11);
  const auto b = testing::run_fixture_pipeline(TTN_TOOL_PATH, TTN_SOURCE_DIR, base / "b", 11);
  Outcome out;
  if (!a.failures.empty() || !b.failures.empty()) {
    out.detail = "pipeline failed: " + (a.failures.empty() ? b.failures.front() : a.failures.front());
    fs::remove_all(base);
    return out;
  }
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < a.outputs.size(); ++i) {
    if (slurp(a.outputs[i]) != slurp(b.outputs[i])) differing.push_back(a.outputs[i].filename().string());
  }
  out.pass = differing.empty() && a.outputs.size() == b.outputs.size() && a.outputs.size() == 13;
  out.detail = std::to_string(a.outputs.size()) + " output files over 11 subcommands, " +
               std::to_string(differing.size()) + " differ";
  for (const auto& d : differing) out.detail += " " + d;
  fs::remove_all(base);
  return out;
}

Outcome simplex_fuzz() {
  Rng rng(99);
  std::size_t cases = 0, bad = 0;
  const auto check = [&](const TopicDistribution& d) {
    double s = 0.0;
    bool ok = true;
    for (double v : d.values()) {
      if (!std::isfinite(v) || v < 0.0) ok = false;
      s += v;
    }
    if (!ok || std::abs(s - 1.0) > 1e-9) ++bad;
    ++cases;
  };

  // infer_topics against random models and documents.
  for (int t = 0; t < 4000; ++t) {
    TopicModel m;
    m.num_topics = 1 + rng.below(12);
    m.vocab_size = 1 + rng.below(30);
    m.alpha = std::pow(10.0, 2.0 * rng.uniform() - 1.5);
    m.eta = 0.01;
    for (std::size_t k = 0; k < m.num_topics; ++k) {
      std::vector<double> row(m.vocab_size);
      for (double& v : row) v = rng.uniform() < 0.3 ? 1e-300 : rng.uniform();
      const double s = std::accumulate(row.begin(), row.end(), 0.0);
      for (double v : row) m.phi.push_back(v / s);
    }
    BowDocument doc;
    for (std::size_t w = 0; w < m.vocab_size + 2; ++w) {
      if (rng.uniform() < 0.3) doc.counts.push_back({static_cast<std::uint32_t>(w), 1 + static_cast<std::uint32_t>(rng.below(9))});
    }
    check(infer_topics(m, doc, 1 + static_cast<int>(rng.below(20)), rng.next_u64()).theta);
  }

  // project_image through random nets with extreme weights and inputs.
  for (int t = 0; t < 4000; ++t) {
    std::vector<std::size_t> dims{1 + rng.below(10)};
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t l = 0; l < depth; ++l) dims.push_back(1 + rng.below(12));
    auto net = EmbedderNet::glorot(dims, rng.next_u64());
    const double gain = std::pow(10.0, 4.0 * rng.uniform() - 1.0);
    auto params = net.parameters();
    for (double& p : params) p *= gain;
    net.set_parameters(params);
    std::vector<double> x(dims.front());
    for (double& v : x) v = gain * rng.normal();
    check(project_image(net, x));
  }

  // smooth over sparse random distributions and epsilons.
  for (int t = 0; t < 4000; ++t) {
    const std::size_t k = 1 + rng.below(64);
    std::vector<double> w(k);
    for (double& v : w) v = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    w[rng.below(k)] += 1e-9;
    const double eps = (1e-12 + rng.uniform() * 0.999) / static_cast<double>(k);
    check(smooth(TopicDistribution::normalized(w), eps));
  }
  return {bad == 0 && cases >= 10000, std::to_string(cases) + " cases, " + std::to_string(bad) + " violations"};
}

Outcome default_parity() {
  std::vector<std::string> wrong;
  const auto expect = [&](bool ok, const char* what) {
    if (!ok) wrong.push_back(what);
  };
  expect(defaults::kMinDocCount == 20, "min_doc_count 20");
  expect(defaults::kMaxDocFraction == 0.5, "max_doc_fraction 0.5");
  expect(defaults::kNumTopics == 40, "topics 40");
  expect(LdaOptions{}.num_topics == 40, "LdaOptions topics 40");
  const TrainConfig cfg;
  expect(cfg.base_lr == 0.001, "base_lr 0.001");
  expect(cfg.lr_decay_factor == 0.1, "lr decay 0.1");
  expect(cfg.momentum == 0.9, "momentum 0.9");
  expect(cfg.batch_size == 128, "batch 128");
  expect(defaults::kTopN == 12, "top-n 12");
  expect(defaults::kTopWords == 5, "top words 5");
  expect(defaults::kMinWords == 50, "min words 50");

  const auto help = [](const std::string& sub) {
    return testing::run_command(testing::shell_quote(TTN_TOOL_PATH) + " " + sub + " --help").output;
  };
  const auto has = [](const std::string& text, const char* needle) { return text.find(needle) != std::string::npos; };
  const auto dict = help("build-dict");
  expect(has(dict, "--min-doc-count INT [20]"), "build-dict --min-doc-count [20]");
  expect(has(dict, "--max-doc-fraction FLOAT [0.5]"), "build-dict --max-doc-fraction [0.5]");
  expect(has(help("train-lda"), "--topics UINT [40]"), "train-lda --topics [40]");
  const auto emb = help("train-embedder");
  expect(has(emb, "--lr FLOAT [0.001]"), "train-embedder --lr [0.001]");
  expect(has(emb, "--lr-decay FLOAT [0.1]"), "train-embedder --lr-decay [0.1]");
  expect(has(emb, "--momentum FLOAT [0.9]"), "train-embedder --momentum [0.9]");
  expect(has(emb, "--batch UINT [128]"), "train-embedder --batch [128]");
  expect(has(help("retrieve"), "--top-n UINT [12]"), "retrieve --top-n [12]");

  std::string detail = "library constants and CLI --help defaults";
  for (const auto& w : wrong) detail += "; mismatch: " + w;
  return {wrong.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double time_limit;  // seconds, 0 = none
  };
  const std::vector<Criterion> criteria = {
      {1, "planted-topic recovery", planted_recovery, 30.0},
      {2, "perplexity sanity", perplexity_sanity, 0.0},
      {3, "gradient correctness", gradient_check, 10.0},
      {4, "realizable-regression floor", realizable_floor, 0.0},
      {5, "retrieval exactness", retrieval_exactness, 0.0},
      {6, "AP/mAP oracle equivalence", ap_oracle, 0.0},
      {7, "end-to-end sweep protocol", sweep_selects_planted, 300.0},
      {8, "determinism", determinism, 0.0},
      {9, "simplex invariant suite", simplex_fuzz, 0.0},
      {10, "default parity", default_parity, 0.0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2fs", secs);
    if (c.time_limit > 0) {
      timing += fmt(" of %.0fs", c.time_limit);
      if (secs >= c.time_limit) {
        out.pass = false;
        out.detail += "; over time limit";
      }
    }
    if (!out.pass) ++failed;
    std::printf("%s criterion %d %s: %s [%s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
