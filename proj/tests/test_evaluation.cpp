#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "synthetic.hpp"
#include "ttn/evaluation.hpp"
#include "ttn/jsonl.hpp"
#include "ttn/rng.hpp"

using namespace ttn;

namespace {

ProbeData split(std::vector<LabeledVector> rows) {
  ProbeData data;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (i % 5 < 3 ? data.train : i % 5 == 3 ? data.validation : data.test).push_back(std::move(rows[i]));
  }
  return data;
}

// Expected AP of a uniformly random ranking of the test split, per class.
double permutation_null(const std::vector<LabeledVector>& test, const std::vector<std::string>& classes) {
  Rng rng(1234);
  double total = 0.0;
  const int draws = 2000;
  for (const auto& c : classes) {
    std::vector<bool> rel;
    for (const auto& row : test) rel.push_back(row.label == c);
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) {
      rng.shuffle(rel);
      sum += testing::reference_ap(rel);
    }
    total += sum / draws;
  }
  return total / static_cast<double>(classes.size());
}

}  // namespace

TEST_CASE("average precision examples") {
  const std::vector<double> perfect{0.9, 0.8, 0.1};
  CHECK(average_precision(perfect, {true, true, false}) == 1.0);

  for (std::size_t n = 1; n <= 20; ++n) {
    std::vector<double> scores(n);
    std::vector<bool> rel(n, false);
    for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(n - i);
    rel[n - 1] = true;
    CHECK(average_precision(scores, rel) == doctest::Approx(1.0 / static_cast<double>(n)));
  }

  // Ties keep input order.
  const std::vector<double> tied{1, 1};
  CHECK(average_precision(tied, {false, true}) == doctest::Approx(0.5));
  CHECK(average_precision(tied, {true, false}) == doctest::Approx(1.0));

  CHECK_THROWS_AS(average_precision(perfect, {false, false, false}), std::invalid_argument);
  CHECK_THROWS_AS(average_precision(perfect, {true, false}), DimensionError);
}

TEST_CASE("average precision Monte-Carlo null") {
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    std::vector<double> scores(100);
    for (double& s : scores) s = rng.uniform();
    std::vector<bool> rel(100);
    for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = i % 2 == 0;
    sum += average_precision(scores, rel);
  }
  CHECK(std::abs(sum / 1000.0 - 0.5) <= 0.05);
}

TEST_CASE("average precision is invariant under monotone transforms") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> scores(n);
    std::vector<bool> rel(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.normal();
      rel[i] = rng.uniform() < 0.4;
    }
    rel[rng.below(n)] = true;
    std::vector<double> transformed;
    for (double s : scores) transformed.push_back(std::exp(3.0 * s) + 7.0);
    CHECK(average_precision(scores, rel) == doctest::Approx(average_precision(transformed, rel)).epsilon(1e-15));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    std::vector<bool> ranked;
    for (auto i : order) ranked.push_back(rel[i]);
    CHECK(average_precision(scores, rel) == doctest::Approx(testing::reference_ap(ranked)).epsilon(1e-12));
  }
}

TEST_CASE("hinge classifier separates a margin problem") {
  const std::vector<std::vector<double>> x{{2, 0}, {3, 1}, {2.5, -1}, {-2, 0}, {-3, 1}, {-2.5, -1}};
  const std::vector<int> y{1, 1, 1, -1, -1, -1};
  const auto m = train_hinge_l2(x, y, 0.01, 50, 1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(m.decision(x[i]) * y[i] > 0);
  CHECK(train_hinge_l2(x, y, 0.01, 50, 1).weights == m.weights);
  const std::vector<int> bad{1, 1, 1, -1, -1, 0};
  CHECK_THROWS(train_hinge_l2(x, bad, 0.01, 5, 1));
  CHECK_THROWS(train_hinge_l2(x, y, 0.0, 5, 1));
}

TEST_CASE("linear probe on separable blobs") {
  const std::vector<std::string> classes{"left", "right"};
  const auto data = split(testing::make_blobs(100, 4, classes, 12.0, 3));
  const auto result = train_linear_probe(data, classes, defaults::kRegGrid, 5);
  CHECK(result.mean_ap >= 0.99);
  CHECK(result.per_class_ap.size() == 2);
  double sum = 0.0;
  for (const auto& [c, ap] : result.per_class_ap) sum += ap;
  CHECK(result.mean_ap == doctest::Approx(sum / 2.0).epsilon(1e-15));
  CHECK(result.warnings.empty());
}

TEST_CASE("linear probe on shuffled labels stays near the prior") {
  const std::vector<std::string> classes{"left", "right"};
  auto rows = testing::make_blobs(100, 4, classes, 12.0, 3);
  std::vector<std::string> labels;
  for (const auto& r : rows) labels.push_back(r.label);
  Rng rng(77);
  rng.shuffle(labels);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].label = labels[i];
  const auto data = split(rows);
  const auto result = train_linear_probe(data, classes, defaults::kRegGrid, 5);
  double prior = 0.0;
  for (const auto& c : classes) {
    const auto n = std::count_if(data.test.begin(), data.test.end(), [&](const auto& r) { return r.label == c; });
    prior += static_cast<double>(n) / static_cast<double>(data.test.size());
  }
  prior /= 2.0;
  CHECK(std::abs(result.mean_ap - prior) <= 0.1);
}

TEST_CASE("probe on an untrained zero-weight embedder matches the permutation null") {
  const auto f = testing::make_sweep_fixture(3);
  const auto net = EmbedderNet::zeros({16, 8, 4});
  ProbeData data = f.probe;
  for (auto* part : {&data.train, &data.validation, &data.test}) {
    for (auto& row : *part) row.x = probe_representation(net, row.x, std::nullopt);
  }
  const auto classes = probe_classes(data);
  const auto result = train_linear_probe(data, classes, defaults::kRegGrid, 1);
  CHECK(std::abs(result.mean_ap - permutation_null(data.test, classes)) <= 0.1);
}

TEST_CASE("single grid value and skipped classes") {
  const std::vector<std::string> classes{"a", "b", "c"};
  auto data = split(testing::make_blobs(30, 3, classes, 6.0, 9));
  const std::vector<double> grid{0.1};
  const auto result = train_linear_probe(data, classes, grid, 2);
  for (const auto& [c, v] : result.best_hyperparams) CHECK(v == 0.1);
  CHECK(result.best_hyperparams.size() == 3);

  std::erase_if(data.validation, [](const auto& r) { return r.label == "c"; });
  const auto skipped = train_linear_probe(data, classes, grid, 2);
  CHECK(skipped.per_class_ap.size() == 2);
  CHECK(skipped.warnings.size() == 1);

  const std::vector<std::string> missing{"a", "zzz"};
  CHECK(train_linear_probe(data, missing, grid, 2).warnings.size() == 1);
  CHECK(probe_classes(data) == classes);

  ProbeData no_val = data;
  no_val.validation.clear();
  CHECK_THROWS(train_linear_probe(no_val, classes, grid, 2));
}

TEST_CASE("probe threading does not change results") {
  const std::vector<std::string> classes{"a", "b", "c"};
  const auto data = split(testing::make_blobs(40, 3, classes, 3.0, 4));
  ProbeOptions serial, parallel;
  parallel.threads = 3;
  const auto a = train_linear_probe(data, classes, defaults::kRegGrid, 8, serial);
  const auto b = train_linear_probe(data, classes, defaults::kRegGrid, 8, parallel);
  CHECK(a.per_class_ap == b.per_class_ap);
  CHECK(a.best_hyperparams == b.best_hyperparams);
}

TEST_CASE("sweep with a single topic count") {
  auto f = testing::make_sweep_fixture(2);
  f.config.topic_counts = {4};
  f.config.lda.iters = 20;
  f.config.embedder.max_iters = 100;
  const auto result = topic_count_sweep(f.corpus.docs, f.corpus.vocab, f.pairs, f.probe, f.config);
  CHECK(result.best_k == 4);
  REQUIRE(result.points.size() == 1);
}

TEST_CASE("planted four-topic sweep selects K=4 deterministically") {
  auto f = testing::make_sweep_fixture(1);
  f.config.threads = 3;
  const auto a = topic_count_sweep(f.corpus.docs, f.corpus.vocab, f.pairs, f.probe, f.config);
  CHECK(a.best_k == 4);
  f.config.threads = 1;
  const auto b = topic_count_sweep(f.corpus.docs, f.corpus.vocab, f.pairs, f.probe, f.config);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].num_topics == b.points[i].num_topics);
    CHECK(a.points[i].validation_map == b.points[i].validation_map);
  }
  std::ostringstream sa, sb;
  write_sweep_report(sa, a);
  write_sweep_report(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().find("#best_K=4\n") != std::string::npos);
}

TEST_CASE("sweep rejects pairs for unknown documents") {
  auto f = testing::make_sweep_fixture(2);
  f.pairs.push_back({"ghost", std::vector<double>(16, 0.0)});
  CHECK_THROWS(topic_count_sweep(f.corpus.docs, f.corpus.vocab, f.pairs, f.probe, f.config));
  f.pairs.pop_back();
  f.config.topic_counts.clear();
  CHECK_THROWS(topic_count_sweep(f.corpus.docs, f.corpus.vocab, f.pairs, f.probe, f.config));
}

TEST_CASE("probe report format") {
  ProbeResult r;
  r.per_class_ap = {{"a", 0.5}};
  r.mean_ap = 0.5;
  r.best_hyperparams = {{"a", 0.1}};
  std::ostringstream out;
  write_probe_report(out, r);
  const auto j = io::Json::parse(out.str());
  CHECK(j["mean_ap"] == 0.5);
  CHECK(j["grid"]["a"] == 0.1);
}
