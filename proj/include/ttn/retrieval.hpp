#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttn/defaults.hpp"
#include "ttn/topicmodel.hpp"

namespace ttn {

enum class Modality { Text, Image };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

/// KL(p || q) = sum_k p_k log(p_k / q_k), with 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const TopicDistribution& p, const TopicDistribution& q);

/// (dist + epsilon) renormalized. Requires 0 < epsilon < 1/K.
TopicDistribution smooth(const TopicDistribution& dist, double epsilon);

struct IndexEntry {
  std::string id;
  Modality modality = Modality::Text;
  TopicDistribution dist;
  std::optional<std::string> label;
};

struct Hit {
  std::string id;
  double divergence = 0.0;
  std::optional<std::string> label;
};

/// Immutable set of topic distributions searched by exhaustive scan.
/// Entries are epsilon-smoothed on construction; queries are smoothed with
/// the same epsilon and ranked by KL(query || entry).
class TopicIndex {
 public:
  static TopicIndex build(std::vector<IndexEntry> entries, double epsilon = defaults::kEpsilon);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_topics() const { return num_topics_; }
  double epsilon() const { return epsilon_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const IndexEntry* find(std::string_view id) const;
  std::size_t count(Modality modality) const;

  /// Ascending divergence, ties by id; at most top_n hits.
  std::vector<Hit> query(const TopicDistribution& q, Modality target, std::size_t top_n = defaults::kTopN) const;

 private:
  std::vector<IndexEntry> entries_;
  std::size_t num_topics_ = 0;
  double epsilon_ = defaults::kEpsilon;
};

struct MapReport {
  double mean_ap = 0.0;
  std::vector<std::optional<double>> per_query_ap;  // nullopt: no relevant entries
  std::size_t excluded = 0;
};

/// AP of each ranked label list against its query label (relevant = equal
/// label), averaged over queries that have at least one relevant entry.
MapReport mean_average_precision(std::span<const std::vector<std::string>> rankings,
                                 std::span<const std::string> query_labels);

/// Index JSON Lines {"id", "modality", "dist", "label"}. Distributions are
/// stored as given; smoothing happens in TopicIndex::build.
std::vector<IndexEntry> read_index_entries(std::istream& in, const std::string& name);
std::vector<IndexEntry> read_index_entries(const std::string& path);
void write_index_entries(std::ostream& out, std::span<const IndexEntry> entries);

}  // namespace ttn
