#include "ttn/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "ttn/error.hpp"
#include "ttn/jsonl.hpp"

namespace ttn {

std::string_view to_string(Modality m) { return m == Modality::Text ? "text" : "image"; }

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  throw std::invalid_argument("modality must be 'text' or 'image', got '" + std::string(s) + "'");
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("KL divergence between distributions of size " + std::to_string(p.size()) + " and " +
                         std::to_string(q.size()));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) total += p[k] * std::log(p[k] / q[k]);
  }
  // Rounding can leave a tiny negative value for nearly identical inputs.
  return std::max(total, 0.0);
}

double kl_divergence(const TopicDistribution& p, const TopicDistribution& q) {
  return kl_divergence(p.probs(), q.probs());
}

TopicDistribution smooth(const TopicDistribution& dist, double epsilon) {
  const double k = static_cast<double>(dist.size());
  if (!(epsilon > 0.0 && epsilon * k < 1.0)) {
    throw std::invalid_argument("epsilon must lie in (0, 1/K)");
  }
  std::vector<double> out(dist.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dist[i] + epsilon;
  return TopicDistribution::normalized(std::move(out));
}

TopicIndex TopicIndex::build(std::vector<IndexEntry> entries, double epsilon) {
  TopicIndex index;
  index.epsilon_ = epsilon;
  std::unordered_set<std::string> seen;
  for (auto& e : entries) {
    if (e.id.empty()) throw std::invalid_argument("index entry with an empty id");
    if (!seen.insert(e.id).second) throw std::invalid_argument("duplicate index entry id '" + e.id + "'");
    if (index.num_topics_ == 0) index.num_topics_ = e.dist.size();
    if (e.dist.size() != index.num_topics_) {
      throw DimensionError("entry '" + e.id + "' has " + std::to_string(e.dist.size()) + " topics, index has " +
                           std::to_string(index.num_topics_));
    }
    e.dist = smooth(e.dist, epsilon);
  }
  index.entries_ = std::move(entries);
  return index;
}

const IndexEntry* TopicIndex::find(std::string_view id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

std::size_t TopicIndex::count(Modality modality) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const IndexEntry& e) { return e.modality == modality; }));
}

std::vector<Hit> TopicIndex::query(const TopicDistribution& q, Modality target, std::size_t top_n) const {
  if (q.size() != num_topics_) {
    throw DimensionError("query has " + std::to_string(q.size()) + " topics, index has " +
                         std::to_string(num_topics_));
  }
  const TopicDistribution qs = smooth(q, epsilon_);
  std::vector<Hit> hits;
  for (const auto& e : entries_) {
    if (e.modality != target) continue;
    hits.push_back({e.id, kl_divergence(qs, e.dist), e.label});
  }
  if (hits.empty()) throw Error("index has no " + std::string(to_string(target)) + " entries");
  const auto before = [](const Hit& a, const Hit& b) {
    if (a.divergence != b.divergence) return a.divergence < b.divergence;
    return a.id < b.id;
  };
  const std::size_t n = std::min(top_n, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), before);
  hits.resize(n);
  return hits;
}

MapReport mean_average_precision(std::span<const std::vector<std::string>> rankings,
                                 std::span<const std::string> query_labels) {
  if (rankings.size() != query_labels.size()) throw DimensionError("one query label per ranking is required");
  MapReport report;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& ranking = rankings[q];
    if (ranking.empty()) throw std::invalid_argument("ranking " + std::to_string(q) + " is empty");
    double precision_sum = 0.0;
    std::size_t relevant = 0;
    for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
      if (ranking[pos] == query_labels[q]) {
        ++relevant;
        precision_sum += static_cast<double>(relevant) / static_cast<double>(pos + 1);
      }
    }
    if (relevant == 0) {
      report.per_query_ap.push_back(std::nullopt);
      ++report.excluded;
      continue;
    }
    const double ap = precision_sum / static_cast<double>(relevant);
    report.per_query_ap.push_back(ap);
    sum += ap;
    ++used;
  }
  if (used == 0) throw Error("no query has a relevant entry; mAP is undefined");
  report.mean_ap = sum / static_cast<double>(used);
  return report;
}

std::vector<IndexEntry> read_index_entries(std::istream& in, const std::string& name) {
  std::vector<IndexEntry> entries;
  io::for_each_jsonl(in, name, [&](const io::Json& obj, std::size_t) {
    IndexEntry e;
    e.id = io::require_string(obj, "id");
    e.modality = parse_modality(io::require_string(obj, "modality"));
    auto probs = io::require(obj, "dist").get<std::vector<double>>();
    double total = 0.0;
    for (double p : probs) total += p;
    if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("dist does not sum to 1");
    e.dist = TopicDistribution::normalized(std::move(probs));
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) e.label = it->get<std::string>();
    entries.push_back(std::move(e));
  });
  return entries;
}

std::vector<IndexEntry> read_index_entries(const std::string& path) {
  auto in = io::open_input(path);
  return read_index_entries(in, path);
}

void write_index_entries(std::ostream& out, std::span<const IndexEntry> entries) {
  for (const auto& e : entries) {
    io::Json obj;
    obj["id"] = e.id;
    obj["modality"] = to_string(e.modality);
    obj["dist"] = e.dist.values();
    obj["label"] = e.label ? io::Json(*e.label) : io::Json(nullptr);
    io::write_jsonl_line(out, obj);
  }
}

}  // namespace ttn
