#include "ttn/corpus.hpp"

#include <locale.h>
#include <wctype.h>

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ttn/error.hpp"
#include "ttn/jsonl.hpp"
#include "ttn/rng.hpp"

namespace ttn {

namespace {

locale_t utf8_ctype() {
  static const locale_t loc = [] {
    locale_t l = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(nullptr));
    if (l == static_cast<locale_t>(nullptr)) {
      l = newlocale(LC_CTYPE_MASK, "en_US.UTF-8", static_cast<locale_t>(nullptr));
    }
    return l;
  }();
  return loc;
}

bool is_alpha(char32_t cp) {
  if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  locale_t loc = utf8_ctype();
  if (loc == static_cast<locale_t>(nullptr)) return false;
  return iswalpha_l(static_cast<wint_t>(cp), loc) != 0;
}

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + ('a' - 'A') : cp;
  locale_t loc = utf8_ctype();
  if (loc == static_cast<locale_t>(nullptr)) return cp;
  return static_cast<char32_t>(towlower_l(static_cast<wint_t>(cp), loc));
}

// Decodes one code point at text[pos]; returns U+FFFD-like sentinel 0xFFFFFFFF
// on malformed input and advances by one byte.
char32_t decode_utf8(std::string_view text, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) {
    ++pos;
    return lead;
  }
  std::size_t len;
  char32_t cp;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    ++pos;
    return 0xFFFFFFFF;
  }
  if (pos + len > text.size()) {
    ++pos;
    return 0xFFFFFFFF;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFFFFFF;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  static constexpr char32_t kMinForLen[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMinForLen[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return 0xFFFFFFFF;
  }
  pos += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = decode_utf8(text, pos);
    if (cp != 0xFFFFFFFF && is_alpha(cp)) {
      append_utf8(current, to_lower(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> normalize_text(std::string_view text, const StopWords& stopwords,
                                        const TokenNormalizer& normalizer) {
  std::vector<std::string> out;
  for (auto& token : tokenize(text)) {
    if (stopwords.contains(token)) continue;
    std::string normal = normalizer ? normalizer(token) : std::move(token);
    if (!normal.empty()) out.push_back(std::move(normal));
  }
  return out;
}

ValidityReport validate_pair(const RawDocument& doc, int min_words, int min_image_px) {
  ValidityReport report;
  report.too_few_words = doc.word_count < static_cast<std::size_t>(std::max(min_words, 0));
  report.no_images = doc.feature_refs.empty();
  report.usable_images = doc.feature_refs.size();
  if (doc.image_px) {
    std::size_t undersized = 0;
    for (int px : *doc.image_px) {
      if (px < min_image_px) ++undersized;
    }
    report.undersized_image = undersized > 0;
    report.usable_images = report.usable_images > undersized ? report.usable_images - undersized : 0;
  }
  return report;
}

std::vector<RawDocument> read_corpus(std::istream& in, const std::string& name) {
  std::vector<RawDocument> docs;
  std::unordered_set<std::string> seen;
  io::for_each_jsonl(in, name, [&](const io::Json& obj, std::size_t) {
    RawDocument doc;
    doc.doc_id = io::require_string(obj, "id");
    if (doc.doc_id.empty()) throw std::invalid_argument("empty document id");
    if (!seen.insert(doc.doc_id).second) {
      throw std::invalid_argument("duplicate document id '" + doc.doc_id + "'");
    }
    doc.text = io::require_string(obj, "text");
    if (auto it = obj.find("features"); it != obj.end() && !it->is_null()) {
      doc.feature_refs = it->get<std::vector<std::string>>();
    }
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      doc.class_label = it->get<std::string>();
    }
    if (auto it = obj.find("image_px"); it != obj.end() && !it->is_null()) {
      doc.image_px = it->get<std::vector<int>>();
      if (doc.image_px->size() != doc.feature_refs.size()) {
        throw std::invalid_argument("image_px length does not match features");
      }
    }
    doc.word_count = tokenize(doc.text).size();
    docs.push_back(std::move(doc));
  });
  return docs;
}

std::vector<RawDocument> read_corpus(const std::string& path) {
  auto in = io::open_input(path);
  return read_corpus(in, path);
}

void write_corpus(std::ostream& out, std::span<const RawDocument> docs) {
  for (const auto& doc : docs) {
    io::Json obj;
    obj["id"] = doc.doc_id;
    obj["text"] = doc.text;
    obj["features"] = doc.feature_refs;
    obj["label"] = doc.class_label ? io::Json(*doc.class_label) : io::Json(nullptr);
    obj["image_px"] = doc.image_px ? io::Json(*doc.image_px) : io::Json(nullptr);
    io::write_jsonl_line(out, obj);
  }
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> docs, int min_doc_count,
                             double max_doc_fraction) {
  if (min_doc_count < 1) throw std::invalid_argument("min_doc_count must be >= 1");
  if (!(max_doc_fraction > 0.0 && max_doc_fraction <= 1.0)) {
    throw std::invalid_argument("max_doc_fraction must be in (0, 1]");
  }
  // Ordered map gives the lexicographic index order directly.
  std::map<std::string, std::size_t> doc_freq;
  for (const auto& tokens : docs) {
    std::vector<std::string_view> unique(tokens.begin(), tokens.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (auto word : unique) ++doc_freq[std::string(word)];
  }

  Vocabulary vocab;
  vocab.total_docs_ = docs.size();
  vocab.min_doc_count_ = min_doc_count;
  vocab.max_doc_fraction_ = max_doc_fraction;
  // Relative slack so that e.g. 0.29 * 100 still admits 29.
  const double upper = max_doc_fraction * static_cast<double>(docs.size()) * (1.0 + 1e-12);
  for (const auto& [word, df] : doc_freq) {
    if (df < static_cast<std::size_t>(min_doc_count)) continue;
    if (static_cast<double>(df) > upper) continue;
    vocab.words_.push_back(word);
    vocab.doc_freq_.push_back(df);
  }
  if (vocab.words_.empty()) {
    throw EmptyVocabularyError("vocabulary is empty: no word of " + std::to_string(doc_freq.size()) +
                               " distinct words across " + std::to_string(docs.size()) +
                               " documents satisfies min_doc_count=" +
                               std::to_string(min_doc_count) +
                               " and max_doc_fraction=" + std::to_string(max_doc_fraction));
  }
  vocab.index_words();
  return vocab;
}

void Vocabulary::index_words() {
  index_.clear();
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

std::optional<std::size_t> Vocabulary::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::fingerprint() const {
  std::string joined;
  for (const auto& w : words_) {
    joined += w;
    joined += '\n';
  }
  return hex64(fnv1a64(joined));
}

void Vocabulary::write_tsv(std::ostream& out) const {
  out << "#total_docs=" << total_docs_ << '\n';
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i] << '\t' << i << '\t' << doc_freq_[i] << '\n';
  }
}

void Vocabulary::write_tsv(const std::string& path) const {
  auto out = io::open_output(path);
  write_tsv(out);
}

Vocabulary Vocabulary::read_tsv(std::istream& in, const std::string& name) {
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      const std::string prefix = "#total_docs=";
      if (line.rfind(prefix, 0) != 0) throw FormatError(name, line_no, "expected '#total_docs=<n>' header");
      try {
        std::size_t used = 0;
        vocab.total_docs_ = std::stoull(line.substr(prefix.size()), &used);
        if (used != line.size() - prefix.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw FormatError(name, line_no, "invalid total_docs value");
      }
      have_header = true;
      continue;
    }
    std::istringstream fields(line);
    std::string word, index_str, df_str, extra;
    if (!std::getline(fields, word, '\t') || !std::getline(fields, index_str, '\t') ||
        !std::getline(fields, df_str, '\t') || std::getline(fields, extra, '\t')) {
      throw FormatError(name, line_no, "expected 'word<TAB>index<TAB>doc_freq'");
    }
    std::size_t index = 0, df = 0;
    try {
      index = std::stoull(index_str);
      df = std::stoull(df_str);
    } catch (const std::exception&) {
      throw FormatError(name, line_no, "non-numeric index or doc_freq");
    }
    if (index != vocab.words_.size()) {
      throw FormatError(name, line_no, "indices must be dense and ascending");
    }
    if (word.empty()) throw FormatError(name, line_no, "empty word");
    vocab.words_.push_back(std::move(word));
    vocab.doc_freq_.push_back(df);
  }
  if (!have_header) throw FormatError(name, line_no, "missing '#total_docs=<n>' header");
  vocab.index_words();
  if (vocab.index_.size() != vocab.words_.size()) {
    throw FormatError(name, line_no, "duplicate words in vocabulary");
  }
  return vocab;
}

Vocabulary Vocabulary::read_tsv(const std::string& path) {
  auto in = io::open_input(path);
  return read_tsv(in, path);
}

std::size_t BowDocument::total_tokens() const {
  std::size_t total = 0;
  for (const auto& wc : counts) total += wc.count;
  return total;
}

BowDocument vectorize(std::span<const std::string> tokens, const Vocabulary& vocab, std::string doc_id,
                      std::optional<std::string> class_label) {
  std::map<std::uint32_t, std::uint32_t> counts;
  for (const auto& token : tokens) {
    if (auto index = vocab.lookup(token)) ++counts[static_cast<std::uint32_t>(*index)];
  }
  BowDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.class_label = std::move(class_label);
  doc.counts.reserve(counts.size());
  for (const auto& [word, count] : counts) doc.counts.push_back({word, count});
  return doc;
}

std::vector<std::vector<std::string>> normalize_documents(std::span<const RawDocument> docs,
                                                          const StopWords& stopwords,
                                                          const TokenNormalizer& normalizer,
                                                          unsigned threads) {
  std::vector<std::vector<std::string>> out(docs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(docs.size(), 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < docs.size(); ++i) out[i] = normalize_text(docs[i].text, stopwords, normalizer);
    return out;
  }
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (std::size_t i = t; i < docs.size(); i += threads) {
          out[i] = normalize_text(docs[i].text, stopwords, normalizer);
        }
      });
    }
  }
  return out;
}

}  // namespace ttn
