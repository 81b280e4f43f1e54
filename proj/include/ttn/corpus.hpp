#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ttn/defaults.hpp"

namespace ttn {

using StopWords = std::unordered_set<std::string>;

/// Maps a lowercased token to its normalized form. An empty result drops
/// the token.
using TokenNormalizer = std::function<std::string(std::string_view)>;

/// Porter (1980) suffix-stripping stemmer. Tokens containing anything other
/// than ASCII lowercase letters are returned unchanged.
std::string porter_stem(std::string_view word);

/// The bundled English stop-word list (same content as data/stopwords_en.txt).
const StopWords& default_stopwords();

/// One word per line; blank lines and lines starting with '#' are ignored.
StopWords read_stopwords(const std::string& path);

/// Splits UTF-8 text on runs of non-alphabetic code points and lowercases
/// each run with simple case folding. Invalid UTF-8 bytes act as separators.
std::vector<std::string> tokenize(std::string_view text);

/// tokenize, drop stop-words, then normalize each surviving token.
std::vector<std::string> normalize_text(std::string_view text, const StopWords& stopwords,
                                        const TokenNormalizer& normalizer = porter_stem);

struct RawDocument {
  std::string doc_id;
  std::string text;
  std::vector<std::string> feature_refs;
  std::optional<std::string> class_label;
  // Pixel size of each referenced image, aligned with feature_refs.
  std::optional<std::vector<int>> image_px;
  // Alphabetic words in text, before stop-word removal.
  std::size_t word_count = 0;
};

struct ValidityReport {
  bool too_few_words = false;
  bool no_images = false;
  bool undersized_image = false;
  std::size_t usable_images = 0;

  /// Enough words and at least one image that is not undersized.
  bool usable() const { return !too_few_words && !no_images && usable_images > 0; }
};

ValidityReport validate_pair(const RawDocument& doc, int min_words = defaults::kMinWords,
                             int min_image_px = defaults::kMinImagePx);

/// Reads the corpus JSON Lines format. Fails on duplicate or empty ids.
std::vector<RawDocument> read_corpus(const std::string& path);
std::vector<RawDocument> read_corpus(std::istream& in, const std::string& name);
void write_corpus(std::ostream& out, std::span<const RawDocument> docs);

/// Immutable word <-> index map with document-frequency metadata.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Keeps words with min_doc_count <= doc_freq <= max_doc_fraction * docs,
  /// in lexicographic order. Throws EmptyVocabularyError if nothing survives.
  static Vocabulary build(std::span<const std::vector<std::string>> docs,
                          int min_doc_count = defaults::kMinDocCount,
                          double max_doc_fraction = defaults::kMaxDocFraction);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::string& word(std::size_t index) const { return words_.at(index); }
  const std::vector<std::string>& words() const { return words_; }
  std::size_t doc_freq(std::size_t index) const { return doc_freq_.at(index); }
  std::size_t total_docs() const { return total_docs_; }
  int min_doc_count() const { return min_doc_count_; }
  double max_doc_fraction() const { return max_doc_fraction_; }

  std::optional<std::size_t> lookup(std::string_view word) const;

  /// Hex FNV-1a digest of the ordered word list.
  std::string fingerprint() const;

  /// TSV: `#total_docs=<n>` header, then `word \t index \t doc_freq`.
  void write_tsv(std::ostream& out) const;
  void write_tsv(const std::string& path) const;
  /// Thresholds are not stored in the file; they read back as (1, 1.0).
  static Vocabulary read_tsv(std::istream& in, const std::string& name);
  static Vocabulary read_tsv(const std::string& path);

  bool operator==(const Vocabulary& other) const {
    return words_ == other.words_ && doc_freq_ == other.doc_freq_ &&
           total_docs_ == other.total_docs_;
  }

 private:
  void index_words();

  std::vector<std::string> words_;
  std::vector<std::size_t> doc_freq_;
  std::size_t total_docs_ = 0;
  int min_doc_count_ = 1;
  double max_doc_fraction_ = 1.0;
  std::unordered_map<std::string, std::size_t> index_;
};

struct WordCount {
  std::uint32_t word;
  std::uint32_t count;

  bool operator==(const WordCount&) const = default;
};

/// Sparse bag of words; entries sorted by word index, counts positive.
struct BowDocument {
  std::string doc_id;
  std::vector<WordCount> counts;
  std::optional<std::string> class_label;

  std::size_t total_tokens() const;
  bool empty() const { return counts.empty(); }
};

/// Out-of-vocabulary tokens are dropped.
BowDocument vectorize(std::span<const std::string> tokens, const Vocabulary& vocab,
                      std::string doc_id = {}, std::optional<std::string> class_label = {});

}  // namespace ttn

namespace ttn {

/// normalize_text over every document, optionally across worker threads
/// (0 = hardware concurrency). Output order matches input order. The
/// normalizer must be safe to call concurrently.
std::vector<std::vector<std::string>> normalize_documents(std::span<const RawDocument> docs,
                                                          const StopWords& stopwords,
                                                          const TokenNormalizer& normalizer = porter_stem,
                                                          unsigned threads = 1);

}  // namespace ttn
