#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the path and 1-based line number.
class FormatError : public Error {
 public:
  FormatError(std::string path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// Vocabulary thresholds removed every word of the corpus.
class EmptyVocabularyError : public Error {
 public:
  using Error::Error;
};

/// A document has no in-vocabulary tokens where at least one is required.
class EmptyDocumentError : public Error {
 public:
  explicit EmptyDocumentError(std::string doc_id)
      : Error("document '" + doc_id + "' has no in-vocabulary tokens"),
        doc_id_(std::move(doc_id)) {}

  const std::string& doc_id() const noexcept { return doc_id_; }

 private:
  std::string doc_id_;
};

/// Vector or matrix shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Embedder training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(long iteration)
      : Error("non-finite loss at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace ttn
