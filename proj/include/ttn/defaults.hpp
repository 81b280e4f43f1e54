#pragma once

#include <array>
#include <cstddef>

// Built-in defaults shared by the library, the CLI and the Python module.
namespace ttn::defaults {

// Vocabulary filtering: drop words in fewer than 20 documents or in more
// than half of them.
inline constexpr int kMinDocCount = 20;
inline constexpr double kMaxDocFraction = 0.5;

// Ingestion validity checks.
inline constexpr int kMinWords = 50;
inline constexpr int kMinImagePx = 256;

// Topic model.
inline constexpr int kNumTopics = 40;
inline constexpr double kEta = 0.01;
inline constexpr int kLdaIters = 1000;
inline constexpr int kInferIters = 100;
inline constexpr double alpha_for(int num_topics) { return 50.0 / num_topics; }

inline constexpr std::size_t kTopWords = 5;

// Embedder optimizer.
inline constexpr double kBaseLr = 0.001;
inline constexpr double kLrDecayFactor = 0.1;
inline constexpr long kLrDecayEvery = 250000;
inline constexpr double kMomentum = 0.9;
inline constexpr std::size_t kBatchSize = 128;
inline constexpr long kEmbedderIters = 10000;

// Retrieval.
inline constexpr std::size_t kTopN = 12;
inline constexpr double kEpsilon = 1e-6;

// Linear probe.
inline constexpr std::array<double, 5> kRegGrid = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
inline constexpr int kProbeEpochs = 60;

// Topic-count sweep.
inline constexpr std::array<int, 7> kSweepTopics = {10, 20, 40, 60, 80, 100, 120};

inline constexpr unsigned long long kSeed = 0;

}  // namespace ttn::defaults
