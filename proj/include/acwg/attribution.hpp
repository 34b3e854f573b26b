#pragma once

// Integrated-gradients token attribution and corpus-level candidate mining.

#include "acwg/classifier.hpp"
#include "acwg/corpus.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace acwg {

inline constexpr int kDefaultIgSteps = 50;
inline constexpr double kDefaultCandidateFraction = 0.2;

struct AttributionRecord {
  std::string sample_id;
  std::vector<std::string> tokens;
  std::vector<int> token_ids;
  Eigen::MatrixXd vectors;    // len x embed_dim, one IG vector per token
  std::vector<double> norms;  // L2 norm of each row of `vectors`
  int steps = 0;
};

/// Right-endpoint Riemann sum of integrated gradients from the all-zero
/// baseline: for j = 1..m every token embedding is scaled by j/m jointly, the
/// gradient of `selector` is taken at that point, and the averaged gradient is
/// multiplied elementwise by the input embedding.
/// Throws ContractError for steps < 1, NumericError naming the failing step.
AttributionRecord integrated_gradients(const ClassifierParams& model, const TokenizedSample& sample, int steps,
                                       const OutputSelector& selector);

/// Attributes every sample against the probability of its own label.
std::vector<AttributionRecord> attribute_corpus(const ClassifierParams& model,
                                                std::span<const TokenizedSample> samples, int steps,
                                                Exec exec = Exec::parallel);

struct CorpusScore {
  std::string word;
  double score = 0.0;      // mean attribution norm over all occurrences
  std::int64_t freq = 0;   // number of occurrences in the training corpus
};

/// Per-word mean attribution norms, sorted by word for stable output.
struct CorpusScoreTable {
  std::vector<CorpusScore> entries;

  const CorpusScore* find(std::string_view word) const;
};

/// Averages token norms per vocabulary word. Reserved/unknown tokens are
/// skipped. Throws DataError when a word's occurrence count disagrees with
/// the vocabulary frequency (the records must cover the whole training corpus).
CorpusScoreTable compute_corpus_scores(std::span<const AttributionRecord> records, const Vocabulary& vocab);

class CandidateSet {
 public:
  CandidateSet() = default;
  explicit CandidateSet(std::vector<CorpusScore> ranked);

  /// Candidates in selection order.
  const std::vector<CorpusScore>& ranked() const noexcept { return ranked_; }
  bool contains(std::string_view word) const { return members_.count(std::string(word)) > 0; }
  std::size_t size() const noexcept { return ranked_.size(); }

 private:
  std::vector<CorpusScore> ranked_;
  std::unordered_set<std::string> members_;
};

/// Keeps the top ceil(fraction * n) words by score (ties: higher frequency,
/// then lexicographic). Throws ContractError unless 0 < fraction <= 1 and
/// the table is non-empty.
CandidateSet select_candidates(const CorpusScoreTable& table, double fraction = kDefaultCandidateFraction);

/// Distinct candidate words of one sample in first-occurrence order.
std::vector<std::string> candidates_for_sample(const CandidateSet& candidates, const TokenizedSample& sample);

}  // namespace acwg
