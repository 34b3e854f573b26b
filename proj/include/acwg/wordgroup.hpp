#pragma once

// Causal-effect scoring of word-groups and the beam search that mines them.

#include "acwg/attribution.hpp"
#include "acwg/classifier.hpp"
#include "acwg/corpus.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace acwg {

/// Replaces words by their first antonym, or by the mask token when the
/// lexicon has none. Shared by group scoring, augmentation and the attacker.
class CounterfactualEditor {
 public:
  CounterfactualEditor(const AntonymLexicon& antonyms, const Vocabulary& vocab)
      : antonyms_(&antonyms), vocab_(&vocab) {}

  /// Every occurrence of every member is substituted; other positions are
  /// untouched. Throws ContractError if a member does not occur in `sample`.
  TokenizedSample flip(const TokenizedSample& sample, std::span<const std::string> members) const;

  /// Substitutes the token at one position.
  void substitute(TokenizedSample& sample, std::size_t position) const;

  /// Replaces the token at `position` with the mask token.
  static void mask(TokenizedSample& sample, std::size_t position);

  const Vocabulary& vocab() const noexcept { return *vocab_; }

 private:
  const AntonymLexicon* antonyms_;
  const Vocabulary* vocab_;
};

/// A set of candidate words (types). Members are kept sorted so that equal
/// sets compare equal.
struct WordGroup {
  std::vector<std::string> members;
  double score = 0.0;

  bool same_members(const WordGroup& other) const { return members == other.members; }
};

/// Total order used everywhere groups are ranked: higher score first, then
/// the shorter group, then lexicographic members.
bool ranks_before(const WordGroup& a, const WordGroup& b);

struct GroupSet {
  std::string sample_id;
  /// Candidate words of the sample, first-occurrence order.
  std::vector<std::string> candidates;
  /// Best groups, ranked.
  std::vector<WordGroup> groups;
  /// Highest-scoring single word seen at the first search level.
  std::optional<WordGroup> best_singleton;
  /// True when the sample had no candidate words.
  bool no_candidates = false;
};

struct SearchConfig {
  int beam_width = 2;
  int max_group_len = 3;
  int num_groups = 3;

  void validate() const;
  bool operator==(const SearchConfig&) const = default;
};

/// 0.5 KL(q||p) + 0.5 KL(p||q), natural log, entries clamped to >= 1e-12.
/// Throws ContractError on a size mismatch, NumericError on a non-finite result.
double symmetric_kl(std::span<const double> p, std::span<const double> q);

/// Causal effect of editing `original` into `edited` under `model`.
double causal_effect(const ClassifierParams& model, const TokenizedSample& original, const TokenizedSample& edited);

/// Scores groups for one sample; caches p(x).
class GroupScorer {
 public:
  GroupScorer(const ClassifierParams& model, const CounterfactualEditor& editor, const TokenizedSample& sample);

  double score(std::span<const std::string> members) const;
  const Eigen::VectorXd& base_probs() const noexcept { return base_probs_; }

 private:
  const ClassifierParams& model_;
  const CounterfactualEditor& editor_;
  const TokenizedSample& sample_;
  Eigen::VectorXd base_probs_;
};

/// Beam search over combinations of the sample's candidate words. Each level
/// keeps the top `beam_width` groups, all kept groups accumulate into the
/// result (deduplicated by member set), and the best `num_groups` are returned.
GroupSet beam_search(const ClassifierParams& model, const TokenizedSample& sample,
                     std::span<const std::string> candidates, const CounterfactualEditor& editor,
                     const SearchConfig& config);

inline constexpr std::size_t kBruteForceLimit = 12;

/// Exhaustive reference: scores every non-empty subset of size <= max_group_len.
/// Throws ContractError for more than kBruteForceLimit candidates.
GroupSet brute_force_groups(const ClassifierParams& model, const TokenizedSample& sample,
                            std::span<const std::string> candidates, const CounterfactualEditor& editor,
                            int max_group_len, int num_groups);

/// Runs the beam search for every sample against a global candidate set.
std::vector<GroupSet> mine_groups(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                                  const CandidateSet& candidates, const CounterfactualEditor& editor,
                                  const SearchConfig& config, Exec exec = Exec::parallel);

}  // namespace acwg
