#pragma once

// Builds the contrastive tuple (anchor, positive, negatives) for each sample
// from its mined word-groups.

#include "acwg/corpus.hpp"
#include "acwg/rng.hpp"
#include "acwg/wordgroup.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace acwg {

struct AugmentedSet {
  TokenizedSample anchor;
  TokenizedSample positive;
  /// One counterfactual per word-group, in group rank order.
  std::vector<TokenizedSample> negatives;
  std::vector<WordGroup> groups;
  std::uint64_t rng_seed = 0;
};

struct AugmentConfig {
  int num_groups = 3;
  double mask_prob = 0.5;
  std::uint64_t seed = 13;
  bool operator==(const AugmentConfig&) const = default;
};

/// negative i = editor.flip(sample, groups[i]) for the first min(limit, |groups|)
/// groups. Throws ContractError when `groups` is empty.
std::vector<TokenizedSample> make_negatives(const TokenizedSample& sample, std::span<const WordGroup> groups,
                                            const CounterfactualEditor& editor, int limit);

/// Masks each occurrence of a candidate word that is not a group word with
/// probability `mask_prob`. Group words and non-candidate words are kept.
TokenizedSample make_positive(const TokenizedSample& sample, std::span<const std::string> candidates,
                              std::span<const std::string> group_words, double mask_prob, Rng& rng);

/// Union of the members of `groups`, sorted.
std::vector<std::string> group_words(std::span<const WordGroup> groups);

struct AugmentResult {
  /// One entry per sample that has at least one word-group, in input order.
  std::vector<AugmentedSet> sets;
  /// Samples without word-groups; they only contribute cross-entropy.
  std::vector<std::string> flagged;
};

/// Each sample's randomness comes from derive_seed(config.seed, sample_id),
/// so the output for a given id does not depend on input order.
/// Throws ContractError listing the ids that have no group report.
AugmentResult build_augmented_batch(std::span<const TokenizedSample> samples, std::span<const GroupSet> reports,
                                    const CounterfactualEditor& editor, const AugmentConfig& config,
                                    Exec exec = Exec::parallel);

}  // namespace acwg
