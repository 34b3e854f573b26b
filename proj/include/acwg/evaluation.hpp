#pragma once

// Accuracy, label-flipping rate, a budgeted greedy substitution attack and
// attribute-swap fairness metrics. Every routine here only reads the model.

#include "acwg/classifier.hpp"
#include "acwg/corpus.hpp"
#include "acwg/wordgroup.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace acwg {

/// counts[label][prediction]
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  std::int64_t total() const;
  std::int64_t trace() const { return counts[0][0] + counts[1][1]; }
  /// Throws ContractError when empty.
  double accuracy() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions);

std::vector<int> predict_labels(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                                Exec exec = Exec::parallel);

/// Fraction of argmax-correct predictions. Throws ContractError on an empty set.
double evaluate_accuracy(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                         Exec exec = Exec::parallel);

struct DomainAccuracy {
  std::string name;
  std::size_t size = 0;
  double accuracy = 0.0;
};

// ---------------------------------------------------------------------------
// Label flipping rate

enum class LfrMode { single_word, group_l1, group_l3 };

struct LFRReport {
  LfrMode mode = LfrMode::group_l1;
  double lfr = 0.0;
  std::size_t total = 0;
  /// Samples whose edited version is not predicted as the gold label.
  std::size_t flipped = 0;
  /// Samples with no group to edit; they are evaluated unedited.
  std::size_t without_groups = 0;
};

/// LFR = 1 - |{x : argmax p(x_edit) == y}| / |X|. single_word edits the best
/// level-1 singleton, group_l1 the top group, and group_l3 counts a sample as
/// flipped if any of its top three groups flips it.
/// Throws ContractError when a sample has no report.
LFRReport label_flipping_rate(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                              LfrMode mode, std::span<const GroupSet> reports, const CounterfactualEditor& editor,
                              Exec exec = Exec::parallel);

// ---------------------------------------------------------------------------
// Greedy word-substitution attack

struct AttackOutcome {
  TokenizedSample attacked;
  /// Prediction differs from the gold label after the attack.
  bool success = false;
  /// Positions substituted, in attack order (at most the budget).
  std::vector<std::size_t> positions;
};

/// Up to `budget` rounds: each round ranks the positions not yet attacked by
/// the drop in gold-class probability when that token is masked (ties go to
/// the lower position), substitutes the top one by antonym or mask, and stops
/// as soon as the prediction leaves the gold label. Mask and pad positions
/// are never chosen. Throws ContractError for budget < 0.
AttackOutcome greedy_attack(const ClassifierParams& model, const TokenizedSample& sample, int budget,
                            const CounterfactualEditor& editor);

struct AttackReport {
  int budget = 0;
  double pre_accuracy = 0.0;
  double post_accuracy = 0.0;
  std::vector<std::string> sample_ids;
  std::vector<char> success;
  std::vector<int> substitutions;
};

AttackReport attack_dataset(const ClassifierParams& model, std::span<const TokenizedSample> samples, int budget,
                            const CounterfactualEditor& editor, Exec exec = Exec::parallel);

// ---------------------------------------------------------------------------
// Fairness

/// Replaces every attribute term by its paired opposite. An involution.
std::vector<std::string> swap_attribute_terms(std::span<const std::string> tokens,
                                              const AttributePairLexicon& lexicon);
TokenizedSample swap_attribute_terms(const TokenizedSample& sample, const AttributePairLexicon& lexicon,
                                     const Vocabulary& vocab);

bool has_attribute_term(const TokenizedSample& sample, const AttributePairLexicon& lexicon);

/// Side with more term occurrences; nullopt on a tie or when no term occurs.
std::optional<AttributeSide> assign_attribute_group(const TokenizedSample& sample,
                                                    const AttributePairLexicon& lexicon);

struct PcrResult {
  double pcr = 0.0;
  std::size_t unchanged = 0;
  std::size_t total = 0;
};

/// Fraction of samples whose argmax is unchanged by swapping attribute terms.
/// Only samples containing at least one term are used; throws ContractError
/// when there are none.
PcrResult perturbation_consistency_rate(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                                        const AttributePairLexicon& lexicon, const Vocabulary& vocab,
                                        Exec exec = Exec::parallel);

/// Label 1 is the positive class.
struct GroupRates {
  std::size_t size = 0;
  std::size_t negatives = 0;
  std::size_t positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  /// Undefined when the group has no negatives / positives.
  std::optional<double> fpr() const;
  std::optional<double> fnr() const;
};

struct EqualityDifferences {
  GroupRates overall;  // samples assigned to either group
  GroupRates first;
  GroupRates second;
  std::size_t excluded = 0;  // samples without a group
  /// sum_z |FPR_z - FPR_all|; nullopt when any of the rates is undefined.
  std::optional<double> fped;
  std::optional<double> fned;
};

/// Rates are compared as exact fractions and divided once, so results such as
/// 0.2 come out as the nearest double. Throws ContractError on size mismatch.
EqualityDifferences equality_differences(std::span<const int> predictions, std::span<const int> labels,
                                         std::span<const std::optional<AttributeSide>> groups);

struct FairnessReport {
  PcrResult pcr;
  EqualityDifferences differences;
};

FairnessReport fairness_report(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                               const AttributePairLexicon& lexicon, const Vocabulary& vocab,
                               Exec exec = Exec::parallel);

}  // namespace acwg
