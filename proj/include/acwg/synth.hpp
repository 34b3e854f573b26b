#pragma once

// Synthetic binary sentiment data with planted causal antonym pairs and a
// spurious shortcut token whose correlation with the label differs between
// the source and target domains.

#include "acwg/corpus.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace acwg {

struct SynthConfig {
  std::uint64_t seed = 7;
  int train_size = 1000;
  int test_size = 500;
  /// Causal antonym pairs (positive word, negative word) in use.
  int num_pairs = 20;
  int filler_words = 200;
  int min_filler = 8;
  int max_filler = 16;
  /// Causal words of the sample's own class.
  int min_causal = 4;
  int max_causal = 5;
  /// Probability that a sample carries a single causal word instead of
  /// min_causal..max_causal of them.
  double sparse_prob = 0.3;
  /// Up to max_distractors causal words of the opposite class are added, each
  /// with probability distractor_prob, and always fewer than the sample's own
  /// causal words so the causal majority decides the label.
  int max_distractors = 1;
  double distractor_prob = 0.3;
  /// P(shortcut token of the sample's own class) per domain.
  double source_shortcut = 0.9;
  double target_shortcut = 0.1;
  /// Probability that a sample mentions attribute terms (e.g. he/she).
  double attribute_prob = 0.5;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

struct SynthDataset {
  std::vector<Sample> source_train;
  std::vector<Sample> source_test;
  std::vector<Sample> target_test;
  std::vector<std::pair<std::string, std::string>> causal_pairs;  // (positive, negative)
  std::vector<std::string> shortcut_tokens;                       // index = label it co-occurs with
  std::vector<std::pair<std::string, std::string>> attribute_pairs;
};

nlohmann::json to_json(const SynthConfig& c);
/// Missing keys keep the values in `base`; unknown keys throw ContractError.
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

SynthDataset generate_synthetic(const SynthConfig& config);

/// Writes source_train.jsonl, source_test.jsonl, target_test.jsonl,
/// antonyms.tsv and attributes.tsv into `dir`.
void write_synthetic(const SynthDataset& data, const std::filesystem::path& dir);

AntonymLexicon synthetic_antonyms(const SynthDataset& data);
AttributePairLexicon synthetic_attributes(const SynthDataset& data);

}  // namespace acwg
