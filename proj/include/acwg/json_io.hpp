#pragma once

// JSON / jsonl / tsv serialization of configs, intermediate artifacts and
// reports. Objects are written with sorted keys and round-trip doubles, so
// the same values always produce the same bytes.

#include "acwg/attribution.hpp"
#include "acwg/augmentation.hpp"
#include "acwg/classifier.hpp"
#include "acwg/evaluation.hpp"
#include "acwg/trainer.hpp"
#include "acwg/wordgroup.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace acwg {

using nlohmann::json;

std::string to_string(Activation a);
std::string to_string(LossForm f);
std::string to_string(Ablation a);
std::string to_string(LfrMode m);
/// These throw ContractError on an unknown name.
Activation parse_activation(std::string_view s);
LossForm parse_loss_form(std::string_view s);
Ablation parse_ablation(std::string_view s);
LfrMode parse_lfr_mode(std::string_view s);

/// Throws ContractError naming `context` if `j` is not an object or has a key
/// outside `allowed`.
void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view context);

// Missing keys keep their defaults; unknown keys are rejected.
json to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const json& j, TrainOptions base = {});
json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j, ModelConfig base = {});
json to_json(const HeadConfig& c);
HeadConfig head_config_from_json(const json& j, HeadConfig base = {});
json to_json(const SearchConfig& c);
SearchConfig search_config_from_json(const json& j, SearchConfig base = {});
json to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const json& j, AugmentConfig base = {});
json to_json(const AcwgConfig& c);
AcwgConfig acwg_config_from_json(const json& j, AcwgConfig base = {});

json to_json(const TokenizedSample& s);
TokenizedSample tokenized_sample_from_json(const json& j);
json to_json(const WordGroup& g);
WordGroup word_group_from_json(const json& j);

// ---------------------------------------------------------------------------
// Files

/// Writes via a temporary file and rename, so readers never see a partial file.
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

/// Compact one-object-per-line text, with a trailing newline.
std::string to_jsonl(std::span<const json> rows);
/// Throws DataError naming the line of a malformed record. Blank lines are skipped.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// {id, tokens, norms, m}
json attribution_row(const AttributionRecord& r);
void write_attributions(const std::filesystem::path& path, std::span<const AttributionRecord> records);
/// Read back without the IG vectors or token ids.
std::vector<AttributionRecord> read_attributions(const std::filesystem::path& path);

/// tsv `word<TAB>CS<TAB>Freq` in selection order.
void write_candidates(const std::filesystem::path& path, const CandidateSet& candidates);
CandidateSet read_candidates(const std::filesystem::path& path);

/// {id, groups: [{members, score}], config, candidates, best_singleton, no_candidates}
void write_group_reports(const std::filesystem::path& path, std::span<const GroupSet> reports,
                         const SearchConfig& config);
std::vector<GroupSet> read_group_reports(const std::filesystem::path& path);

/// {id, anchor, positive, negatives[], groups[], rng_seed}
void write_augmentations(const std::filesystem::path& path, std::span<const AugmentedSet> sets);
std::vector<AugmentedSet> read_augmentations(const std::filesystem::path& path);

/// {step, L_CE, L_CL, total, mean_alpha}
void write_training_log(const std::filesystem::path& path, const TrainTrace& trace);

// ---------------------------------------------------------------------------
// Reports

json to_json(const DomainAccuracy& a);
json to_json(const LFRReport& r);
/// Per-sample flags are included when `per_sample` is set.
json to_json(const AttackReport& r, bool per_sample = true);
json to_json(const GroupRates& r);
json to_json(const FairnessReport& r);
json to_json(const EpochStats& e);

}  // namespace acwg
