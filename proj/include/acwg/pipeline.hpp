#pragma once

// Two-phase pipeline (ERM -> mine -> augment -> ACWG -> evaluate) over an
// output directory of artifacts. Every command appends its record to
// <out>/manifest.json: the resolved config, its hash, the seed and git-style
// blob ids of the inputs read and outputs written.
//
// Artifacts (relative to the output directory):
//   train-base   vocab.tsv base.ckpt base_log.jsonl
//   mine         attributions.jsonl candidates.tsv groups.jsonl
//   augment      augmentations.jsonl augment_summary.json
//   train-acwg   acwg.ckpt head.ckpt acwg_log.jsonl
//   eval         reports/eval_<model>.json

#include "acwg/augmentation.hpp"
#include "acwg/classifier.hpp"
#include "acwg/synth.hpp"
#include "acwg/trainer.hpp"
#include "acwg/wordgroup.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acwg {

struct NamedPath {
  std::string name;
  std::filesystem::path path;
  bool operator==(const NamedPath&) const = default;
};

struct DataPaths {
  std::filesystem::path source_train;
  std::filesystem::path source_test;
  std::vector<NamedPath> target_tests;
  std::filesystem::path antonyms;
  /// Optional; fairness metrics are skipped without it.
  std::filesystem::path attributes;
  bool operator==(const DataPaths&) const = default;
};

enum class EvalModel { base, acwg };

struct EvalOptions {
  EvalModel model = EvalModel::acwg;
  bool accuracy = true;
  bool lfr = true;
  bool attack = true;
  bool fairness = true;
  std::vector<int> attack_budgets{1, 2, 3};
  bool operator==(const EvalOptions&) const = default;
};

struct PipelineConfig {
  DataPaths data;
  /// vocab_size is filled in by train-base; the seeds are derived from `seed`.
  ModelConfig model;
  int min_count = 1;
  int ig_steps = kDefaultIgSteps;
  double candidate_fraction = kDefaultCandidateFraction;
  /// num_groups here is l for mining, augmentation and voting alike.
  SearchConfig search;
  double mask_prob = 0.5;
  int head_hidden_dim = 64;
  int head_output_dim = 64;
  /// The seed field of acwg.train is derived from `seed`.
  AcwgConfig acwg;
  /// Start ACWG from a freshly initialized backbone instead of M'.
  bool fresh = false;
  /// Re-mine groups from the current backbone before every epoch after the first.
  bool remine = false;
  EvalOptions eval;
  std::uint64_t seed = 13;
  std::filesystem::path out = "run";
  /// Worker cap; 0 keeps the OpenMP default. Does not affect results.
  int jobs = 0;

  /// Throws ContractError on invalid values and DependencyError for missing input files.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Sub-seeds for the stages, all derived from the global seed.
struct StageSeeds {
  std::uint64_t model_init;
  std::uint64_t erm_order;
  std::uint64_t head_init;
  std::uint64_t acwg_order;
  std::uint64_t augment;
};
StageSeeds stage_seeds(std::uint64_t seed);

/// Search settings actually used: wo-wordgroups keeps only the best single word.
SearchConfig effective_search(const PipelineConfig& config);
ModelConfig effective_model(const PipelineConfig& config, int vocab_size);
HeadConfig effective_head(const PipelineConfig& config);
AcwgConfig effective_acwg(const PipelineConfig& config);

std::string to_string(EvalModel m);
EvalModel parse_eval_model(std::string_view s);

/// Paths are written as given. `out` and `jobs` are included.
nlohmann::json to_json(const PipelineConfig& c);
/// Relative paths are resolved against `base_dir`. Seed keys inside the
/// sections are rejected: the top-level seed is the only one.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                         PipelineConfig base = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

/// Defaults tuned for the bundled synthetic data in `data_dir`.
PipelineConfig synthetic_pipeline_config(const std::filesystem::path& data_dir);

/// Hex SHA-1 of the config with `out` and `jobs` removed.
std::string config_hash(const PipelineConfig& c);
/// Hex SHA-1 of "blob <size>\0<content>", as git computes it.
std::string blob_id(std::string_view content);
std::string file_blob_id(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest

struct StageRecord {
  /// "synth", "train-base", "mine", "augment", "train-acwg" or "eval:<model>".
  std::string stage;
  nlohmann::json config;
  std::string config_hash;
  std::uint64_t seed = 0;
  /// name -> blob id; outputs are keyed by path relative to the output directory.
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;
};

struct Manifest {
  std::vector<StageRecord> records;  // pipeline order

  /// Replaces the record of the same stage, or inserts it in pipeline order.
  void put(StageRecord record);
  const StageRecord* find(std::string_view stage) const;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
/// An absent file reads as an empty manifest.
Manifest read_manifest(const std::filesystem::path& out_dir);
void write_manifest(const std::filesystem::path& out_dir, const Manifest& m);

// ---------------------------------------------------------------------------
// Commands. Each throws DependencyError when an upstream artifact is missing.

/// Writes the dataset to <out>/data and a ready-to-use <out>/config.json.
void cmd_synth(const SynthConfig& synth, const std::filesystem::path& out);
void cmd_train_base(const PipelineConfig& config);
void cmd_mine(const PipelineConfig& config);
void cmd_augment(const PipelineConfig& config);
void cmd_train_acwg(const PipelineConfig& config);
void cmd_eval(const PipelineConfig& config);

/// Runs train-base, mine, augment, train-acwg and eval in order.
void cmd_run_all(const PipelineConfig& config);

struct GroupView {
  std::string sample_id;
  int label = 0;
  std::string text;
  std::vector<std::string> candidates;
  std::vector<WordGroup> groups;
};

/// Mined groups joined with their samples. An empty `ids` selects the first
/// `limit` samples.
std::vector<GroupView> show_groups(const std::filesystem::path& out, std::span<const std::string> ids,
                                   std::size_t limit);
std::string format_group_views(std::span<const GroupView> views);

struct ReplayResult {
  std::vector<std::string> stages;
  /// Outputs whose blob id differs from the manifest, as "stage:path".
  std::vector<std::string> mismatches;
};

/// Re-executes every record of `manifest_path` into `out` (which must not be
/// the original directory) and compares the outputs with the recorded ids.
/// Throws DataError if a recorded input changed since the original run.
ReplayResult replay_manifest(const std::filesystem::path& manifest_path, const std::filesystem::path& out);

}  // namespace acwg
