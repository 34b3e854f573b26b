#pragma once

// Dataset ingestion, text normalization, word tokenization, vocabulary and
// lexicons. Everything here is immutable once built and safe to share
// between worker threads.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace acwg {

inline constexpr int kPadId = 0;
inline constexpr int kMaskId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kNumReserved = 3;
inline constexpr std::string_view kPadToken = "[pad]";
inline constexpr std::string_view kMaskToken = "[mask]";
inline constexpr std::string_view kUnkToken = "[unk]";

/// One labelled example. `text` holds the normalized text.
struct Sample {
  std::string id;
  std::string text;
  int label = 0;
};

/// Tokens and their vocabulary ids, always the same length.
struct TokenizedSample {
  std::string sample_id;
  std::vector<std::string> tokens;
  std::vector<int> token_ids;
  int label = 0;

  std::size_t size() const noexcept { return tokens.size(); }
  bool operator==(const TokenizedSample&) const = default;
};

/// Lowercase, strip non-ASCII bytes, drop URL and numeric-date tokens and
/// collapse whitespace. Idempotent.
std::string normalize_text(std::string_view raw);

struct TokenizerOptions {
  /// Emit punctuation characters as their own tokens instead of dropping them.
  bool keep_punctuation = false;
};

/// Splits on whitespace and punctuation. Apostrophes inside a word are kept
/// ("don't" stays one token).
std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options = {});

/// Alternate tokenizers can be plugged in where a TokenizerFn is accepted.
using TokenizerFn = std::function<std::vector<std::string>(std::string_view)>;
TokenizerFn default_tokenizer(TokenizerOptions options = {});

enum class DataFormat { jsonl, csv };

/// Picks the format from the file extension (.jsonl/.json -> jsonl, .csv -> csv).
DataFormat format_from_path(const std::filesystem::path& path);

struct LoadedDataset {
  std::vector<Sample> samples;
  /// Records whose text was empty after normalization/tokenization.
  std::size_t dropped_empty = 0;
};

/// Reads jsonl records {"text", "label"[, "id"]} or csv with a `text,label`
/// header. Labels must be 0 or 1. When a record has no id, `<stem>-<index>`
/// is used. Throws DataError naming the offending line.
LoadedDataset load_dataset(const std::filesystem::path& path, DataFormat format);
LoadedDataset load_dataset(const std::filesystem::path& path);

class Vocabulary {
 public:
  /// Counts words over `samples` and keeps those with count >= min_count.
  /// Ids are assigned by descending frequency, then lexicographically.
  static Vocabulary build(std::span<const Sample> samples, int min_count = 1,
                          const TokenizerFn& tokenizer = default_tokenizer());

  /// Rebuilds from (word, freq) pairs in id order, reserved entries excluded.
  static Vocabulary from_entries(std::span<const std::pair<std::string, std::int64_t>> entries);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return words_.size(); }
  static bool is_reserved(int id) noexcept { return id >= 0 && id < kNumReserved; }

  /// Id of `word`, or kUnkId if it is not in the vocabulary.
  int index(std::string_view word) const;
  std::optional<int> find(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::int64_t freq(int id) const { return freqs_.at(static_cast<std::size_t>(id)); }
  std::int64_t freq(std::string_view word) const;
  int min_count() const noexcept { return min_count_; }

 private:
  Vocabulary();

  std::vector<std::string> words_;
  std::vector<std::int64_t> freqs_;
  std::unordered_map<std::string, int> index_;
  int min_count_ = 1;
};

Vocabulary build_vocab(std::span<const Sample> samples, int min_count = 1);

TokenizedSample tokenize_sample(const Sample& sample, const Vocabulary& vocab,
                                const TokenizerFn& tokenizer = default_tokenizer());
std::vector<TokenizedSample> tokenize_samples(std::span<const Sample> samples,
                                              const Vocabulary& vocab,
                                              const TokenizerFn& tokenizer = default_tokenizer());

/// word -> antonyms, first listed wins. Lookups are case-insensitive.
class AntonymLexicon {
 public:
  AntonymLexicon() = default;

  /// tsv: `word<TAB>antonym1,antonym2,...`. Blank lines and `#` comments are skipped.
  static AntonymLexicon load(const std::filesystem::path& path);

  /// Self-antonyms are rejected with ContractError. Antonyms for a word that
  /// is already present are appended after the existing ones.
  void add(std::string_view word, std::span<const std::string> antonyms);

  std::optional<std::string> first_antonym(std::string_view word) const;
  const std::vector<std::string>* antonyms(std::string_view word) const;
  std::size_t size() const noexcept { return map_.size(); }

 private:
  std::unordered_map<std::string, std::vector<std::string>> map_;
};

enum class AttributeSide { first, second };

/// Paired attribute terms (e.g. he/she). The pair relation is symmetric: the
/// left column of the file is side `first`, the right column side `second`.
class AttributePairLexicon {
 public:
  AttributePairLexicon() = default;

  /// tsv: `term<TAB>opposite`.
  static AttributePairLexicon load(const std::filesystem::path& path);

  /// Throws ContractError if a term is reserved, equals its opposite, or
  /// already belongs to another pair.
  void add(std::string_view term, std::string_view opposite);

  std::optional<std::string> opposite(std::string_view word) const;
  std::optional<AttributeSide> side(std::string_view word) const;
  const std::vector<std::pair<std::string, std::string>>& pairs() const noexcept { return pairs_; }

 private:
  std::vector<std::pair<std::string, std::string>> pairs_;
  std::unordered_map<std::string, std::pair<std::size_t, AttributeSide>> lookup_;
};

}  // namespace acwg
