#include "acwg/augmentation.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <optional>
#include <unordered_map>

namespace acwg {

std::vector<TokenizedSample> make_negatives(const TokenizedSample& sample, std::span<const WordGroup> groups,
                                            const CounterfactualEditor& editor, int limit) {
  if (groups.empty()) throw ContractError("make_negatives needs at least one word-group");
  const std::size_t n = std::min(groups.size(), static_cast<std::size_t>(std::max(limit, 0)));
  std::vector<TokenizedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(editor.flip(sample, groups[i].members));
  return out;
}

TokenizedSample make_positive(const TokenizedSample& sample, std::span<const std::string> candidates,
                              std::span<const std::string> group_words, double mask_prob, Rng& rng) {
  TokenizedSample out = sample;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const std::string& tok = sample.tokens[i];
    const bool maskable = std::find(candidates.begin(), candidates.end(), tok) != candidates.end() &&
                          std::find(group_words.begin(), group_words.end(), tok) == group_words.end();
    if (maskable && rng.bernoulli(mask_prob)) CounterfactualEditor::mask(out, i);
  }
  return out;
}

std::vector<std::string> group_words(std::span<const WordGroup> groups) {
  std::vector<std::string> words;
  for (const auto& g : groups) words.insert(words.end(), g.members.begin(), g.members.end());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

AugmentResult build_augmented_batch(std::span<const TokenizedSample> samples, std::span<const GroupSet> reports,
                                    const CounterfactualEditor& editor, const AugmentConfig& config, Exec exec) {
  if (config.num_groups < 1) throw ContractError("num_groups must be >= 1");
  if (!(config.mask_prob >= 0.0 && config.mask_prob <= 1.0)) throw ContractError("mask_prob must lie in [0, 1]");
  std::unordered_map<std::string, const GroupSet*> by_id;
  for (const auto& r : reports) by_id.emplace(r.sample_id, &r);

  std::string missing;
  std::size_t missing_count = 0;
  for (const auto& s : samples) {
    if (!by_id.count(s.sample_id)) {
      if (missing_count < 20) missing += (missing.empty() ? "" : ", ") + s.sample_id;
      ++missing_count;
    }
  }
  if (missing_count) {
    throw ContractError(std::to_string(missing_count) + " sample(s) have no group report: " + missing +
                        (missing_count > 20 ? ", ..." : ""));
  }

  std::vector<std::optional<AugmentedSet>> slots(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) {
    const TokenizedSample& s = samples[i];
    const GroupSet& report = *by_id.at(s.sample_id);
    if (report.groups.empty()) return;
    const std::size_t l = std::min(report.groups.size(), static_cast<std::size_t>(config.num_groups));
    const std::span<const WordGroup> used(report.groups.data(), l);
    AugmentedSet set;
    set.anchor = s;
    set.groups.assign(used.begin(), used.end());
    set.negatives = make_negatives(s, used, editor, config.num_groups);
    set.rng_seed = derive_seed(config.seed, s.sample_id);
    Rng rng(set.rng_seed);
    set.positive = make_positive(s, report.candidates, group_words(used), config.mask_prob, rng);
    slots[i] = std::move(set);
  });

  AugmentResult result;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (slots[i]) {
      result.sets.push_back(std::move(*slots[i]));
    } else {
      result.flagged.push_back(samples[i].sample_id);
    }
  }
  return result;
}

}  // namespace acwg
