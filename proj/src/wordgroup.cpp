#include "acwg/wordgroup.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

namespace acwg {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<std::string> sorted_members(std::vector<std::string> m) {
  std::sort(m.begin(), m.end());
  return m;
}

std::vector<std::string> distinct(std::span<const std::string> words) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  return out;
}

}  // namespace

TokenizedSample CounterfactualEditor::flip(const TokenizedSample& sample, std::span<const std::string> members) const {
  for (const std::string& m : members) {
    if (std::find(sample.tokens.begin(), sample.tokens.end(), m) == sample.tokens.end()) {
      throw ContractError("group member '" + m + "' does not occur in sample " + sample.sample_id);
    }
  }
  TokenizedSample out = sample;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (std::find(members.begin(), members.end(), sample.tokens[i]) != members.end()) substitute(out, i);
  }
  return out;
}

void CounterfactualEditor::substitute(TokenizedSample& sample, std::size_t position) const {
  if (const auto antonym = antonyms_->first_antonym(sample.tokens.at(position))) {
    sample.tokens[position] = *antonym;
    sample.token_ids[position] = vocab_->index(*antonym);
  } else {
    mask(sample, position);
  }
}

void CounterfactualEditor::mask(TokenizedSample& sample, std::size_t position) {
  sample.tokens.at(position) = std::string(kMaskToken);
  sample.token_ids.at(position) = kMaskId;
}

bool ranks_before(const WordGroup& a, const WordGroup& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
  return a.members < b.members;
}

void SearchConfig::validate() const {
  if (beam_width < 1 || max_group_len < 1 || num_groups < 1) {
    throw ContractError("beam width, max group length and group count must all be >= 1");
  }
}

double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ContractError("symmetric_kl needs two distributions of equal size");
  // 0.5 KL(q||p) + 0.5 KL(p||q) == 0.5 * sum (q_i - p_i)(log q_i - log p_i); every
  // term of the second form is a product of same-signed factors, so the sum
  // is exactly non-negative in floating point too.
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], kProbFloor);
    const double qi = std::max(q[i], kProbFloor);
    sum += (qi - pi) * (std::log(qi) - std::log(pi));
  }
  const double value = 0.5 * sum;
  if (!std::isfinite(value)) throw NumericError("non-finite divergence");
  return value;
}

double causal_effect(const ClassifierParams& model, const TokenizedSample& original, const TokenizedSample& edited) {
  const auto p = forward(model, original.token_ids).probs;
  const auto q = forward(model, edited.token_ids).probs;
  return symmetric_kl({p.data(), static_cast<std::size_t>(p.size())}, {q.data(), static_cast<std::size_t>(q.size())});
}

GroupScorer::GroupScorer(const ClassifierParams& model, const CounterfactualEditor& editor,
                         const TokenizedSample& sample)
    : model_(model), editor_(editor), sample_(sample), base_probs_(forward(model, sample.token_ids).probs) {}

double GroupScorer::score(std::span<const std::string> members) const {
  const TokenizedSample edited = editor_.flip(sample_, members);
  const Eigen::VectorXd q = forward(model_, edited.token_ids).probs;
  return symmetric_kl({base_probs_.data(), static_cast<std::size_t>(base_probs_.size())},
                      {q.data(), static_cast<std::size_t>(q.size())});
}

GroupSet beam_search(const ClassifierParams& model, const TokenizedSample& sample,
                     std::span<const std::string> candidates, const CounterfactualEditor& editor,
                     const SearchConfig& config) {
  config.validate();
  GroupSet out;
  out.sample_id = sample.sample_id;
  out.candidates = distinct(candidates);
  if (out.candidates.empty()) {
    out.no_candidates = true;
    return out;
  }
  const GroupScorer scorer(model, editor, sample);
  const auto beam = static_cast<std::size_t>(config.beam_width);

  std::vector<WordGroup> level;
  for (const auto& w : out.candidates) level.push_back(WordGroup{{w}, 0.0});

  std::vector<WordGroup> accumulated;
  std::set<std::vector<std::string>> seen;
  for (int len = 1; len <= config.max_group_len && !level.empty(); ++len) {
    for (auto& g : level) {
      try {
        g.score = scorer.score(g.members);
      } catch (const Error& e) {
        std::string names;
        for (const auto& m : g.members) names += (names.empty() ? "" : " ") + m;
        throw Error("scoring group {" + names + "} of sample " + sample.sample_id + " failed: " + e.what());
      }
    }
    std::sort(level.begin(), level.end(), ranks_before);
    if (level.size() > beam) level.resize(beam);
    if (len == 1) out.best_singleton = level.front();
    for (const auto& g : level) {
      if (seen.insert(g.members).second) accumulated.push_back(g);
    }
    if (len == config.max_group_len) break;

    std::vector<WordGroup> next;
    std::set<std::vector<std::string>> next_seen;
    for (const auto& g : level) {
      for (const auto& w : out.candidates) {
        if (std::find(g.members.begin(), g.members.end(), w) != g.members.end()) continue;
        auto members = g.members;
        members.push_back(w);
        members = sorted_members(std::move(members));
        if (next_seen.insert(members).second) next.push_back(WordGroup{std::move(members), 0.0});
      }
    }
    level = std::move(next);
  }
  std::sort(accumulated.begin(), accumulated.end(), ranks_before);
  if (accumulated.size() > static_cast<std::size_t>(config.num_groups)) {
    accumulated.resize(static_cast<std::size_t>(config.num_groups));
  }
  out.groups = std::move(accumulated);
  return out;
}

GroupSet brute_force_groups(const ClassifierParams& model, const TokenizedSample& sample,
                            std::span<const std::string> candidates, const CounterfactualEditor& editor,
                            int max_group_len, int num_groups) {
  if (max_group_len < 1 || num_groups < 1) throw ContractError("max group length and group count must be >= 1");
  GroupSet out;
  out.sample_id = sample.sample_id;
  out.candidates = distinct(candidates);
  const std::size_t n = out.candidates.size();
  if (n > kBruteForceLimit) {
    throw ContractError("brute-force group enumeration is limited to " + std::to_string(kBruteForceLimit) +
                        " candidates, got " + std::to_string(n));
  }
  if (n == 0) {
    out.no_candidates = true;
    return out;
  }
  const GroupScorer scorer(model, editor, sample);
  std::vector<WordGroup> all;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (std::popcount(mask) > max_group_len) continue;
    std::vector<std::string> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) members.push_back(out.candidates[i]);
    }
    WordGroup g{sorted_members(std::move(members)), 0.0};
    g.score = scorer.score(g.members);
    all.push_back(std::move(g));
  }
  std::sort(all.begin(), all.end(), ranks_before);
  for (const auto& g : all) {
    if (g.members.size() == 1) {
      out.best_singleton = g;
      break;
    }
  }
  if (all.size() > static_cast<std::size_t>(num_groups)) all.resize(static_cast<std::size_t>(num_groups));
  out.groups = std::move(all);
  return out;
}

std::vector<GroupSet> mine_groups(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                                  const CandidateSet& candidates, const CounterfactualEditor& editor,
                                  const SearchConfig& config, Exec exec) {
  config.validate();
  std::vector<GroupSet> out(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) {
    out[i] = beam_search(model, samples[i], candidates_for_sample(candidates, samples[i]), editor, config);
  });
  return out;
}

}  // namespace acwg
