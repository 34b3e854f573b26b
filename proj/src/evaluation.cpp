#include "acwg/evaluation.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace acwg {

namespace {

bool is_special(int id) { return id == kPadId || id == kMaskId; }

double gold_probability(const ClassifierParams& model, const TokenizedSample& s) {
  return forward(model, s.token_ids).probs[s.label];
}

int predicted(const ClassifierParams& model, const TokenizedSample& s) {
  return forward(model, s.token_ids).predicted();
}

// Exact |a/b - c/d| summed over groups, as one fraction num/den.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

Fraction abs_diff(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  std::int64_t num = a * d - c * b;
  if (num < 0) num = -num;
  Fraction f{num, b * d};
  const std::int64_t g = std::gcd(f.num, f.den);
  if (g > 1) {
    f.num /= g;
    f.den /= g;
  }
  return f;
}

Fraction add(Fraction x, Fraction y) {
  const std::int64_t g = std::gcd(x.den, y.den);
  Fraction f{x.num * (y.den / g) + y.num * (x.den / g), x.den / g * y.den};
  const std::int64_t h = std::gcd(f.num, f.den);
  if (h > 1) {
    f.num /= h;
    f.den /= h;
  }
  return f;
}

std::optional<double> deviation_sum(std::size_t a1, std::size_t b1, std::size_t a2, std::size_t b2, std::size_t c,
                                    std::size_t d) {
  if (b1 == 0 || b2 == 0 || d == 0) return std::nullopt;
  const auto i = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  const Fraction f = add(abs_diff(i(a1), i(b1), i(c), i(d)), abs_diff(i(a2), i(b2), i(c), i(d)));
  return static_cast<double>(f.num) / static_cast<double>(f.den);
}

void tally(GroupRates& r, int label, int pred) {
  ++r.size;
  if (label == 1) {
    ++r.positives;
    if (pred != 1) ++r.false_negatives;
  } else {
    ++r.negatives;
    if (pred == 1) ++r.false_positives;
  }
}

}  // namespace

std::int64_t ConfusionMatrix::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  if (n == 0) throw ContractError("accuracy of an empty confusion matrix");
  return static_cast<double>(trace()) / static_cast<double>(n);
}

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw ContractError("labels and predictions differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 1 || predictions[i] < 0 || predictions[i] > 1) {
      throw ContractError("labels and predictions must be 0 or 1");
    }
    ++m.counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  return m;
}

std::vector<int> predict_labels(const ClassifierParams& model, std::span<const TokenizedSample> samples, Exec exec) {
  std::vector<int> out(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) { out[i] = predicted(model, samples[i]); });
  return out;
}

double evaluate_accuracy(const ClassifierParams& model, std::span<const TokenizedSample> samples, Exec exec) {
  if (samples.empty()) throw ContractError("accuracy on an empty set");
  const auto preds = predict_labels(model, samples, exec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += preds[i] == samples[i].label;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

LFRReport label_flipping_rate(const ClassifierParams& model, std::span<const TokenizedSample> samples, LfrMode mode,
                              std::span<const GroupSet> reports, const CounterfactualEditor& editor, Exec exec) {
  if (samples.empty()) throw ContractError("label flipping rate on an empty set");
  std::unordered_map<std::string, const GroupSet*> by_id;
  for (const auto& r : reports) by_id.emplace(r.sample_id, &r);
  for (const auto& s : samples) {
    if (!by_id.count(s.sample_id)) throw ContractError("no group report for sample " + s.sample_id);
  }
  std::vector<char> flipped(samples.size()), bare(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) {
    const TokenizedSample& s = samples[i];
    const GroupSet& r = *by_id.at(s.sample_id);
    std::vector<const WordGroup*> edits;
    if (mode == LfrMode::single_word) {
      if (r.best_singleton) edits.push_back(&*r.best_singleton);
    } else {
      const std::size_t n = std::min<std::size_t>(r.groups.size(), mode == LfrMode::group_l1 ? 1 : 3);
      for (std::size_t g = 0; g < n; ++g) edits.push_back(&r.groups[g]);
    }
    if (edits.empty()) {
      bare[i] = 1;
      flipped[i] = predicted(model, s) != s.label;
      return;
    }
    for (const WordGroup* g : edits) {
      if (predicted(model, editor.flip(s, g->members)) != s.label) {
        flipped[i] = 1;
        break;
      }
    }
  });
  LFRReport out;
  out.mode = mode;
  out.total = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.flipped += static_cast<std::size_t>(flipped[i]);
    out.without_groups += static_cast<std::size_t>(bare[i]);
  }
  out.lfr = static_cast<double>(out.flipped) / static_cast<double>(out.total);
  return out;
}

AttackOutcome greedy_attack(const ClassifierParams& model, const TokenizedSample& sample, int budget,
                            const CounterfactualEditor& editor) {
  if (budget < 0) throw ContractError("attack budget must be >= 0");
  AttackOutcome out;
  out.attacked = sample;
  std::vector<char> used(sample.size(), 0);
  for (int round = 0; round < budget; ++round) {
    const PredictionOutput current = forward(model, out.attacked.token_ids);
    if (current.predicted() != sample.label) break;
    const double base = current.probs[sample.label];
    std::optional<std::size_t> best;
    double best_drop = 0.0;
    for (std::size_t pos = 0; pos < out.attacked.size(); ++pos) {
      if (used[pos] || is_special(out.attacked.token_ids[pos])) continue;
      TokenizedSample probe = out.attacked;
      CounterfactualEditor::mask(probe, pos);
      // a probe made only of masks is still a valid input
      const double drop = base - gold_probability(model, probe);
      if (!best || drop > best_drop) {
        best = pos;
        best_drop = drop;
      }
    }
    if (!best) break;
    editor.substitute(out.attacked, *best);
    used[*best] = 1;
    out.positions.push_back(*best);
  }
  out.success = predicted(model, out.attacked) != sample.label;
  return out;
}

AttackReport attack_dataset(const ClassifierParams& model, std::span<const TokenizedSample> samples, int budget,
                            const CounterfactualEditor& editor, Exec exec) {
  if (samples.empty()) throw ContractError("attack on an empty set");
  if (budget < 0) throw ContractError("attack budget must be >= 0");
  AttackReport r;
  r.budget = budget;
  r.sample_ids.resize(samples.size());
  r.success.resize(samples.size());
  r.substitutions.resize(samples.size());
  std::vector<char> correct(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) {
    correct[i] = predicted(model, samples[i]) == samples[i].label;
    const AttackOutcome o = greedy_attack(model, samples[i], budget, editor);
    r.sample_ids[i] = samples[i].sample_id;
    r.success[i] = o.success;
    r.substitutions[i] = static_cast<int>(o.positions.size());
  });
  std::size_t pre = 0, post = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pre += static_cast<std::size_t>(correct[i]);
    post += static_cast<std::size_t>(!r.success[i]);
  }
  const auto n = static_cast<double>(samples.size());
  r.pre_accuracy = static_cast<double>(pre) / n;
  r.post_accuracy = static_cast<double>(post) / n;
  return r;
}

std::vector<std::string> swap_attribute_terms(std::span<const std::string> tokens,
                                              const AttributePairLexicon& lexicon) {
  std::vector<std::string> out(tokens.begin(), tokens.end());
  for (auto& t : out) {
    if (auto o = lexicon.opposite(t)) t = std::move(*o);
  }
  return out;
}

TokenizedSample swap_attribute_terms(const TokenizedSample& sample, const AttributePairLexicon& lexicon,
                                     const Vocabulary& vocab) {
  TokenizedSample out = sample;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (auto o = lexicon.opposite(out.tokens[i])) {
      out.token_ids[i] = vocab.index(*o);
      out.tokens[i] = std::move(*o);
    }
  }
  return out;
}

bool has_attribute_term(const TokenizedSample& sample, const AttributePairLexicon& lexicon) {
  return std::any_of(sample.tokens.begin(), sample.tokens.end(),
                     [&](const std::string& t) { return lexicon.side(t).has_value(); });
}

std::optional<AttributeSide> assign_attribute_group(const TokenizedSample& sample,
                                                    const AttributePairLexicon& lexicon) {
  std::size_t first = 0, second = 0;
  for (const auto& t : sample.tokens) {
    if (const auto s = lexicon.side(t)) (*s == AttributeSide::first ? first : second)++;
  }
  if (first == second) return std::nullopt;
  return first > second ? AttributeSide::first : AttributeSide::second;
}

PcrResult perturbation_consistency_rate(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                                        const AttributePairLexicon& lexicon, const Vocabulary& vocab, Exec exec) {
  std::vector<const TokenizedSample*> subset;
  for (const auto& s : samples) {
    if (has_attribute_term(s, lexicon)) subset.push_back(&s);
  }
  if (subset.empty()) throw ContractError("no sample contains an attribute term");
  std::vector<char> same(subset.size());
  detail::parallel_for(subset.size(), exec, [&](std::size_t i) {
    same[i] = predicted(model, *subset[i]) == predicted(model, swap_attribute_terms(*subset[i], lexicon, vocab));
  });
  PcrResult r;
  r.total = subset.size();
  for (char c : same) r.unchanged += static_cast<std::size_t>(c);
  r.pcr = static_cast<double>(r.unchanged) / static_cast<double>(r.total);
  return r;
}

std::optional<double> GroupRates::fpr() const {
  if (negatives == 0) return std::nullopt;
  return static_cast<double>(false_positives) / static_cast<double>(negatives);
}

std::optional<double> GroupRates::fnr() const {
  if (positives == 0) return std::nullopt;
  return static_cast<double>(false_negatives) / static_cast<double>(positives);
}

EqualityDifferences equality_differences(std::span<const int> predictions, std::span<const int> labels,
                                         std::span<const std::optional<AttributeSide>> groups) {
  if (predictions.size() != labels.size() || labels.size() != groups.size()) {
    throw ContractError("predictions, labels and groups must have the same length");
  }
  EqualityDifferences e;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!groups[i]) {
      ++e.excluded;
      continue;
    }
    tally(e.overall, labels[i], predictions[i]);
    tally(*groups[i] == AttributeSide::first ? e.first : e.second, labels[i], predictions[i]);
  }
  e.fped = deviation_sum(e.first.false_positives, e.first.negatives, e.second.false_positives, e.second.negatives,
                         e.overall.false_positives, e.overall.negatives);
  e.fned = deviation_sum(e.first.false_negatives, e.first.positives, e.second.false_negatives, e.second.positives,
                         e.overall.false_negatives, e.overall.positives);
  return e;
}

FairnessReport fairness_report(const ClassifierParams& model, std::span<const TokenizedSample> samples,
                               const AttributePairLexicon& lexicon, const Vocabulary& vocab, Exec exec) {
  FairnessReport r;
  r.pcr = perturbation_consistency_rate(model, samples, lexicon, vocab, exec);
  const auto preds = predict_labels(model, samples, exec);
  std::vector<int> labels;
  std::vector<std::optional<AttributeSide>> groups;
  for (const auto& s : samples) {
    labels.push_back(s.label);
    groups.push_back(assign_attribute_group(s, lexicon));
  }
  r.differences = equality_differences(preds, labels, groups);
  return r;
}

}  // namespace acwg
