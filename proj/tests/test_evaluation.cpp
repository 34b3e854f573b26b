#include "support.hpp"

#include "acwg/evaluation.hpp"

#include <doctest.h>

#include <map>

using namespace acwg;
using namespace acwg::testing;

namespace {

std::vector<Sample> words_corpus() { return {{"v", "he she man woman good bad film is a girl boy marker", 0}}; }

// Identity model whose logit margin (class 1 minus class 0) is the mean of
// embedding column 0.
ClassifierParams margin_model(const Vocabulary& vocab, const std::map<std::string, double>& weights,
                              double bias = 0.0) {
  ModelConfig c;
  c.vocab_size = static_cast<int>(vocab.size());
  c.embed_dim = 2;
  c.hidden_dim = 2;
  c.activation = Activation::identity;
  auto p = init_params(c);
  p.embedding.setZero();
  for (const auto& [w, v] : weights) p.embedding(vocab.index(w), 0) = v;
  p.w1 = Eigen::MatrixXd::Identity(2, 2);
  p.b1.setZero();
  p.w2.setZero();
  p.w2(1, 0) = 1.0;
  p.b2.setZero();
  p.b2(1) = bias;
  return p;
}

std::vector<TokenizedSample> make(const Vocabulary& v, const std::vector<std::pair<std::string, int>>& rows) {
  std::vector<Sample> s;
  for (std::size_t i = 0; i < rows.size(); ++i) s.push_back({"s" + std::to_string(i), rows[i].first, rows[i].second});
  return tokenize_samples(s, v);
}

GroupSet groups_of(const TokenizedSample& s, std::vector<std::vector<std::string>> members) {
  GroupSet g;
  g.sample_id = s.sample_id;
  double score = 1.0;
  for (auto& m : members) {
    g.groups.push_back({m, score});
    score /= 2;
  }
  if (!g.groups.empty()) g.best_singleton = WordGroup{{g.groups[0].members[0]}, 1.0};
  return g;
}

}  // namespace

TEST_CASE("accuracy") {
  const auto v = build_vocab(words_corpus());
  const auto model = margin_model(v, {{"good", 1.0}, {"bad", -1.0}});
  const auto data = make(v, {{"good film", 1}, {"bad film", 0}, {"a good", 1}, {"bad bad", 0}});
  CHECK(evaluate_accuracy(model, data) == 1.0);

  const auto constant = margin_model(v, {}, 1.0);
  CHECK(evaluate_accuracy(constant, data) == 0.5);
  CHECK_THROWS_AS(evaluate_accuracy(model, std::span<const TokenizedSample>{}), ContractError);

  Rng rng(1);
  const auto random = tiny_model(2, static_cast<int>(v.size()));
  std::vector<TokenizedSample> many;
  for (int i = 0; i < 200; ++i) {
    many.push_back(sample_from_ids(std::to_string(i), random_ids(rng, static_cast<int>(v.size()), 1, 5),
                                   static_cast<int>(rng.below(2))));
  }
  std::vector<int> labels;
  for (const auto& s : many) labels.push_back(s.label);
  const auto preds = predict_labels(random, many);
  CHECK(predict_labels(random, many, Exec::serial) == preds);
  const auto cm = confusion_matrix(labels, preds);
  CHECK(cm.total() == 200);
  CHECK(evaluate_accuracy(random, many) == static_cast<double>(cm.trace()) / 200.0);
}

TEST_CASE("label flipping rate") {
  const auto v = build_vocab(words_corpus());
  AntonymLexicon lex;
  lex.add("good", std::vector<std::string>{"bad"});
  lex.add("bad", std::vector<std::string>{"good"});
  const CounterfactualEditor ed(lex, v);
  const auto model = margin_model(v, {{"good", 1.0}, {"bad", -1.0}});
  const auto data = make(v, {{"good film", 1}, {"good good a", 1}, {"bad film", 0}, {"bad is good bad", 0}});

  // groups that do not move the prediction
  std::vector<GroupSet> inert;
  for (const auto& s : data) inert.push_back(groups_of(s, {{s.tokens.back() == "a" ? "a" : "film"}}));
  inert[3] = groups_of(data[3], {{"is"}});
  const auto zero = label_flipping_rate(model, data, LfrMode::group_l1, inert, ed);
  CHECK(zero.lfr == 0.0);
  CHECK(zero.total == 4);

  // 3 of 4 flip
  std::vector<GroupSet> g{groups_of(data[0], {{"good"}}), groups_of(data[1], {{"good"}}),
                          groups_of(data[2], {{"bad"}}), groups_of(data[3], {{"is"}})};
  const auto r = label_flipping_rate(model, data, LfrMode::group_l1, g, ed);
  CHECK(r.lfr == 0.75);
  CHECK(r.flipped == 3);

  // the top group fails on sample 3 but its second group flips it
  g[3] = groups_of(data[3], {{"is"}, {"bad"}});
  CHECK(label_flipping_rate(model, data, LfrMode::group_l1, g, ed).lfr == 0.75);
  CHECK(label_flipping_rate(model, data, LfrMode::group_l3, g, ed).lfr == 1.0);
  // single_word uses the best singleton
  CHECK(label_flipping_rate(model, data, LfrMode::single_word, g, ed).lfr == 0.75);

  CHECK_THROWS_AS(label_flipping_rate(model, data, LfrMode::group_l1, std::span(g).first(2), ed), ContractError);
}

TEST_CASE("LFR l3 >= l1 on random instances") {
  constexpr int kVocab = 14;
  std::vector<std::pair<std::string, std::int64_t>> entries;
  for (int id = kNumReserved; id < kVocab; ++id) entries.emplace_back("w" + std::to_string(id), 1);
  const auto v = Vocabulary::from_entries(entries);
  AntonymLexicon lex;
  lex.add("w3", std::vector<std::string>{"w4"});
  const CounterfactualEditor ed(lex, v);
  Rng rng(3);
  const CandidateSet cands({{"w3", 1, 1}, {"w5", 1, 1}, {"w6", 1, 1}, {"w9", 1, 1}});
  for (int t = 0; t < 20; ++t) {
    const auto model = tiny_model(30 + t, kVocab, 4, 5, Activation::tanh, 2.0);
    std::vector<TokenizedSample> data;
    for (int i = 0; i < 30; ++i) {
      data.push_back(sample_from_ids(std::to_string(i), random_ids(rng, kVocab, 2, 7), static_cast<int>(rng.below(2))));
    }
    const auto reports = mine_groups(model, data, cands, ed, {});
    const auto l1 = label_flipping_rate(model, data, LfrMode::group_l1, reports, ed);
    const auto l3 = label_flipping_rate(model, data, LfrMode::group_l3, reports, ed);
    const auto one = label_flipping_rate(model, data, LfrMode::single_word, reports, ed);
    CHECK(l3.lfr >= l1.lfr);
    for (double x : {l1.lfr, l3.lfr, one.lfr}) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("greedy attack") {
  const auto v = build_vocab(words_corpus());
  const AntonymLexicon lex;
  const CounterfactualEditor ed(lex, v);
  const auto model = margin_model(v, {{"marker", 4.0}}, -0.5);
  const auto s = make(v, {{"film marker is a", 1}, {"film is a", 1}})[0];
  const auto wrong = make(v, {{"film is a", 1}})[0];

  const auto k0 = greedy_attack(model, s, 0, ed);
  CHECK(k0.attacked == s);
  CHECK_FALSE(k0.success);
  CHECK(greedy_attack(model, wrong, 0, ed).success);

  const auto k1 = greedy_attack(model, s, 1, ed);
  CHECK(k1.success);
  CHECK(k1.positions == std::vector<std::size_t>{1});
  CHECK(k1.attacked.token_ids[1] == kMaskId);

  // early stop: budget 3 still substitutes one token
  CHECK(greedy_attack(model, s, 3, ed).positions.size() == 1);
  CHECK_THROWS_AS(greedy_attack(model, s, -1, ed), ContractError);
}

TEST_CASE("attack accuracy is non-increasing in the budget") {
  constexpr int kVocab = 14;
  std::vector<std::pair<std::string, std::int64_t>> entries;
  for (int id = kNumReserved; id < kVocab; ++id) entries.emplace_back("w" + std::to_string(id), 1);
  const auto v = Vocabulary::from_entries(entries);
  AntonymLexicon lex;
  lex.add("w3", std::vector<std::string>{"w4"});
  lex.add("w6", std::vector<std::string>{"w7"});
  const CounterfactualEditor ed(lex, v);
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto model = tiny_model(60 + t, kVocab, 4, 5, Activation::tanh, 2.0);
    std::vector<TokenizedSample> data;
    for (int i = 0; i < 40; ++i) {
      auto ids = random_ids(rng, kVocab, 2, 7);
      if (rng.bernoulli(0.3)) ids[0] = kMaskId;
      data.push_back(sample_from_ids(std::to_string(i), ids, static_cast<int>(rng.below(2))));
    }
    double prev = 2.0;
    for (int k = 0; k <= 4; ++k) {
      const auto r = attack_dataset(model, data, k, ed);
      CHECK(r.post_accuracy <= prev);
      CHECK(r.post_accuracy <= r.pre_accuracy);
      prev = r.post_accuracy;
      for (int n : r.substitutions) CHECK(n <= k);
      const auto serial = attack_dataset(model, data, k, ed, Exec::serial);
      CHECK(serial.success == r.success);
    }
    for (const auto& s : data) {
      const auto out = greedy_attack(model, s, 4, ed);
      for (auto pos : out.positions) CHECK(s.token_ids[pos] != kMaskId);
    }
  }
}

TEST_CASE("attribute swap") {
  const auto v = build_vocab(words_corpus());
  AttributePairLexicon lex;
  lex.add("she", "he");
  lex.add("girl", "boy");
  const std::vector<std::string> toks{"she", "is", "a", "good", "girl"};
  CHECK(swap_attribute_terms(toks, lex) == std::vector<std::string>{"he", "is", "a", "good", "boy"});
  const auto s = make(v, {{"she is a good girl", 1}})[0];
  const auto sw = swap_attribute_terms(s, lex, v);
  CHECK(sw.token_ids[0] == v.index("he"));
  CHECK(swap_attribute_terms(sw, lex, v) == s);
  CHECK(has_attribute_term(s, lex));
  CHECK_FALSE(has_attribute_term(make(v, {{"good film", 1}})[0], lex));
}

TEST_CASE("attribute group assignment") {
  const auto v = build_vocab(words_corpus());
  AttributePairLexicon lex;
  lex.add("he", "she");
  lex.add("man", "woman");
  const auto s = make(v, {{"he man she", 0}, {"he she", 0}, {"woman", 0}, {"film", 0}});
  CHECK(assign_attribute_group(s[0], lex) == AttributeSide::first);
  CHECK_FALSE(assign_attribute_group(s[1], lex).has_value());
  CHECK(assign_attribute_group(s[2], lex) == AttributeSide::second);
  CHECK_FALSE(assign_attribute_group(s[3], lex).has_value());
}

TEST_CASE("perturbation consistency rate") {
  const auto v = build_vocab(words_corpus());
  AttributePairLexicon lex;
  lex.add("he", "she");
  const std::map<std::string, double> w{{"he", 1.0}, {"she", -1.0}, {"good", 5.0}, {"bad", -5.0}};
  const auto mixed = make(v, {{"he film", 1}, {"she film", 1}, {"he good", 1}, {"she bad", 1}, {"he bad", 1}});
  const auto r = perturbation_consistency_rate(margin_model(v, w), mixed, lex, v);
  CHECK(r.pcr == 0.6);
  CHECK(r.unchanged == 3);
  CHECK(r.total == 5);
  auto blind = w;
  blind["he"] = blind["she"] = 0.0;
  CHECK(perturbation_consistency_rate(margin_model(v, blind), mixed, lex, v).pcr == 1.0);
  const auto flip = make(v, {{"he film", 1}, {"she", 0}});
  CHECK(perturbation_consistency_rate(margin_model(v, w), flip, lex, v).pcr == 0.0);
  // samples without terms are ignored; none at all is an error
  const auto with_plain = make(v, {{"he film", 1}, {"good film", 1}});
  CHECK(perturbation_consistency_rate(margin_model(v, w), with_plain, lex, v).total == 1);
  CHECK_THROWS_AS(perturbation_consistency_rate(margin_model(v, w), make(v, {{"good", 1}}), lex, v), ContractError);
}

TEST_CASE("equality differences") {
  std::vector<int> preds, labels;
  std::vector<std::optional<AttributeSide>> groups;
  const auto add = [&](std::optional<AttributeSide> side, int neg, int fp, int pos, int fn) {
    for (int i = 0; i < neg; ++i) labels.push_back(0), preds.push_back(i < fp), groups.push_back(side);
    for (int i = 0; i < pos; ++i) labels.push_back(1), preds.push_back(i < fn ? 0 : 1), groups.push_back(side);
  };
  add(AttributeSide::first, 10, 2, 10, 1);
  add(AttributeSide::second, 10, 4, 10, 3);
  add(std::nullopt, 7, 7, 0, 0);  // excluded
  const auto d = equality_differences(preds, labels, groups);
  CHECK(d.first.fpr() == 0.2);
  CHECK(d.second.fpr() == 0.4);
  CHECK(d.overall.fpr() == 0.3);
  CHECK(d.fped == 0.2);
  CHECK(d.fned == 0.2);
  CHECK(d.excluded == 7);

  preds.clear(), labels.clear(), groups.clear();
  add(AttributeSide::first, 10, 3, 5, 1);
  add(AttributeSide::second, 20, 6, 10, 2);
  const auto sym = equality_differences(preds, labels, groups);
  CHECK(sym.fped == 0.0);
  CHECK(sym.fned == 0.0);

  preds.clear(), labels.clear(), groups.clear();
  add(AttributeSide::first, 10, 3, 0, 0);
  add(AttributeSide::second, 10, 3, 4, 1);
  const auto undefined = equality_differences(preds, labels, groups);
  CHECK(undefined.fped == 0.0);
  CHECK_FALSE(undefined.fned.has_value());
  CHECK_THROWS_AS(equality_differences(preds, std::span(labels).first(3), groups), ContractError);
}
