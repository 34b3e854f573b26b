#include "support.hpp"

#include "acwg/wordgroup.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace acwg;
using namespace acwg::testing;

namespace {

std::vector<Sample> fig1_corpus() {
  return {{"1", "a interesting and important film boring unimportant", 1}};
}

TokenizedSample fig1_sample(const Vocabulary& v) { return tokenize_sample({"x", "a interesting and important film", 1}, v); }

AntonymLexicon fig1_antonyms() {
  AntonymLexicon lex;
  lex.add("interesting", std::vector<std::string>{"boring"});
  lex.add("important", std::vector<std::string>{"unimportant"});
  return lex;
}

std::string join(const TokenizedSample& s) {
  std::string out;
  for (const auto& t : s.tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

Vocabulary id_vocab(int vocab_size) {
  std::vector<std::pair<std::string, std::int64_t>> entries;
  for (int id = kNumReserved; id < vocab_size; ++id) entries.emplace_back("w" + std::to_string(id), 1);
  return Vocabulary::from_entries(entries);
}

// Identity model whose logit margin is the mean of embedding column 0.
ClassifierParams margin_model(int vocab_size, const std::vector<std::pair<int, double>>& weights) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 2;
  c.hidden_dim = 2;
  c.activation = Activation::identity;
  auto p = init_params(c);
  p.embedding.setZero();
  for (const auto& [id, v] : weights) p.embedding(id, 0) = v;
  p.w1 = Eigen::MatrixXd::Identity(2, 2);
  p.b1.setZero();
  p.w2.setZero();
  p.w2(1, 0) = 1.0;
  p.b2.setZero();
  return p;
}

}  // namespace

TEST_CASE("counterfactual flip of the running example") {
  const auto v = build_vocab(fig1_corpus());
  const auto lex = fig1_antonyms();
  const CounterfactualEditor ed(lex, v);
  const auto x = fig1_sample(v);
  const auto flipped = ed.flip(x, std::vector<std::string>{"important", "interesting"});
  CHECK(join(flipped) == "a boring and unimportant film");
  CHECK(flipped.token_ids[1] == v.index("boring"));
  CHECK(flipped.size() == x.size());
  CHECK(ed.flip(x, std::vector<std::string>{}) == x);

  const auto masked = ed.flip(tokenize_sample({"y", "film a film", 0}, v), std::vector<std::string>{"film"});
  CHECK(masked.tokens == std::vector<std::string>{std::string(kMaskToken), "a", std::string(kMaskToken)});
  CHECK(masked.token_ids == std::vector<int>{kMaskId, v.index("a"), kMaskId});
  CHECK_THROWS_AS(ed.flip(x, std::vector<std::string>{"boring"}), ContractError);
}

TEST_CASE("flip leaves tokens outside the group untouched") {
  Rng rng(1);
  const auto v = id_vocab(14);
  AntonymLexicon lex;
  lex.add("w3", std::vector<std::string>{"w4"});
  const CounterfactualEditor ed(lex, v);
  for (int i = 0; i < 200; ++i) {
    const auto s = sample_from_ids("s", random_ids(rng, 14, 1, 8), 0);
    std::vector<std::string> members{s.tokens[rng.below(s.size())]};
    if (s.size() > 1 && rng.bernoulli(0.5) && s.tokens[1] != members[0]) members.push_back(s.tokens[1]);
    const auto f = ed.flip(s, members);
    for (std::size_t k = 0; k < s.size(); ++k) {
      const bool member = std::find(members.begin(), members.end(), s.tokens[k]) != members.end();
      if (member) {
        CHECK(f.tokens[k] != s.tokens[k]);
      } else {
        CHECK(f.tokens[k] == s.tokens[k]);
        CHECK(f.token_ids[k] == s.token_ids[k]);
      }
    }
  }
}

TEST_CASE("symmetric KL") {
  const std::vector<double> p{0.9, 0.1}, q{0.1, 0.9};
  CHECK(symmetric_kl(p, p) == 0.0);
  CHECK(std::abs(symmetric_kl(p, q) - 1.757780) < 1e-5);
  CHECK(std::abs(symmetric_kl(p, q) - 0.8 * std::log(9.0)) < 1e-15);
  CHECK(symmetric_kl(p, q) == symmetric_kl(q, p));
  // clamped entries keep the value finite
  CHECK(std::isfinite(symmetric_kl(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0})));
  CHECK_THROWS_AS(symmetric_kl(p, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("causal effect of an unchanged sample is zero") {
  const auto p = tiny_model(1);
  const auto s = sample_from_ids("s", {3, 4, 5}, 0);
  CHECK(causal_effect(p, s, s) == 0.0);
}

TEST_CASE("ranks_before tie-break") {
  const WordGroup a{{"b"}, 1.0}, b{{"a", "c"}, 1.0}, c{{"a"}, 1.0}, d{{"z"}, 2.0};
  CHECK(ranks_before(d, a));
  CHECK(ranks_before(a, b));  // shorter first
  CHECK(ranks_before(c, a));  // then lexicographic
  CHECK_FALSE(ranks_before(a, a));
}

TEST_CASE("beam search with one candidate") {
  const auto v = id_vocab(12);
  const AntonymLexicon lex;
  const CounterfactualEditor ed(lex, v);
  const auto p = tiny_model(2);
  const auto s = sample_from_ids("s", {3, 4, 5}, 0);
  const auto g = beam_search(p, s, std::vector<std::string>{"w4"}, ed, {});
  REQUIRE(g.groups.size() == 1);
  CHECK(g.groups[0].members == std::vector<std::string>{"w4"});
  CHECK(g.groups[0].score > 0.0);
  CHECK(g.best_singleton->members == g.groups[0].members);
  const auto bf = brute_force_groups(p, s, std::vector<std::string>{"w4"}, ed, 3, 3);
  CHECK(bf.groups[0].score == g.groups[0].score);

  const auto none = beam_search(p, s, std::vector<std::string>{}, ed, {});
  CHECK(none.no_candidates);
  CHECK(none.groups.empty());
}

TEST_CASE("beam search finds a jointly causal pair") {
  // w3 and w4 carry the label together; w5 pulls the other way.
  const auto v = id_vocab(8);
  const AntonymLexicon lex;
  const CounterfactualEditor ed(lex, v);
  const auto p = margin_model(8, {{3, 3.0}, {4, 3.0}, {5, -1.0}, {6, 1.0}});
  const auto s = sample_from_ids("s", {3, 4, 5, 6}, 1);
  const std::vector<std::string> cands{"w3", "w4", "w5"};
  SearchConfig cfg;
  cfg.beam_width = 3;
  const auto beam = beam_search(p, s, cands, ed, cfg);
  const auto brute = brute_force_groups(p, s, cands, ed, 3, 3);
  REQUIRE(!beam.groups.empty());
  CHECK(beam.groups[0].members == std::vector<std::string>{"w3", "w4"});
  CHECK(beam.groups[0].members == brute.groups[0].members);
  CHECK(beam.groups[0].score == brute.groups[0].score);
}

TEST_CASE("brute force returns every subset when l is large") {
  const auto v = id_vocab(12);
  const AntonymLexicon lex;
  const CounterfactualEditor ed(lex, v);
  const auto p = tiny_model(3);
  const auto s = sample_from_ids("s", {3, 4, 5, 6}, 0);
  const auto all = brute_force_groups(p, s, std::vector<std::string>{"w3", "w4", "w5"}, ed, 3, 100);
  CHECK(all.groups.size() == 7);
  for (std::size_t i = 1; i < all.groups.size(); ++i) CHECK_FALSE(ranks_before(all.groups[i], all.groups[i - 1]));
  std::vector<std::string> many;
  for (int i = 0; i < 13; ++i) many.push_back("w" + std::to_string(i));
  CHECK_THROWS_AS(brute_force_groups(p, s, many, ed, 2, 3), ContractError);
}

TEST_CASE("beam search properties on random instances") {
  constexpr int kVocab = 14;
  const auto v = id_vocab(kVocab);
  AntonymLexicon lex;
  lex.add("w3", std::vector<std::string>{"w4"});
  lex.add("w7", std::vector<std::string>{"w9"});
  const CounterfactualEditor ed(lex, v);
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = tiny_model(500 + trial, kVocab, 4, 6, Activation::tanh, 1.0);
    const auto s = sample_from_ids("s", random_ids(rng, kVocab, 2, 9), 0);
    std::vector<std::string> cands;
    for (const auto& t : s.tokens) {
      if (std::find(cands.begin(), cands.end(), t) == cands.end() && rng.bernoulli(0.7)) cands.push_back(t);
    }
    if (cands.empty()) cands.push_back(s.tokens[0]);
    SearchConfig cfg;
    cfg.max_group_len = 1 + static_cast<int>(rng.below(3));
    cfg.num_groups = 1 + static_cast<int>(rng.below(4));

    double prev_best = -1.0;
    for (int k = 1; k <= 6; ++k) {
      cfg.beam_width = k;
      const auto g = beam_search(p, s, cands, ed, cfg);
      REQUIRE(!g.groups.empty());
      CHECK(g.groups.size() <= static_cast<std::size_t>(cfg.num_groups));
      for (std::size_t i = 0; i < g.groups.size(); ++i) {
        const auto& m = g.groups[i].members;
        CHECK(m.size() >= 1);
        CHECK(m.size() <= static_cast<std::size_t>(cfg.max_group_len));
        CHECK(std::is_sorted(m.begin(), m.end()));
        CHECK(std::adjacent_find(m.begin(), m.end()) == m.end());
        for (const auto& w : m) CHECK(std::find(cands.begin(), cands.end(), w) != cands.end());
        CHECK(g.groups[i].score >= 0.0);
        if (i) CHECK_FALSE(ranks_before(g.groups[i], g.groups[i - 1]));
      }
      CHECK(g.groups[0].score >= prev_best);
      prev_best = g.groups[0].score;
    }
  }
}

TEST_CASE("mine_groups serial and parallel agree") {
  constexpr int kVocab = 14;
  const auto v = id_vocab(kVocab);
  const AntonymLexicon lex;
  const CounterfactualEditor ed(lex, v);
  Rng rng(5);
  const auto p = tiny_model(6, kVocab);
  std::vector<TokenizedSample> samples;
  for (int i = 0; i < 40; ++i) samples.push_back(sample_from_ids(std::to_string(i), random_ids(rng, kVocab, 1, 8), 0));
  const CandidateSet cands({{"w3", 1, 1}, {"w5", 1, 1}, {"w8", 1, 1}, {"w11", 1, 1}});
  const auto a = mine_groups(p, samples, cands, ed, {}, Exec::serial);
  const auto b = mine_groups(p, samples, cands, ed, {}, Exec::parallel);
  REQUIRE(a.size() == samples.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample_id == samples[i].sample_id);
    CHECK(a[i].candidates == candidates_for_sample(cands, samples[i]));
    REQUIRE(a[i].groups.size() == b[i].groups.size());
    for (std::size_t g = 0; g < a[i].groups.size(); ++g) {
      CHECK(a[i].groups[g].members == b[i].groups[g].members);
      CHECK(a[i].groups[g].score == b[i].groups[g].score);
    }
  }
}

TEST_CASE("search config validation") {
  SearchConfig c;
  CHECK_NOTHROW(c.validate());
  c.beam_width = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = {};
  c.max_group_len = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = {};
  c.num_groups = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}
