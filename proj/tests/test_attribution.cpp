#include "support.hpp"

#include "acwg/attribution.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace acwg;
using namespace acwg::testing;

namespace {

AttributionRecord record_with_norms(const TokenizedSample& s, std::vector<double> norms) {
  AttributionRecord r;
  r.sample_id = s.sample_id;
  r.tokens = s.tokens;
  r.token_ids = s.token_ids;
  r.vectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), 1);
  for (std::size_t i = 0; i < norms.size(); ++i) r.vectors(static_cast<Eigen::Index>(i), 0) = norms[i];
  r.norms = std::move(norms);
  r.steps = 1;
  return r;
}

CorpusScoreTable table_of(std::vector<CorpusScore> entries) {
  CorpusScoreTable t;
  t.entries = std::move(entries);
  return t;
}

}  // namespace

TEST_CASE("IG on a linear functional is exact for any m") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = tiny_model(50 + trial, 12, 4, 5, Activation::identity);
    const auto s = sample_from_ids("s", random_ids(rng, 12, 1, 6), 1);
    const auto sel = OutputSelector::logit_margin(trial % 2);
    const Eigen::MatrixXd x = lookup_embeddings(p, s.token_ids);
    const Eigen::MatrixXd expect = x.cwiseProduct(grad_wrt_embeddings(p, s.token_ids, x, sel));
    for (int m : {1, 3, 50, 1000}) {
      const auto r = integrated_gradients(p, s, m, sel);
      CHECK(r.steps == m);
      CHECK((r.vectors - expect).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("IG of a token with a zero embedding is zero") {
  auto p = tiny_model(2);
  p.embedding.row(5).setZero();
  const auto s = sample_from_ids("s", {4, 5, 6}, 0);
  const auto r = integrated_gradients(p, s, 50, OutputSelector::class_probability(0));
  CHECK(r.vectors.row(1).isZero(0.0));
  CHECK(r.norms[1] == 0.0);
}

TEST_CASE("IG norms are the L2 norms of the stored vectors") {
  Rng rng(3);
  const auto p = tiny_model(3);
  for (int i = 0; i < 20; ++i) {
    const auto s = sample_from_ids("s", random_ids(rng, 12, 1, 8), static_cast<int>(rng.below(2)));
    const auto r = integrated_gradients(p, s, 20, OutputSelector::class_probability(s.label));
    REQUIRE(r.norms.size() == s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
      CHECK(r.norms[k] >= 0.0);
      CHECK(std::abs(r.norms[k] - r.vectors.row(static_cast<Eigen::Index>(k)).norm()) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(integrated_gradients(p, sample_from_ids("s", {3}, 0), 0, OutputSelector::class_probability(0)),
                  ContractError);
}

TEST_CASE("IG completeness gap shrinks with m") {
  const auto p = tiny_model(4, 12, 4, 5, Activation::tanh, 3.0);
  Rng rng(4);
  int checked = 0;
  for (int i = 0; i < 30; ++i) {
    const auto s = sample_from_ids("s", random_ids(rng, 12, 2, 5), 0);
    const auto sel = OutputSelector::class_logit(0);
    const double fx = sel.value(forward(p, s.token_ids));
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), 4);
    const double delta = fx - sel.value(forward(p, s.token_ids, zero));
    if (std::abs(delta) < 0.05) continue;
    ++checked;
    const auto gap = [&](int m) {
      return std::abs(integrated_gradients(p, s, m, sel).vectors.sum() - delta) / std::abs(delta);
    };
    const double g5 = gap(5), g50 = gap(50), g500 = gap(500), g10k = gap(10000);
    CHECK(g5 >= g50);
    CHECK(g50 >= g500);
    CHECK(g500 >= g10k);
    CHECK(g50 < 0.05);
  }
  CHECK(checked > 5);
}

TEST_CASE("attribute_corpus serial and parallel agree") {
  Rng rng(5);
  const auto p = tiny_model(5);
  std::vector<TokenizedSample> corpus;
  for (int i = 0; i < 30; ++i) {
    corpus.push_back(sample_from_ids(std::to_string(i), random_ids(rng, 12, 1, 6), static_cast<int>(rng.below(2))));
  }
  const auto a = attribute_corpus(p, corpus, 10, Exec::serial);
  const auto b = attribute_corpus(p, corpus, 10, Exec::parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample_id == corpus[i].sample_id);
    CHECK(a[i].vectors == b[i].vectors);
    CHECK(a[i].norms == b[i].norms);
  }
}

TEST_CASE("corpus scores are mean norms per word") {
  std::vector<std::pair<std::string, std::int64_t>> entries{{"w3", 2}, {"w4", 1}};
  const auto vocab = Vocabulary::from_entries(entries);
  const auto s1 = sample_from_ids("a", {3, 4}, 0);
  const auto s2 = sample_from_ids("b", {3}, 0);
  const std::vector<AttributionRecord> records{record_with_norms(s1, {1.0, 0.5}), record_with_norms(s2, {3.0})};
  const auto t = compute_corpus_scores(records, vocab);
  REQUIRE(t.find("w3"));
  CHECK(t.find("w3")->score == 2.0);
  CHECK(t.find("w3")->freq == 2);
  CHECK(t.find("w4")->score == 0.5);

  // an occurrence count that disagrees with the vocabulary
  const std::vector<AttributionRecord> partial{record_with_norms(s1, {1.0, 0.5})};
  CHECK_THROWS_AS(compute_corpus_scores(partial, vocab), DataError);
}

TEST_CASE("corpus scores match a brute-force accumulation") {
  Rng rng(6);
  const auto p = tiny_model(6, 16);
  std::vector<TokenizedSample> corpus;
  std::map<int, std::int64_t> freq;
  for (int i = 0; i < 120; ++i) {
    const auto ids = random_ids(rng, 16, 1, 7);
    for (int id : ids) ++freq[id];
    corpus.push_back(sample_from_ids(std::to_string(i), ids, static_cast<int>(rng.below(2))));
  }
  std::vector<std::pair<std::string, std::int64_t>> entries;
  for (const auto& [id, n] : freq) entries.emplace_back("w" + std::to_string(id), n);
  const auto vocab = Vocabulary::from_entries(entries);
  for (auto& s : corpus) {
    for (std::size_t k = 0; k < s.size(); ++k) s.token_ids[k] = vocab.index(s.tokens[k]);
  }
  const auto records = attribute_corpus(p, corpus, 5);
  const auto t = compute_corpus_scores(records, vocab);

  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : records) {
    for (std::size_t k = 0; k < r.tokens.size(); ++k) {
      acc[r.tokens[k]].first += r.norms[k];
      ++acc[r.tokens[k]].second;
    }
  }
  CHECK(t.entries.size() == acc.size());
  for (const auto& [w, sn] : acc) {
    REQUIRE(t.find(w));
    CHECK(t.find(w)->freq == sn.second);
    CHECK(t.find(w)->score == doctest::Approx(sn.first / sn.second).epsilon(1e-12));
  }
}

TEST_CASE("select_candidates") {
  std::vector<CorpusScore> ten;
  for (int i = 0; i < 10; ++i) ten.push_back({"w" + std::to_string(i), 0.1 * i, 1});
  const auto two = select_candidates(table_of(ten));
  REQUIRE(two.size() == 2);
  CHECK(two.ranked()[0].word == "w9");
  CHECK(two.ranked()[1].word == "w8");
  CHECK(select_candidates(table_of(ten), 1.0).size() == 10);
  CHECK(select_candidates(table_of(ten), 0.01).size() == 1);
  CHECK_THROWS_AS(select_candidates(table_of(ten), 0.0), ContractError);
  CHECK_THROWS_AS(select_candidates(table_of(ten), 1.5), ContractError);
  CHECK_THROWS_AS(select_candidates(table_of({})), ContractError);

  // ties: higher frequency first, then lexicographic
  const auto tied = select_candidates(table_of({{"b", 1.0, 1}, {"c", 1.0, 5}, {"a", 1.0, 1}, {"d", 0.5, 9}}), 1.0);
  std::vector<std::string> order;
  for (const auto& e : tied.ranked()) order.push_back(e.word);
  CHECK(order == std::vector<std::string>{"c", "a", "b", "d"});
}

TEST_CASE("select_candidates size formula and order invariance") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 1 + rng.below(60);
    std::vector<CorpusScore> entries;
    for (std::uint64_t i = 0; i < n; ++i) {
      entries.push_back({"w" + std::to_string(i), static_cast<double>(rng.below(5)), 1 + static_cast<std::int64_t>(rng.below(3))});
    }
    const double fraction = trial % 2 ? 0.2 : rng.uniform() * 0.9 + 0.1;
    const auto a = select_candidates(table_of(entries), fraction);
    CHECK(a.size() == static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    rng.shuffle(entries);
    const auto b = select_candidates(table_of(entries), fraction);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.ranked()[i].word == b.ranked()[i].word);
  }
}

TEST_CASE("candidates_for_sample") {
  const CandidateSet cands({{"interesting", 3.0, 1}, {"important", 2.0, 1}, {"film", 1.0, 1}});
  TokenizedSample s;
  s.tokens = {"a", "interesting", "and", "important", "film"};
  s.token_ids = {3, 4, 5, 6, 7};
  CHECK(candidates_for_sample(cands, s) == std::vector<std::string>{"interesting", "important", "film"});
  s.tokens = {"film", "a", "film", "important"};
  s.token_ids = {7, 3, 7, 6};
  CHECK(candidates_for_sample(cands, s) == std::vector<std::string>{"film", "important"});
  s.tokens = {"a", "and"};
  s.token_ids = {3, 5};
  CHECK(candidates_for_sample(cands, s).empty());
}
