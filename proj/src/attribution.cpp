#include "acwg/attribution.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace acwg {

AttributionRecord integrated_gradients(const ClassifierParams& model, const TokenizedSample& sample, int steps,
                                       const OutputSelector& selector) {
  if (steps < 1) throw ContractError("integrated gradients needs at least one step");
  if (sample.token_ids.empty()) throw ContractError("integrated gradients on an empty sample");
  const Eigen::MatrixXd x = lookup_embeddings(model, sample.token_ids);
  // baseline is the all-zero embedding, so x - baseline == x
  Eigen::MatrixXd grad_sum = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (int j = 1; j <= steps; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(steps);
    const Eigen::MatrixXd point = alpha * x;
    Eigen::MatrixXd g;
    try {
      g = grad_wrt_embeddings(model, sample.token_ids, point, selector);
    } catch (const NumericError&) {
      throw NumericError("non-finite gradient at integrated-gradients step " + std::to_string(j) + " of sample " +
                         sample.sample_id);
    }
    grad_sum += g;
  }
  AttributionRecord rec;
  rec.sample_id = sample.sample_id;
  rec.tokens = sample.tokens;
  rec.token_ids = sample.token_ids;
  rec.steps = steps;
  rec.vectors = x.cwiseProduct(grad_sum / static_cast<double>(steps));
  if (!rec.vectors.allFinite()) throw NumericError("non-finite attribution for sample " + sample.sample_id);
  rec.norms.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) rec.norms[static_cast<std::size_t>(i)] = rec.vectors.row(i).norm();
  return rec;
}

std::vector<AttributionRecord> attribute_corpus(const ClassifierParams& model,
                                                std::span<const TokenizedSample> samples, int steps, Exec exec) {
  std::vector<AttributionRecord> out(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) {
    out[i] = integrated_gradients(model, samples[i], steps, OutputSelector::class_probability(samples[i].label));
  });
  return out;
}

const CorpusScore* CorpusScoreTable::find(std::string_view word) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), word,
                                   [](const CorpusScore& e, std::string_view w) { return e.word < w; });
  return it != entries.end() && it->word == word ? &*it : nullptr;
}

CorpusScoreTable compute_corpus_scores(std::span<const AttributionRecord> records, const Vocabulary& vocab) {
  struct Acc {
    double sum = 0.0;
    std::int64_t count = 0;
  };
  // records are consumed in order, so the floating-point sums are reproducible
  std::map<int, Acc> acc;
  for (const AttributionRecord& r : records) {
    if (r.norms.size() != r.token_ids.size()) throw DataError("attribution record " + r.sample_id + " is inconsistent");
    for (std::size_t i = 0; i < r.token_ids.size(); ++i) {
      const int id = r.token_ids[i];
      if (Vocabulary::is_reserved(id)) continue;
      auto& a = acc[id];
      a.sum += r.norms[i];
      ++a.count;
    }
  }
  CorpusScoreTable table;
  for (const auto& [id, a] : acc) {
    if (a.count != vocab.freq(id)) {
      throw DataError("occurrence count of '" + vocab.word(id) + "' (" + std::to_string(a.count) +
                      ") does not match its corpus frequency (" + std::to_string(vocab.freq(id)) +
                      "); attribution records must cover the full training corpus");
    }
    table.entries.push_back(CorpusScore{vocab.word(id), a.sum / static_cast<double>(a.count), a.count});
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const CorpusScore& a, const CorpusScore& b) { return a.word < b.word; });
  return table;
}

CandidateSet::CandidateSet(std::vector<CorpusScore> ranked) : ranked_(std::move(ranked)) {
  for (const auto& e : ranked_) members_.insert(e.word);
}

CandidateSet select_candidates(const CorpusScoreTable& table, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("candidate fraction must lie in (0, 1]");
  std::vector<CorpusScore> ranked;
  for (const auto& e : table.entries) {
    if (e.word != kPadToken && e.word != kMaskToken && e.word != kUnkToken) ranked.push_back(e);
  }
  if (ranked.empty()) throw ContractError("cannot select candidates from an empty score table");
  std::sort(ranked.begin(), ranked.end(), [](const CorpusScore& a, const CorpusScore& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.freq != b.freq) return a.freq > b.freq;
    return a.word < b.word;
  });
  // the small epsilon keeps e.g. 0.2 * 10 from rounding up to 3
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ranked.size()) - 1e-9));
  ranked.resize(std::max<std::size_t>(1, keep));
  return CandidateSet(std::move(ranked));
}

std::vector<std::string> candidates_for_sample(const CandidateSet& candidates, const TokenizedSample& sample) {
  std::vector<std::string> out;
  for (const std::string& tok : sample.tokens) {
    if (candidates.contains(tok) && std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
  }
  return out;
}

}  // namespace acwg
