// Serial reference vs OpenMP path of the data-parallel kernels.
// Arg 0 = Exec::serial, 1 = Exec::parallel.

#include "acwg/attribution.hpp"
#include "acwg/augmentation.hpp"
#include "acwg/evaluation.hpp"
#include "acwg/synth.hpp"
#include "acwg/trainer.hpp"
#include "acwg/wordgroup.hpp"

#include <benchmark/benchmark.h>

using namespace acwg;

namespace {

struct Fixture {
  SynthDataset data;
  Vocabulary vocab;
  AntonymLexicon antonyms;
  std::vector<TokenizedSample> train;
  ClassifierParams model;
  CandidateSet candidates;
  std::vector<GroupSet> groups;
  std::vector<AugmentedSet> augs;
  ContrastiveHead head;

  Fixture() : data(generate_synthetic(SynthConfig{})), vocab(build_vocab(data.source_train)) {
    for (const auto& [pos, neg] : data.causal_pairs) {
      antonyms.add(pos, std::vector<std::string>{neg});
      antonyms.add(neg, std::vector<std::string>{pos});
    }
    train = tokenize_samples(data.source_train, vocab);
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(vocab.size());
    model = init_params(mc);
    candidates = select_candidates(compute_corpus_scores(attribute_corpus(model, train, 10), vocab));
    const CounterfactualEditor editor(antonyms, vocab);
    groups = mine_groups(model, train, candidates, editor, {});
    augs = build_augmented_batch(train, groups, editor, {}).sets;
    HeadConfig hc;
    hc.input_dim = mc.hidden_dim;
    head = init_head(hc);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

std::span<const TokenizedSample> first(const std::vector<TokenizedSample>& v, std::size_t n) {
  return std::span(v).first(std::min(n, v.size()));
}

void BM_predict_batch(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(f.model, f.train, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.train.size()));
}

void BM_attribute_corpus(benchmark::State& state) {
  const auto& f = fixture();
  const auto samples = first(f.train, 200);
  for (auto _ : state) benchmark::DoNotOptimize(attribute_corpus(f.model, samples, kDefaultIgSteps, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(samples.size()));
}

void BM_mine_groups(benchmark::State& state) {
  const auto& f = fixture();
  const CounterfactualEditor editor(f.antonyms, f.vocab);
  const auto samples = first(f.train, 200);
  for (auto _ : state) benchmark::DoNotOptimize(mine_groups(f.model, samples, f.candidates, editor, {}, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(samples.size()));
}

void BM_acwg_objective(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<TokenizedSample> batch;
  std::vector<const AugmentedSet*> augs;
  for (std::size_t i = 0; i < 64 && i < f.augs.size(); ++i) {
    batch.push_back(f.augs[i].anchor);
    augs.push_back(&f.augs[i]);
  }
  AcwgConfig cfg;
  for (auto _ : state) {
    ObjectiveGrads g{BackboneGrads::zeros(f.model), HeadGrads::zeros(f.head)};
    benchmark::DoNotOptimize(acwg_objective(f.model, f.head, batch, augs, cfg, &g, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch.size()));
}

void BM_attack_dataset(benchmark::State& state) {
  const auto& f = fixture();
  const CounterfactualEditor editor(f.antonyms, f.vocab);
  const auto samples = first(f.train, 200);
  for (auto _ : state) benchmark::DoNotOptimize(attack_dataset(f.model, samples, 3, editor, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(samples.size()));
}

}  // namespace

BENCHMARK(BM_predict_batch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_attribute_corpus)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mine_groups)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_acwg_objective)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_attack_dataset)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
