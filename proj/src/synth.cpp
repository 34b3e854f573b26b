#include "acwg/synth.hpp"

#include "acwg/json_io.hpp"
#include "acwg/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace acwg {

namespace {

const std::pair<const char*, const char*> kCausalPairs[] = {
    {"good", "bad"},           {"great", "terrible"},      {"excellent", "awful"},      {"wonderful", "horrible"},
    {"love", "hate"},          {"best", "worst"},          {"amazing", "dreadful"},     {"brilliant", "dull"},
    {"enjoyable", "boring"},   {"happy", "sad"},           {"beautiful", "ugly"},       {"fun", "tedious"},
    {"perfect", "flawed"},     {"superb", "poor"},         {"delightful", "miserable"}, {"fantastic", "lousy"},
    {"pleasant", "unpleasant"}, {"charming", "annoying"},  {"clever", "stupid"},        {"fresh", "stale"},
    {"gripping", "tiresome"},  {"memorable", "forgettable"}, {"strong", "weak"},        {"exciting", "bland"},
    {"smart", "dumb"},         {"rich", "shallow"},        {"warm", "cold"},            {"moving", "flat"},
    {"recommend", "avoid"},    {"favorite", "disappointing"}, {"polished", "sloppy"},   {"inspired", "lazy"},
    {"elegant", "clumsy"},     {"satisfying", "frustrating"}, {"remarkable", "mediocre"},
    {"masterful", "amateurish"}, {"engaging", "dreary"},   {"solid", "shoddy"},         {"vivid", "lifeless"},
    {"uplifting", "depressing"},
};

const std::pair<const char*, const char*> kAttributePairs[] = {
    {"he", "she"}, {"man", "woman"}, {"boy", "girl"}, {"father", "mother"}, {"son", "daughter"}, {"king", "queen"},
};

// index 0 co-occurs with label 0, index 1 with label 1
const char* const kShortcuts[] = {"kubrick", "spielberg"};

std::vector<std::string> filler_vocabulary(int n, const std::set<std::string>& taken) {
  static const char consonants[] = "bdfgklmnprstvz";
  static const char vowels[] = "aeiou";
  std::vector<std::string> out;
  // 70^3 possible words; an odd multiplier coprime to 5 and 7 permutes them
  // so consecutive indices do not share syllables.
  constexpr std::uint64_t kSpace = 70 * 70 * 70;
  for (std::uint64_t i = 0; static_cast<int>(out.size()) < n; ++i) {
    std::string w;
    auto k = (i * 2654435761ULL) % kSpace;
    for (int syl = 0; syl < 3; ++syl) {
      w += consonants[k % 14];
      k /= 14;
      w += vowels[k % 5];
      k /= 5;
    }
    if (!taken.count(w)) out.push_back(w);
  }
  return out;
}

std::string pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

int uniform_int(int lo, int hi, Rng& rng) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::vector<Sample> generate_domain(const SynthConfig& c, const SynthDataset& d, const std::vector<std::string>& filler,
                                    int size, double shortcut, const std::string& name) {
  Rng rng(derive_seed(c.seed, name));
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(size));
  const auto pairs = static_cast<std::uint64_t>(c.num_pairs);
  for (int n = 0; n < size; ++n) {
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    std::vector<std::string> tokens;
    std::vector<std::uint64_t> order(pairs);
    for (std::uint64_t i = 0; i < pairs; ++i) order[i] = i;
    rng.shuffle(order);
    const bool sparse = rng.bernoulli(c.sparse_prob);
    const int k = sparse ? 1 : uniform_int(c.min_causal, c.max_causal, rng);
    for (int i = 0; i < k; ++i) {
      const auto& p = d.causal_pairs[order[static_cast<std::size_t>(i)]];
      tokens.push_back(y == 1 ? p.first : p.second);
    }
    int distractors = 0;
    for (int i = 0; i < c.max_distractors; ++i) distractors += rng.bernoulli(c.distractor_prob);
    distractors = std::min(distractors, k - 1);
    for (int i = 0; i < distractors; ++i) {
      const auto& p = d.causal_pairs[order[static_cast<std::size_t>(k + i)]];
      tokens.push_back(y == 1 ? p.second : p.first);
    }
    tokens.push_back(d.shortcut_tokens[static_cast<std::size_t>(rng.bernoulli(shortcut) ? y : 1 - y)]);
    const int f = uniform_int(c.min_filler, c.max_filler, rng);
    for (int i = 0; i < f; ++i) tokens.push_back(pick(filler, rng));
    if (rng.bernoulli(c.attribute_prob)) {
      const bool first = rng.bernoulli(0.5);
      const int terms = uniform_int(1, 2, rng);
      for (int i = 0; i < terms; ++i) {
        const auto& p = d.attribute_pairs[rng.below(d.attribute_pairs.size())];
        tokens.push_back(first ? p.first : p.second);
      }
    }
    rng.shuffle(tokens);
    std::string text;
    for (const auto& t : tokens) text += (text.empty() ? "" : " ") + t;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05d", name.c_str(), n);
    out.push_back(Sample{id, normalize_text(text), y});
  }
  return out;
}

void write_samples(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back({{"id", s.id}, {"text", s.text}, {"label", s.label}});
  write_text_file(path, to_jsonl(rows));
}

}  // namespace

void SynthConfig::validate() const {
  const int max_pairs = static_cast<int>(std::size(kCausalPairs));
  if (train_size < 1 || test_size < 1) throw ContractError("synthetic split sizes must be >= 1");
  if (num_pairs < 2 || num_pairs > max_pairs) {
    throw ContractError("num_pairs must lie in [2, " + std::to_string(max_pairs) + "]");
  }
  if (min_causal < 1 || max_causal < min_causal || max_distractors < 0 ||
      max_causal + max_distractors > num_pairs) {
    throw ContractError("need 1 <= min_causal <= max_causal and max_causal + max_distractors <= num_pairs");
  }
  if (filler_words < 1 || filler_words > 100000 || min_filler < 0 || max_filler < min_filler) {
    throw ContractError("invalid filler settings");
  }
  for (double p : {sparse_prob, distractor_prob, source_shortcut, target_shortcut, attribute_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("synthetic probabilities must lie in [0, 1]");
  }
}

json to_json(const SynthConfig& c) {
  return {{"seed", c.seed},
          {"train_size", c.train_size},
          {"test_size", c.test_size},
          {"num_pairs", c.num_pairs},
          {"filler_words", c.filler_words},
          {"min_filler", c.min_filler},
          {"max_filler", c.max_filler},
          {"min_causal", c.min_causal},
          {"max_causal", c.max_causal},
          {"sparse_prob", c.sparse_prob},
          {"max_distractors", c.max_distractors},
          {"distractor_prob", c.distractor_prob},
          {"source_shortcut", c.source_shortcut},
          {"target_shortcut", c.target_shortcut},
          {"attribute_prob", c.attribute_prob}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
  check_keys(j,
             {"seed", "train_size", "test_size", "num_pairs", "filler_words", "min_filler", "max_filler",
              "min_causal", "max_causal", "sparse_prob", "max_distractors", "distractor_prob", "source_shortcut",
              "target_shortcut", "attribute_prob"},
             "synthetic config");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("seed", c.seed);
  get("train_size", c.train_size);
  get("test_size", c.test_size);
  get("num_pairs", c.num_pairs);
  get("filler_words", c.filler_words);
  get("min_filler", c.min_filler);
  get("max_filler", c.max_filler);
  get("min_causal", c.min_causal);
  get("max_causal", c.max_causal);
  get("sparse_prob", c.sparse_prob);
  get("max_distractors", c.max_distractors);
  get("distractor_prob", c.distractor_prob);
  get("source_shortcut", c.source_shortcut);
  get("target_shortcut", c.target_shortcut);
  get("attribute_prob", c.attribute_prob);
  return c;
}

SynthDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  SynthDataset d;
  std::set<std::string> taken;
  for (int i = 0; i < config.num_pairs; ++i) {
    d.causal_pairs.emplace_back(kCausalPairs[i].first, kCausalPairs[i].second);
    taken.insert(kCausalPairs[i].first);
    taken.insert(kCausalPairs[i].second);
  }
  for (const auto& p : kAttributePairs) {
    d.attribute_pairs.emplace_back(p.first, p.second);
    taken.insert(p.first);
    taken.insert(p.second);
  }
  d.shortcut_tokens = {kShortcuts[0], kShortcuts[1]};
  taken.insert(kShortcuts[0]);
  taken.insert(kShortcuts[1]);
  const auto filler = filler_vocabulary(config.filler_words, taken);

  d.source_train = generate_domain(config, d, filler, config.train_size, config.source_shortcut, "train");
  d.source_test = generate_domain(config, d, filler, config.test_size, config.source_shortcut, "source");
  d.target_test = generate_domain(config, d, filler, config.test_size, config.target_shortcut, "target");
  return d;
}

void write_synthetic(const SynthDataset& data, const std::filesystem::path& dir) {
  write_samples(data.source_train, dir / "source_train.jsonl");
  write_samples(data.source_test, dir / "source_test.jsonl");
  write_samples(data.target_test, dir / "target_test.jsonl");
  std::string ant;
  for (const auto& [p, n] : data.causal_pairs) {
    ant += p + '\t' + n + '\n';
    ant += n + '\t' + p + '\n';
  }
  write_text_file(dir / "antonyms.tsv", ant);
  std::string attr;
  for (const auto& [a, b] : data.attribute_pairs) attr += a + '\t' + b + '\n';
  write_text_file(dir / "attributes.tsv", attr);
}

AntonymLexicon synthetic_antonyms(const SynthDataset& data) {
  AntonymLexicon lex;
  for (const auto& [p, n] : data.causal_pairs) {
    lex.add(p, std::vector<std::string>{n});
    lex.add(n, std::vector<std::string>{p});
  }
  return lex;
}

AttributePairLexicon synthetic_attributes(const SynthDataset& data) {
  AttributePairLexicon lex;
  for (const auto& [a, b] : data.attribute_pairs) lex.add(a, b);
  return lex;
}

}  // namespace acwg
