#include "acwg/pipeline.hpp"

#include "acwg/attribution.hpp"
#include "acwg/evaluation.hpp"
#include "acwg/json_io.hpp"
#include "acwg/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <map>

namespace acwg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStageOrder[] = {"synth", "train-base", "mine", "augment", "train-acwg", "eval:base", "eval:acwg"};

int stage_rank(std::string_view stage) {
  for (int i = 0; i < static_cast<int>(std::size(kStageOrder)); ++i) {
    if (stage == kStageOrder[i]) return i;
  }
  throw ContractError("unknown stage '" + std::string(stage) + "'");
}

void reject_keys(const json& j, std::initializer_list<const char*> keys, std::string_view context,
                 std::string_view hint) {
  for (const char* k : keys) {
    if (j.contains(k)) {
      throw ContractError("key '" + std::string(k) + "' is not allowed in " + std::string(context) + "; " +
                          std::string(hint));
    }
  }
}

fs::path resolve(const fs::path& base_dir, const json& v) {
  fs::path p = v.get<std::string>();
  if (p.is_relative()) p = base_dir / p;
  p = fs::absolute(p).lexically_normal();
  // "dir/." normalizes to "dir/"; drop the separator so equal paths compare equal
  if (!p.has_filename() && p.has_relative_path()) p = p.parent_path();
  return p;
}

json model_json(const ModelConfig& m) {
  json j = to_json(m);
  j.erase("seed");
  j.erase("vocab_size");
  j["train"].erase("seed");
  return j;
}

json acwg_json(const AcwgConfig& a) {
  json j = to_json(a);
  j["train"].erase("seed");
  return j;
}

std::string hex(const unsigned char* md, unsigned len) {
  static const char digits[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[md[i] >> 4];
    out += digits[md[i] & 15];
  }
  return out;
}

std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) throw Error("SHA-1 failed");
  return hex(md, len);
}

void require(const fs::path& dir, const std::string& name, const char* producer) {
  if (!fs::exists(dir / name)) {
    throw DependencyError(name, "missing artifact " + (dir / name).string() + "; run `acwg " + producer + "` first");
  }
}

void require_input(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw DependencyError(p.string(), std::string("missing ") + what + " file " + p.string());
}

// Collects blob ids of what a command reads and writes, then appends the
// command's record to the manifest.
class Recorder {
 public:
  explicit Recorder(fs::path out) : out_(std::move(out)) {}

  void data(const std::string& key, const fs::path& path) { inputs_.emplace_back("data:" + key, file_blob_id(path)); }
  void artifact(const std::string& rel) { inputs_.emplace_back(rel, file_blob_id(out_ / rel)); }
  void output(const std::string& rel) { outputs_.emplace_back(rel, file_blob_id(out_ / rel)); }

  void commit(std::string stage, json config, std::string hash, std::uint64_t seed) {
    Manifest m = read_manifest(out_);
    m.put(StageRecord{std::move(stage), std::move(config), std::move(hash), seed, inputs_, outputs_});
    write_manifest(out_, m);
  }

 private:
  fs::path out_;
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
};

void apply_jobs(const PipelineConfig& c) {
  if (c.jobs > 0) set_jobs(c.jobs);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::vector<TokenizedSample> load_tokenized(const fs::path& path, const Vocabulary& vocab) {
  return tokenize_samples(load_dataset(path).samples, vocab);
}

struct EvalSet {
  std::string name;
  fs::path path;
};

std::vector<EvalSet> eval_sets(const PipelineConfig& c) {
  std::vector<EvalSet> sets{{"source_test", c.data.source_test}};
  for (const auto& t : c.data.target_tests) sets.push_back({t.name, t.path});
  return sets;
}

AugmentConfig augment_config(const PipelineConfig& c) {
  return AugmentConfig{effective_search(c).num_groups, c.mask_prob, stage_seeds(c.seed).augment};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

StageSeeds stage_seeds(std::uint64_t seed) {
  return StageSeeds{derive_seed(seed, "model-init"), derive_seed(seed, "erm-order"), derive_seed(seed, "head-init"),
                    derive_seed(seed, "acwg-order"), derive_seed(seed, "augment")};
}

SearchConfig effective_search(const PipelineConfig& c) {
  SearchConfig s = c.search;
  if (c.acwg.ablation == Ablation::wo_wordgroups) {
    // Only the single keyword with the largest causal effect.
    s.max_group_len = 1;
    s.num_groups = 1;
  }
  return s;
}

ModelConfig effective_model(const PipelineConfig& c, int vocab_size) {
  ModelConfig m = c.model;
  const StageSeeds s = stage_seeds(c.seed);
  m.vocab_size = vocab_size;
  m.seed = s.model_init;
  m.train.seed = s.erm_order;
  return m;
}

HeadConfig effective_head(const PipelineConfig& c) {
  HeadConfig h;
  h.input_dim = c.model.hidden_dim;
  h.hidden_dim = c.head_hidden_dim;
  h.output_dim = c.head_output_dim;
  h.num_groups = effective_search(c).num_groups;
  h.seed = stage_seeds(c.seed).head_init;
  return h;
}

AcwgConfig effective_acwg(const PipelineConfig& c) {
  AcwgConfig a = c.acwg;
  a.train.seed = stage_seeds(c.seed).acwg_order;
  return a;
}

std::string to_string(EvalModel m) { return m == EvalModel::base ? "base" : "acwg"; }

EvalModel parse_eval_model(std::string_view s) {
  if (s == "base") return EvalModel::base;
  if (s == "acwg") return EvalModel::acwg;
  throw ContractError("unknown eval model '" + std::string(s) + "' (expected base or acwg)");
}

void PipelineConfig::validate() const {
  effective_model(*this, kNumReserved + 1).validate();
  effective_search(*this).validate();
  effective_head(*this).validate();
  effective_acwg(*this).validate();
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  if (ig_steps < 1) throw ContractError("ig_steps must be >= 1");
  if (!(candidate_fraction > 0.0 && candidate_fraction <= 1.0)) {
    throw ContractError("candidate_fraction must lie in (0, 1]");
  }
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw ContractError("mask_prob must lie in [0, 1]");
  if (jobs < 0) throw ContractError("jobs must be >= 0");
  for (int b : eval.attack_budgets) {
    if (b < 0) throw ContractError("attack budgets must be >= 0");
  }
  std::vector<std::string> names{"source_test", "source_train", "antonyms", "attributes"};
  for (const auto& t : data.target_tests) {
    if (t.name.empty() || std::find(names.begin(), names.end(), t.name) != names.end()) {
      throw ContractError("target test names must be non-empty, distinct and not one of source_test, "
                          "source_train, antonyms, attributes");
    }
    names.push_back(t.name);
  }
  require_input(data.source_train, "source train");
  require_input(data.source_test, "source test");
  for (const auto& t : data.target_tests) require_input(t.path, "target test");
  require_input(data.antonyms, "antonym lexicon");
  if (!data.attributes.empty()) require_input(data.attributes, "attribute lexicon");
}

json to_json(const PipelineConfig& c) {
  json targets = json::array();
  for (const auto& t : c.data.target_tests) targets.push_back({{"name", t.name}, {"path", t.path.string()}});
  json data = {{"source_train", c.data.source_train.string()},
               {"source_test", c.data.source_test.string()},
               {"target_tests", targets},
               {"antonyms", c.data.antonyms.string()},
               {"min_count", c.min_count}};
  if (!c.data.attributes.empty()) data["attributes"] = c.data.attributes.string();
  return {{"seed", c.seed},
          {"out", c.out.string()},
          {"jobs", c.jobs},
          {"data", data},
          {"model", model_json(c.model)},
          {"mining",
           {{"ig_steps", c.ig_steps},
            {"candidate_fraction", c.candidate_fraction},
            {"beam_width", c.search.beam_width},
            {"max_group_len", c.search.max_group_len},
            {"num_groups", c.search.num_groups}}},
          {"augment", {{"mask_prob", c.mask_prob}}},
          {"head", {{"hidden_dim", c.head_hidden_dim}, {"output_dim", c.head_output_dim}}},
          {"acwg", [&] {
             json a = acwg_json(c.acwg);
             a["init"] = c.fresh ? "fresh" : "continue";
             a["remine"] = c.remine;
             return a;
           }()},
          {"eval",
           {{"model", to_string(c.eval.model)},
            {"accuracy", c.eval.accuracy},
            {"lfr", c.eval.lfr},
            {"attack", c.eval.attack},
            {"fairness", c.eval.fairness},
            {"attack_budgets", c.eval.attack_budgets}}}};
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir, PipelineConfig c) {
  const char* seed_hint = "set the top-level seed instead";
  try {
    check_keys(j, {"seed", "out", "jobs", "data", "model", "mining", "augment", "head", "acwg", "eval"}, "config");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) c.out = resolve(base_dir, j.at("out"));
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, {"source_train", "source_test", "target_tests", "antonyms", "attributes", "min_count"},
                 "data config");
      if (d.contains("source_train")) c.data.source_train = resolve(base_dir, d.at("source_train"));
      if (d.contains("source_test")) c.data.source_test = resolve(base_dir, d.at("source_test"));
      if (d.contains("antonyms")) c.data.antonyms = resolve(base_dir, d.at("antonyms"));
      if (d.contains("attributes")) c.data.attributes = resolve(base_dir, d.at("attributes"));
      if (d.contains("min_count")) c.min_count = d.at("min_count").get<int>();
      if (d.contains("target_tests")) {
        c.data.target_tests.clear();
        for (const auto& t : d.at("target_tests")) {
          check_keys(t, {"name", "path"}, "target test entry");
          c.data.target_tests.push_back({t.at("name").get<std::string>(), resolve(base_dir, t.at("path"))});
        }
      }
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      reject_keys(m, {"seed", "vocab_size"}, "model config", "the vocabulary size and seeds are derived");
      if (m.contains("train")) reject_keys(m.at("train"), {"seed"}, "model.train", seed_hint);
      c.model = model_config_from_json(m, c.model);
    }
    if (j.contains("mining")) {
      const json& m = j.at("mining");
      check_keys(m, {"ig_steps", "candidate_fraction", "beam_width", "max_group_len", "num_groups"}, "mining config");
      if (m.contains("ig_steps")) c.ig_steps = m.at("ig_steps").get<int>();
      if (m.contains("candidate_fraction")) c.candidate_fraction = m.at("candidate_fraction").get<double>();
      json s = m;
      s.erase("ig_steps");
      s.erase("candidate_fraction");
      c.search = search_config_from_json(s, c.search);
    }
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      check_keys(a, {"mask_prob"}, "augment config");
      if (a.contains("mask_prob")) c.mask_prob = a.at("mask_prob").get<double>();
    }
    if (j.contains("head")) {
      const json& h = j.at("head");
      check_keys(h, {"hidden_dim", "output_dim"}, "head config");
      if (h.contains("hidden_dim")) c.head_hidden_dim = h.at("hidden_dim").get<int>();
      if (h.contains("output_dim")) c.head_output_dim = h.at("output_dim").get<int>();
    }
    if (j.contains("acwg")) {
      json a = j.at("acwg");
      if (a.contains("train")) reject_keys(a.at("train"), {"seed"}, "acwg.train", seed_hint);
      if (a.contains("init")) {
        const auto init = a.at("init").get<std::string>();
        if (init != "fresh" && init != "continue") throw ContractError("acwg.init must be 'fresh' or 'continue'");
        c.fresh = init == "fresh";
        a.erase("init");
      }
      if (a.contains("remine")) {
        c.remine = a.at("remine").get<bool>();
        a.erase("remine");
      }
      c.acwg = acwg_config_from_json(a, c.acwg);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, {"model", "accuracy", "lfr", "attack", "fairness", "attack_budgets"}, "eval config");
      if (e.contains("model")) c.eval.model = parse_eval_model(e.at("model").get<std::string>());
      if (e.contains("accuracy")) c.eval.accuracy = e.at("accuracy").get<bool>();
      if (e.contains("lfr")) c.eval.lfr = e.at("lfr").get<bool>();
      if (e.contains("attack")) c.eval.attack = e.at("attack").get<bool>();
      if (e.contains("fairness")) c.eval.fairness = e.at("fairness").get<bool>();
      if (e.contains("attack_budgets")) c.eval.attack_budgets = e.at("attack_budgets").get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("bad config value: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& file) {
  if (!fs::exists(file)) throw DependencyError(file.string(), "config file " + file.string() + " not found");
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::parse_error& e) {
    throw ContractError(file.string() + ": " + e.what());
  }
  PipelineConfig base;
  base.out = fs::absolute(file).parent_path();
  return pipeline_config_from_json(j, fs::absolute(file).parent_path(), base);
}

PipelineConfig synthetic_pipeline_config(const fs::path& data_dir) {
  PipelineConfig c;
  c.data.source_train = data_dir / "source_train.jsonl";
  c.data.source_test = data_dir / "source_test.jsonl";
  c.data.target_tests = {{"target", data_dir / "target_test.jsonl"}};
  c.data.antonyms = data_dir / "antonyms.tsv";
  c.data.attributes = data_dir / "attributes.tsv";
  // Small embeddings keep filler words out of the candidate set; the
  // attribution norm is elementwise in the embedding.
  c.model.embed_init_scale = 0.01;
  c.model.train.learning_rate = 2e-3;
  c.model.train.epochs = 15;
  c.acwg.train = c.model.train;
  return c;
}

std::string config_hash(const PipelineConfig& c) {
  json j = to_json(c);
  j.erase("out");
  j.erase("jobs");
  return sha1_hex(j.dump());
}

std::string blob_id(std::string_view content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data.append(content);
  return sha1_hex(data);
}

std::string file_blob_id(const fs::path& path) { return blob_id(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Manifest

void Manifest::put(StageRecord record) {
  const int rank = stage_rank(record.stage);
  auto it = std::find_if(records.begin(), records.end(), [&](const StageRecord& r) { return r.stage == record.stage; });
  if (it != records.end()) {
    *it = std::move(record);
    return;
  }
  it = std::find_if(records.begin(), records.end(), [&](const StageRecord& r) { return stage_rank(r.stage) > rank; });
  records.insert(it, std::move(record));
}

const StageRecord* Manifest::find(std::string_view stage) const {
  for (const auto& r : records) {
    if (r.stage == stage) return &r;
  }
  return nullptr;
}

json to_json(const Manifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    json in = json::object(), out = json::object();
    for (const auto& [k, v] : r.inputs) in[k] = v;
    for (const auto& [k, v] : r.outputs) out[k] = v;
    records.push_back({{"stage", r.stage},
                       {"config", r.config},
                       {"config_hash", r.config_hash},
                       {"seed", r.seed},
                       {"inputs", in},
                       {"outputs", out}});
  }
  return {{"version", 1}, {"records", records}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    if (j.at("version").get<int>() != 1) throw DataError("unsupported manifest version");
    for (const auto& r : j.at("records")) {
      StageRecord rec;
      rec.stage = r.at("stage").get<std::string>();
      stage_rank(rec.stage);
      rec.config = r.at("config");
      rec.config_hash = r.at("config_hash").get<std::string>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      for (const auto& [k, v] : r.at("inputs").items()) rec.inputs.emplace_back(k, v.get<std::string>());
      for (const auto& [k, v] : r.at("outputs").items()) rec.outputs.emplace_back(k, v.get<std::string>());
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest read_manifest(const fs::path& out_dir) {
  const fs::path p = out_dir / "manifest.json";
  if (!fs::exists(p)) return {};
  try {
    return manifest_from_json(json::parse(read_text_file(p)));
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& out_dir, const Manifest& m) { write_text_file(out_dir / "manifest.json", dump(to_json(m))); }

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const SynthConfig& synth, const fs::path& out) {
  const SynthDataset data = generate_synthetic(synth);
  write_synthetic(data, out / "data");
  PipelineConfig pc = synthetic_pipeline_config("data");
  pc.seed = synth.seed;
  pc.out = ".";
  write_text_file(out / "config.json", dump(to_json(pc)));

  Recorder rec(out);
  for (const char* f : {"data/source_train.jsonl", "data/source_test.jsonl", "data/target_test.jsonl",
                        "data/antonyms.tsv", "data/attributes.tsv", "config.json"}) {
    rec.output(f);
  }
  const json cfg = to_json(synth);
  rec.commit("synth", cfg, sha1_hex(cfg.dump()), synth.seed);
}

void cmd_train_base(const PipelineConfig& config) {
  config.validate();
  apply_jobs(config);
  const fs::path& out = config.out;
  fs::create_directories(out);
  const auto loaded = load_dataset(config.data.source_train);
  const Vocabulary vocab = Vocabulary::build(loaded.samples, config.min_count);
  const auto train = tokenize_samples(loaded.samples, vocab);
  const ModelConfig mc = effective_model(config, static_cast<int>(vocab.size()));
  const ErmResult erm = train_erm(init_params(mc), train, mc.train);

  vocab.save(out / "vocab.tsv");
  save_params(erm.params, out / "base.ckpt");
  write_training_log(out / "base_log.jsonl", erm.trace);

  Recorder rec(out);
  rec.data("source_train", config.data.source_train);
  for (const char* f : {"vocab.tsv", "base.ckpt", "base_log.jsonl"}) rec.output(f);
  rec.commit("train-base", to_json(config), config_hash(config), config.seed);
}

void cmd_mine(const PipelineConfig& config) {
  config.validate();
  apply_jobs(config);
  const fs::path& out = config.out;
  require(out, "vocab.tsv", "train-base");
  require(out, "base.ckpt", "train-base");
  const Vocabulary vocab = Vocabulary::load(out / "vocab.tsv");
  const ClassifierParams model = load_params(out / "base.ckpt");
  const auto train = load_tokenized(config.data.source_train, vocab);
  const AntonymLexicon antonyms = AntonymLexicon::load(config.data.antonyms);
  const CounterfactualEditor editor(antonyms, vocab);

  const auto records = attribute_corpus(model, train, config.ig_steps);
  const CandidateSet candidates = select_candidates(compute_corpus_scores(records, vocab), config.candidate_fraction);
  const SearchConfig search = effective_search(config);
  const auto reports = mine_groups(model, train, candidates, editor, search);

  write_attributions(out / "attributions.jsonl", records);
  write_candidates(out / "candidates.tsv", candidates);
  write_group_reports(out / "groups.jsonl", reports, search);

  Recorder rec(out);
  rec.data("source_train", config.data.source_train);
  rec.data("antonyms", config.data.antonyms);
  rec.artifact("vocab.tsv");
  rec.artifact("base.ckpt");
  for (const char* f : {"attributions.jsonl", "candidates.tsv", "groups.jsonl"}) rec.output(f);
  rec.commit("mine", to_json(config), config_hash(config), config.seed);
}

void cmd_augment(const PipelineConfig& config) {
  config.validate();
  apply_jobs(config);
  const fs::path& out = config.out;
  require(out, "vocab.tsv", "train-base");
  require(out, "groups.jsonl", "mine");
  const Vocabulary vocab = Vocabulary::load(out / "vocab.tsv");
  const auto train = load_tokenized(config.data.source_train, vocab);
  const AntonymLexicon antonyms = AntonymLexicon::load(config.data.antonyms);
  const CounterfactualEditor editor(antonyms, vocab);
  const auto reports = read_group_reports(out / "groups.jsonl");

  const AugmentResult aug = build_augmented_batch(train, reports, editor, augment_config(config));
  write_augmentations(out / "augmentations.jsonl", aug.sets);
  write_text_file(out / "augment_summary.json",
                  dump({{"sets", aug.sets.size()}, {"flagged", aug.flagged}, {"mask_prob", config.mask_prob}}));

  Recorder rec(out);
  rec.data("source_train", config.data.source_train);
  rec.data("antonyms", config.data.antonyms);
  rec.artifact("vocab.tsv");
  rec.artifact("groups.jsonl");
  for (const char* f : {"augmentations.jsonl", "augment_summary.json"}) rec.output(f);
  rec.commit("augment", to_json(config), config_hash(config), config.seed);
}

void cmd_train_acwg(const PipelineConfig& config) {
  config.validate();
  apply_jobs(config);
  const fs::path& out = config.out;
  require(out, "vocab.tsv", "train-base");
  require(out, "base.ckpt", "train-base");
  require(out, "augmentations.jsonl", "augment");
  if (config.remine) require(out, "candidates.tsv", "mine");
  const Vocabulary vocab = Vocabulary::load(out / "vocab.tsv");
  const ClassifierParams base = load_params(out / "base.ckpt");
  const auto train = load_tokenized(config.data.source_train, vocab);
  const auto augs = read_augmentations(out / "augmentations.jsonl");

  // A fresh start reuses the initialization M' was trained from.
  ClassifierParams start = config.fresh ? init_params(base.config) : base;
  const ContrastiveHead head = init_head(effective_head(config));

  AugmentRefresher refresh;
  std::optional<AntonymLexicon> antonyms;
  std::optional<CandidateSet> candidates;
  if (config.remine) {
    antonyms = AntonymLexicon::load(config.data.antonyms);
    candidates = read_candidates(out / "candidates.tsv");
    refresh = [&](const ClassifierParams& params, int epoch) {
      const CounterfactualEditor editor(*antonyms, vocab);
      const auto reports = mine_groups(params, train, *candidates, editor, effective_search(config));
      AugmentConfig ac = augment_config(config);
      ac.seed = derive_seed(ac.seed, "epoch-" + std::to_string(epoch));
      return build_augmented_batch(train, reports, editor, ac).sets;
    };
  }
  const AcwgResult res = train_acwg(std::move(start), head, train, augs, effective_acwg(config), Exec::parallel, refresh);

  save_params(res.params, out / "acwg.ckpt");
  save_head(res.head, out / "head.ckpt");
  write_training_log(out / "acwg_log.jsonl", res.trace);

  Recorder rec(out);
  rec.data("source_train", config.data.source_train);
  if (config.remine) {
    rec.data("antonyms", config.data.antonyms);
    rec.artifact("candidates.tsv");
  }
  rec.artifact("vocab.tsv");
  rec.artifact("base.ckpt");
  rec.artifact("augmentations.jsonl");
  for (const char* f : {"acwg.ckpt", "head.ckpt", "acwg_log.jsonl"}) rec.output(f);
  rec.commit("train-acwg", to_json(config), config_hash(config), config.seed);
}

void cmd_eval(const PipelineConfig& config) {
  config.validate();
  apply_jobs(config);
  const fs::path& out = config.out;
  const std::string ckpt = config.eval.model == EvalModel::base ? "base.ckpt" : "acwg.ckpt";
  require(out, "vocab.tsv", "train-base");
  require(out, ckpt, config.eval.model == EvalModel::base ? "train-base" : "train-acwg");
  if (config.eval.lfr) require(out, "candidates.tsv", "mine");
  const Vocabulary vocab = Vocabulary::load(out / "vocab.tsv");
  const ClassifierParams model = load_params(out / ckpt);
  const AntonymLexicon antonyms = AntonymLexicon::load(config.data.antonyms);
  const CounterfactualEditor editor(antonyms, vocab);
  std::optional<AttributePairLexicon> attributes;
  if (config.eval.fairness && !config.data.attributes.empty()) {
    attributes = AttributePairLexicon::load(config.data.attributes);
  }
  std::optional<CandidateSet> candidates;
  if (config.eval.lfr) candidates = read_candidates(out / "candidates.tsv");
  // LFR always looks at three groups, whatever l is.
  SearchConfig lfr_search = config.search;
  lfr_search.num_groups = std::max(3, lfr_search.num_groups);

  Recorder rec(out);
  rec.artifact("vocab.tsv");
  rec.artifact(ckpt);
  if (candidates) rec.artifact("candidates.tsv");
  rec.data("antonyms", config.data.antonyms);
  if (attributes) rec.data("attributes", config.data.attributes);

  json report = {{"model", to_string(config.eval.model)},
                 {"checkpoint", file_blob_id(out / ckpt)},
                 {"seed", config.seed},
                 {"config_hash", config_hash(config)}};
  json accuracy = json::array(), lfr = json::object(), attack = json::object(), fairness = json::object();
  for (const auto& set : eval_sets(config)) {
    rec.data(set.name, set.path);
    const auto samples = load_tokenized(set.path, vocab);
    if (config.eval.accuracy) {
      accuracy.push_back(to_json(DomainAccuracy{set.name, samples.size(), evaluate_accuracy(model, samples)}));
    }
    if (config.eval.lfr) {
      const auto reports = mine_groups(model, samples, *candidates, editor, lfr_search);
      json modes = json::object();
      for (LfrMode m : {LfrMode::single_word, LfrMode::group_l1, LfrMode::group_l3}) {
        modes[to_string(m)] = to_json(label_flipping_rate(model, samples, m, reports, editor));
      }
      lfr[set.name] = modes;
    }
    if (config.eval.attack) {
      json rows = json::array();
      for (int k : config.eval.attack_budgets) rows.push_back(to_json(attack_dataset(model, samples, k, editor), false));
      attack[set.name] = rows;
    }
    if (attributes) {
      const bool any = std::any_of(samples.begin(), samples.end(),
                                   [&](const TokenizedSample& s) { return has_attribute_term(s, *attributes); });
      fairness[set.name] = any ? to_json(fairness_report(model, samples, *attributes, vocab)) : json(nullptr);
    }
  }
  if (config.eval.accuracy) {
    report["accuracy"] = accuracy;
    // Macro average over the target domains.
    double sum = 0.0;
    for (std::size_t i = 1; i < accuracy.size(); ++i) sum += accuracy[i].at("accuracy").get<double>();
    report["target_macro_accuracy"] = accuracy.size() > 1 ? json(sum / static_cast<double>(accuracy.size() - 1)) : json(nullptr);
  }
  if (config.eval.lfr) report["lfr"] = lfr;
  if (config.eval.attack) report["attack"] = attack;
  if (config.eval.fairness) report["fairness"] = attributes ? fairness : json(nullptr);

  const std::string rel = "reports/eval_" + to_string(config.eval.model) + ".json";
  write_text_file(out / rel, dump(report));
  rec.output(rel);
  rec.commit("eval:" + to_string(config.eval.model), to_json(config), config_hash(config), config.seed);
}

void cmd_run_all(const PipelineConfig& config) {
  cmd_train_base(config);
  cmd_mine(config);
  cmd_augment(config);
  cmd_train_acwg(config);
  for (EvalModel m : {EvalModel::base, EvalModel::acwg}) {
    PipelineConfig c = config;
    c.eval.model = m;
    cmd_eval(c);
  }
}

// ---------------------------------------------------------------------------

std::vector<GroupView> show_groups(const fs::path& out, std::span<const std::string> ids, std::size_t limit) {
  require(out, "groups.jsonl", "mine");
  const Manifest m = read_manifest(out);
  const StageRecord* mine = m.find("mine");
  if (!mine) throw DependencyError("manifest.json", "no mine record in " + (out / "manifest.json").string());
  const PipelineConfig config = pipeline_config_from_json(mine->config, "/");
  std::map<std::string, Sample> by_id;
  for (auto& s : load_dataset(config.data.source_train).samples) by_id.emplace(s.id, s);

  std::vector<GroupView> views;
  for (const auto& r : read_group_reports(out / "groups.jsonl")) {
    const bool wanted = ids.empty() ? views.size() < limit : std::find(ids.begin(), ids.end(), r.sample_id) != ids.end();
    if (!wanted) continue;
    const auto it = by_id.find(r.sample_id);
    if (it == by_id.end()) throw DataError("group report for unknown sample " + r.sample_id);
    views.push_back({r.sample_id, it->second.label, it->second.text, r.candidates, r.groups});
  }
  for (const auto& id : ids) {
    if (std::none_of(views.begin(), views.end(), [&](const GroupView& v) { return v.sample_id == id; })) {
      throw ContractError("no group report for sample " + id);
    }
  }
  return views;
}

std::string format_group_views(std::span<const GroupView> views) {
  std::string s;
  char buf[64];
  for (const auto& v : views) {
    s += v.sample_id + "  label=" + std::to_string(v.label) + "\n  text: " + v.text + "\n  candidates:";
    for (const auto& c : v.candidates) s += " " + c;
    s += "\n";
    if (v.groups.empty()) s += "  (no word-groups)\n";
    for (std::size_t i = 0; i < v.groups.size(); ++i) {
      s += "  " + std::to_string(i + 1) + ". {";
      for (std::size_t k = 0; k < v.groups[i].members.size(); ++k) s += (k ? ", " : "") + v.groups[i].members[k];
      std::snprintf(buf, sizeof buf, "}  %.6f\n", v.groups[i].score);
      s += buf;
    }
  }
  return s;
}

ReplayResult replay_manifest(const fs::path& manifest_path, const fs::path& out) {
  if (!fs::exists(manifest_path)) throw DependencyError(manifest_path.string(), "manifest not found");
  const fs::path original = fs::weakly_canonical(fs::absolute(manifest_path).parent_path());
  if (fs::weakly_canonical(fs::absolute(out)) == original) {
    throw ContractError("replay needs an output directory other than the original run");
  }
  Manifest m;
  try {
    m = manifest_from_json(json::parse(read_text_file(manifest_path)));
  } catch (const json::parse_error& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  ReplayResult result;
  for (const auto& r : m.records) {
    if (r.stage == "synth") {
      cmd_synth(synth_config_from_json(r.config), out);
    } else {
      PipelineConfig c = pipeline_config_from_json(r.config, "/");
      c.out = fs::absolute(out);
      c.jobs = 0;
      if (config_hash(c) != r.config_hash) throw DataError("config hash mismatch in record " + r.stage);
      for (const auto& [key, id] : r.inputs) {
        if (key.rfind("data:", 0) != 0) continue;
        const auto& p = key.substr(5);
        fs::path path;
        if (p == "source_train") path = c.data.source_train;
        else if (p == "source_test") path = c.data.source_test;
        else if (p == "antonyms") path = c.data.antonyms;
        else if (p == "attributes") path = c.data.attributes;
        else {
          for (const auto& t : c.data.target_tests) {
            if (t.name == p) path = t.path;
          }
        }
        if (path.empty() || !fs::exists(path) || file_blob_id(path) != id) {
          throw DataError("input '" + p + "' of stage " + r.stage + " changed since the recorded run");
        }
      }
      if (r.stage == "train-base") cmd_train_base(c);
      else if (r.stage == "mine") cmd_mine(c);
      else if (r.stage == "augment") cmd_augment(c);
      else if (r.stage == "train-acwg") cmd_train_acwg(c);
      else cmd_eval(c);
    }
    result.stages.push_back(r.stage);
    for (const auto& [rel, id] : r.outputs) {
      if (!fs::exists(out / rel) || file_blob_id(out / rel) != id) result.mismatches.push_back(r.stage + ":" + rel);
    }
  }
  return result;
}

}  // namespace acwg
