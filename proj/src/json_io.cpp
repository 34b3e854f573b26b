#include "acwg/json_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace acwg {

namespace {

template <typename T>
void read_into(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// Wraps json type/key errors of one jsonl row into a DataError with its line.
template <typename F>
auto parse_row(const std::filesystem::path& path, std::size_t line, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what(), line);
  }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

std::string to_string(LossForm f) { return f == LossForm::canonical ? "canonical" : "literal"; }

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none:
      return "none";
    case Ablation::wo_voting:
      return "wo-voting";
    case Ablation::wo_wordgroups:
      return "wo-wordgroups";
  }
  return "none";
}

std::string to_string(LfrMode m) {
  switch (m) {
    case LfrMode::single_word:
      return "single_word";
    case LfrMode::group_l1:
      return "group_l1";
    case LfrMode::group_l3:
      return "group_l3";
  }
  return "group_l1";
}

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ContractError("unknown activation '" + std::string(s) + "' (expected tanh|identity)");
}

LossForm parse_loss_form(std::string_view s) {
  if (s == "canonical") return LossForm::canonical;
  if (s == "literal") return LossForm::literal;
  throw ContractError("unknown loss form '" + std::string(s) + "' (expected canonical|literal)");
}

Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::none;
  if (s == "wo-voting" || s == "wo_voting") return Ablation::wo_voting;
  if (s == "wo-wordgroups" || s == "wo_wordgroups") return Ablation::wo_wordgroups;
  throw ContractError("unknown ablation '" + std::string(s) + "' (expected none|wo-voting|wo-wordgroups)");
}

LfrMode parse_lfr_mode(std::string_view s) {
  if (s == "single_word") return LfrMode::single_word;
  if (s == "group_l1") return LfrMode::group_l1;
  if (s == "group_l3") return LfrMode::group_l3;
  throw ContractError("unknown LFR mode '" + std::string(s) + "'");
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
  if (!j.is_object()) throw ContractError(std::string(context) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ContractError("unknown key '" + key + "' in " + std::string(context));
    }
  }
}

json to_json(const TrainOptions& o) {
  return {{"learning_rate", o.learning_rate}, {"batch_size", o.batch_size}, {"epochs", o.epochs},
          {"beta1", o.beta1},                 {"beta2", o.beta2},           {"epsilon", o.epsilon},
          {"seed", o.seed}};
}

TrainOptions train_options_from_json(const json& j, TrainOptions o) {
  check_keys(j, {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "epsilon", "seed"}, "train options");
  read_into(j, "learning_rate", o.learning_rate);
  read_into(j, "batch_size", o.batch_size);
  read_into(j, "epochs", o.epochs);
  read_into(j, "beta1", o.beta1);
  read_into(j, "beta2", o.beta2);
  read_into(j, "epsilon", o.epsilon);
  read_into(j, "seed", o.seed);
  return o;
}

json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"num_classes", c.num_classes},
          {"activation", to_string(c.activation)},
          {"embed_init_scale", c.embed_init_scale},
          {"seed", c.seed},
          {"train", to_json(c.train)}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  check_keys(j,
             {"vocab_size", "embed_dim", "hidden_dim", "num_classes", "activation", "embed_init_scale", "seed",
              "train"},
             "model config");
  read_into(j, "vocab_size", c.vocab_size);
  read_into(j, "embed_dim", c.embed_dim);
  read_into(j, "hidden_dim", c.hidden_dim);
  read_into(j, "num_classes", c.num_classes);
  if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
  read_into(j, "embed_init_scale", c.embed_init_scale);
  read_into(j, "seed", c.seed);
  if (j.contains("train")) c.train = train_options_from_json(j.at("train"), c.train);
  return c;
}

json to_json(const HeadConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"output_dim", c.output_dim},
          {"num_groups", c.num_groups},
          {"seed", c.seed}};
}

HeadConfig head_config_from_json(const json& j, HeadConfig c) {
  check_keys(j, {"input_dim", "hidden_dim", "output_dim", "num_groups", "seed"}, "head config");
  read_into(j, "input_dim", c.input_dim);
  read_into(j, "hidden_dim", c.hidden_dim);
  read_into(j, "output_dim", c.output_dim);
  read_into(j, "num_groups", c.num_groups);
  read_into(j, "seed", c.seed);
  return c;
}

json to_json(const SearchConfig& c) {
  return {{"beam_width", c.beam_width}, {"max_group_len", c.max_group_len}, {"num_groups", c.num_groups}};
}

SearchConfig search_config_from_json(const json& j, SearchConfig c) {
  check_keys(j, {"beam_width", "max_group_len", "num_groups"}, "search config");
  read_into(j, "beam_width", c.beam_width);
  read_into(j, "max_group_len", c.max_group_len);
  read_into(j, "num_groups", c.num_groups);
  return c;
}

json to_json(const AugmentConfig& c) {
  return {{"num_groups", c.num_groups}, {"mask_prob", c.mask_prob}, {"seed", c.seed}};
}

AugmentConfig augment_config_from_json(const json& j, AugmentConfig c) {
  check_keys(j, {"num_groups", "mask_prob", "seed"}, "augment config");
  read_into(j, "num_groups", c.num_groups);
  read_into(j, "mask_prob", c.mask_prob);
  read_into(j, "seed", c.seed);
  return c;
}

json to_json(const AcwgConfig& c) {
  return {{"lambda", c.lambda},
          {"margin", c.margin},
          {"loss_form", to_string(c.loss_form)},
          {"ablation", to_string(c.ablation)},
          {"train", to_json(c.train)}};
}

AcwgConfig acwg_config_from_json(const json& j, AcwgConfig c) {
  check_keys(j, {"lambda", "margin", "loss_form", "ablation", "train"}, "acwg config");
  read_into(j, "lambda", c.lambda);
  read_into(j, "margin", c.margin);
  if (j.contains("loss_form")) c.loss_form = parse_loss_form(j.at("loss_form").get<std::string>());
  if (j.contains("ablation")) c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  if (j.contains("train")) c.train = train_options_from_json(j.at("train"), c.train);
  return c;
}

json to_json(const TokenizedSample& s) {
  return {{"id", s.sample_id}, {"label", s.label}, {"tokens", s.tokens}, {"ids", s.token_ids}};
}

TokenizedSample tokenized_sample_from_json(const json& j) {
  TokenizedSample s;
  s.sample_id = j.at("id").get<std::string>();
  s.label = j.at("label").get<int>();
  s.tokens = j.at("tokens").get<std::vector<std::string>>();
  s.token_ids = j.at("ids").get<std::vector<int>>();
  if (s.tokens.size() != s.token_ids.size()) throw DataError("sample " + s.sample_id + ": tokens and ids differ in length");
  return s;
}

json to_json(const WordGroup& g) { return {{"members", g.members}, {"score", g.score}}; }

WordGroup word_group_from_json(const json& j) {
  return WordGroup{j.at("members").get<std::vector<std::string>>(), j.at("score").get<double>()};
}

// ---------------------------------------------------------------------------

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string to_jsonl(std::span<const json> rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ": malformed json: " + e.what(), line_no);
    }
  }
  return rows;
}

json attribution_row(const AttributionRecord& r) {
  return {{"id", r.sample_id}, {"tokens", r.tokens}, {"norms", r.norms}, {"m", r.steps}};
}

void write_attributions(const std::filesystem::path& path, std::span<const AttributionRecord> records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(attribution_row(r));
  write_text_file(path, to_jsonl(rows));
}

std::vector<AttributionRecord> read_attributions(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<AttributionRecord> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back(parse_row(path, i + 1, [&] {
      AttributionRecord r;
      r.sample_id = rows[i].at("id").get<std::string>();
      r.tokens = rows[i].at("tokens").get<std::vector<std::string>>();
      r.norms = rows[i].at("norms").get<std::vector<double>>();
      r.steps = rows[i].at("m").get<int>();
      if (r.tokens.size() != r.norms.size()) throw DataError(path.string() + ": tokens and norms differ", i + 1);
      return r;
    }));
  }
  return out;
}

void write_candidates(const std::filesystem::path& path, const CandidateSet& candidates) {
  std::string out = "word\tCS\tFreq\n";
  for (const auto& c : candidates.ranked()) {
    out += c.word + '\t' + format_double(c.score) + '\t' + std::to_string(c.freq) + '\n';
  }
  write_text_file(path, out);
}

CandidateSet read_candidates(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<CorpusScore> ranked;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "word\tCS\tFreq") throw DataError(path.string() + ": missing candidate header", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw DataError(path.string() + ": expected word, CS and Freq", line_no);
    try {
      ranked.push_back(CorpusScore{f[0], std::stod(f[1]), std::stoll(f[2])});
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": bad number", line_no);
    }
  }
  return CandidateSet(std::move(ranked));
}

void write_group_reports(const std::filesystem::path& path, std::span<const GroupSet> reports,
                         const SearchConfig& config) {
  std::vector<json> rows;
  rows.reserve(reports.size());
  for (const auto& r : reports) {
    json groups = json::array();
    for (const auto& g : r.groups) groups.push_back(to_json(g));
    rows.push_back({{"id", r.sample_id},
                    {"groups", groups},
                    {"config", to_json(config)},
                    {"candidates", r.candidates},
                    {"best_singleton", r.best_singleton ? to_json(*r.best_singleton) : json(nullptr)},
                    {"no_candidates", r.no_candidates}});
  }
  write_text_file(path, to_jsonl(rows));
}

std::vector<GroupSet> read_group_reports(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<GroupSet> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back(parse_row(path, i + 1, [&] {
      const json& j = rows[i];
      GroupSet r;
      r.sample_id = j.at("id").get<std::string>();
      for (const auto& g : j.at("groups")) r.groups.push_back(word_group_from_json(g));
      if (j.contains("candidates")) r.candidates = j.at("candidates").get<std::vector<std::string>>();
      if (j.contains("best_singleton") && !j.at("best_singleton").is_null()) {
        r.best_singleton = word_group_from_json(j.at("best_singleton"));
      }
      if (j.contains("no_candidates")) r.no_candidates = j.at("no_candidates").get<bool>();
      return r;
    }));
  }
  return out;
}

void write_augmentations(const std::filesystem::path& path, std::span<const AugmentedSet> sets) {
  std::vector<json> rows;
  rows.reserve(sets.size());
  for (const auto& s : sets) {
    json negs = json::array(), groups = json::array();
    for (const auto& n : s.negatives) negs.push_back(to_json(n));
    for (const auto& g : s.groups) groups.push_back(to_json(g));
    rows.push_back({{"id", s.anchor.sample_id},
                    {"anchor", to_json(s.anchor)},
                    {"positive", to_json(s.positive)},
                    {"negatives", negs},
                    {"groups", groups},
                    {"rng_seed", s.rng_seed}});
  }
  write_text_file(path, to_jsonl(rows));
}

std::vector<AugmentedSet> read_augmentations(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<AugmentedSet> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back(parse_row(path, i + 1, [&] {
      const json& j = rows[i];
      AugmentedSet s;
      s.anchor = tokenized_sample_from_json(j.at("anchor"));
      s.positive = tokenized_sample_from_json(j.at("positive"));
      for (const auto& n : j.at("negatives")) s.negatives.push_back(tokenized_sample_from_json(n));
      for (const auto& g : j.at("groups")) s.groups.push_back(word_group_from_json(g));
      s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
      return s;
    }));
  }
  return out;
}

void write_training_log(const std::filesystem::path& path, const TrainTrace& trace) {
  std::vector<json> rows;
  rows.reserve(trace.batches.size());
  for (const auto& b : trace.batches) {
    rows.push_back(
        {{"step", b.step}, {"L_CE", b.ce}, {"L_CL", b.cl}, {"total", b.total}, {"mean_alpha", b.mean_alpha}});
  }
  write_text_file(path, to_jsonl(rows));
}

json to_json(const DomainAccuracy& a) { return {{"name", a.name}, {"size", a.size}, {"accuracy", a.accuracy}}; }

json to_json(const LFRReport& r) {
  return {{"mode", to_string(r.mode)},
          {"lfr", r.lfr},
          {"total", r.total},
          {"flipped", r.flipped},
          {"without_groups", r.without_groups}};
}

json to_json(const AttackReport& r, bool per_sample) {
  json j = {{"budget", r.budget}, {"pre_accuracy", r.pre_accuracy}, {"post_accuracy", r.post_accuracy}};
  if (per_sample) {
    json rows = json::array();
    for (std::size_t i = 0; i < r.sample_ids.size(); ++i) {
      rows.push_back({{"id", r.sample_ids[i]}, {"success", r.success[i] != 0}, {"substitutions", r.substitutions[i]}});
    }
    j["samples"] = std::move(rows);
  }
  return j;
}

json to_json(const GroupRates& r) {
  return {{"size", r.size},
          {"negatives", r.negatives},
          {"positives", r.positives},
          {"false_positives", r.false_positives},
          {"false_negatives", r.false_negatives},
          {"fpr", optional_number(r.fpr())},
          {"fnr", optional_number(r.fnr())}};
}

json to_json(const FairnessReport& r) {
  const auto& d = r.differences;
  return {{"pcr", r.pcr.pcr},
          {"pcr_unchanged", r.pcr.unchanged},
          {"pcr_total", r.pcr.total},
          {"fped", optional_number(d.fped)},
          {"fned", optional_number(d.fned)},
          {"overall", to_json(d.overall)},
          {"first", to_json(d.first)},
          {"second", to_json(d.second)},
          {"excluded", d.excluded}};
}

json to_json(const EpochStats& e) {
  return {{"epoch", e.epoch},
          {"ce", e.ce},
          {"cl", e.cl},
          {"total", e.total},
          {"train_accuracy", e.train_accuracy}};
}

}  // namespace acwg
