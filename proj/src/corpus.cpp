#include "acwg/corpus.hpp"

#include "acwg/common.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace acwg {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

bool is_url_token(std::string_view tok) {
  return tok.find("http://") != std::string_view::npos ||
         tok.find("https://") != std::string_view::npos ||
         tok.find("ftp://") != std::string_view::npos ||
         tok.find("www.") != std::string_view::npos;
}

bool is_date_token(std::string_view tok) {
  static const std::regex date_re(R"(^\d{1,4}([/.\-])\d{1,2}\1\d{1,4}$)");
  std::size_t b = 0, e = tok.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
  if (b == e) return false;
  const std::string core(tok.substr(b, e - b));
  return std::regex_match(core, date_re);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int parse_label(const nlohmann::json& value, std::size_t line) {
  if (value.is_number_integer()) {
    const auto v = value.get<long long>();
    if (v == 0 || v == 1) return static_cast<int>(v);
    throw DataError("label must be 0 or 1, got " + std::to_string(v), line);
  }
  if (value.is_string()) {
    const std::string s = trim(value.get<std::string>());
    if (s == "0" || s == "1") return s == "1" ? 1 : 0;
    throw DataError("label must be 0 or 1, got \"" + s + "\"", line);
  }
  throw DataError("label must be 0 or 1", line);
}

// Appends the sample unless its normalized text yields no tokens.
void push_sample(LoadedDataset& out, std::string id, std::string_view raw, int label) {
  std::string text = normalize_text(raw);
  if (text.empty() || tokenize(text).empty()) {
    ++out.dropped_empty;
    return;
  }
  out.samples.push_back(Sample{std::move(id), std::move(text), label});
}

LoadedDataset load_jsonl(const std::filesystem::path& path, std::istream& in) {
  LoadedDataset out;
  const std::string stem = path.stem().string();
  std::string line;
  std::size_t line_no = 0, record = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ": malformed json record: " + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string() || !j.contains("label")) {
      throw DataError(path.string() + ": record needs string \"text\" and \"label\"", line_no);
    }
    const int label = parse_label(j["label"], line_no);
    std::string id;
    if (j.contains("id")) {
      id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    } else {
      id = stem + "-" + std::to_string(record);
    }
    ++record;
    push_sample(out, std::move(id), j["text"].get<std::string>(), label);
  }
  return out;
}

// RFC 4180 record reader; returns false at EOF. Quoted fields may span lines.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
  fields.clear();
  int c = in.peek();
  if (c == EOF) return false;
  ++line_no;
  std::string field;
  bool quoted = false, any = false;
  while (true) {
    c = in.get();
    if (c == EOF) {
      if (quoted) throw DataError("unterminated quoted csv field", line_no);
      break;
    }
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
  if (any || !field.empty()) fields.push_back(std::move(field));
  return true;
}

LoadedDataset load_csv(const std::filesystem::path& path, std::istream& in) {
  LoadedDataset out;
  const std::string stem = path.stem().string();
  std::vector<std::string> fields;
  std::size_t line_no = 0;
  if (!read_csv_record(in, fields, line_no)) throw DataError(path.string() + ": empty csv file", 1);
  std::optional<std::size_t> text_col, label_col, id_col;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string name = lowercase(trim(fields[i]));
    if (name == "text") text_col = i;
    if (name == "label") label_col = i;
    if (name == "id") id_col = i;
  }
  if (!text_col || !label_col) throw DataError(path.string() + ": csv header must contain text,label", 1);

  std::size_t record = 0;
  while (true) {
    const std::size_t start_line = line_no + 1;
    if (!read_csv_record(in, fields, line_no)) break;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    const std::size_t need = std::max({*text_col, *label_col, id_col.value_or(0)}) + 1;
    if (fields.size() < need) {
      throw DataError(path.string() + ": csv record has " + std::to_string(fields.size()) +
                          " fields, expected at least " + std::to_string(need),
                      start_line);
    }
    const int label = parse_label(nlohmann::json(fields[*label_col]), start_line);
    std::string id = id_col ? fields[*id_col] : stem + "-" + std::to_string(record);
    ++record;
    push_sample(out, std::move(id), fields[*text_col], label);
  }
  return out;
}

std::vector<std::string> split_commas(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find(',', start);
    const std::string_view part = s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    std::string t = lowercase(trim(part));
    if (!t.empty()) out.push_back(std::move(t));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Fn>
void for_each_tsv_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": expected a tab separator", line_no);
    fn(std::string_view(line).substr(0, tab), std::string_view(line).substr(tab + 1), line_no);
  }
}

bool is_reserved_word(std::string_view w) { return w == kPadToken || w == kMaskToken || w == kUnkToken; }

}  // namespace

std::string normalize_text(std::string_view raw) {
  std::string ascii;
  ascii.reserve(raw.size());
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80) continue;
    if (std::isspace(c)) {
      ascii.push_back(' ');
    } else if (std::isprint(c)) {
      ascii.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  std::string out;
  out.reserve(ascii.size());
  for (std::string_view tok : split_ws(ascii)) {
    if (is_url_token(tok) || is_date_token(tok)) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
               is_word_char(static_cast<unsigned char>(text[i + 1]))) {
      current.push_back('\'');
    } else {
      flush();
      if (options.keep_punctuation && std::ispunct(c)) tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

TokenizerFn default_tokenizer(TokenizerOptions options) {
  return [options](std::string_view text) { return tokenize(text, options); };
}

DataFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lowercase(path.extension().string());
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return DataFormat::jsonl;
  if (ext == ".csv") return DataFormat::csv;
  throw DataError("cannot infer dataset format from extension of " + path.string());
}

LoadedDataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return format == DataFormat::jsonl ? load_jsonl(path, in) : load_csv(path, in);
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, format_from_path(path));
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (std::string_view r : {kPadToken, kMaskToken, kUnkToken}) {
    index_.emplace(std::string(r), static_cast<int>(words_.size()));
    words_.emplace_back(r);
    freqs_.push_back(0);
  }
}

Vocabulary Vocabulary::build(std::span<const Sample> samples, int min_count, const TokenizerFn& tokenizer) {
  if (samples.empty()) throw ContractError("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const Sample& s : samples) {
    for (std::string& tok : tokenizer(s.text)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [w, n] : counts) {
    if (n >= min_count && !is_reserved_word(w)) kept.emplace_back(w, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v = from_entries(kept);
  v.min_count_ = min_count;
  return v;
}

Vocabulary Vocabulary::from_entries(std::span<const std::pair<std::string, std::int64_t>> entries) {
  Vocabulary v;
  for (const auto& [w, n] : entries) {
    if (is_reserved_word(w)) throw ContractError("reserved token in vocabulary entries: " + w);
    if (n < 1) throw ContractError("vocabulary frequency must be >= 1 for " + w);
    if (!v.index_.emplace(w, static_cast<int>(v.words_.size())).second) {
      throw ContractError("duplicate vocabulary word: " + w);
    }
    v.words_.push_back(w);
    v.freqs_.push_back(n);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "#acwg-vocab\tv1\tmin_count=" << min_count_ << '\n';
  for (std::size_t i = kNumReserved; i < words_.size(); ++i) out << words_[i] << '\t' << freqs_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("#acwg-vocab\tv1\tmin_count=", 0) != 0) {
    throw DataError(path.string() + ": not an acwg vocabulary file", 1);
  }
  const int min_count = std::stoi(line.substr(line.find('=') + 1));
  std::vector<std::pair<std::string, std::int64_t>> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": malformed vocabulary line", line_no);
    try {
      entries.emplace_back(line.substr(0, tab), std::stoll(line.substr(tab + 1)));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": bad frequency", line_no);
    }
  }
  Vocabulary v = from_entries(entries);
  v.min_count_ = min_count;
  return v;
}

int Vocabulary::index(std::string_view word) const { return find(word).value_or(kUnkId); }

std::optional<int> Vocabulary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t Vocabulary::freq(std::string_view word) const {
  const auto id = find(word);
  return id ? freqs_[static_cast<std::size_t>(*id)] : 0;
}

Vocabulary build_vocab(std::span<const Sample> samples, int min_count) {
  return Vocabulary::build(samples, min_count);
}

TokenizedSample tokenize_sample(const Sample& sample, const Vocabulary& vocab, const TokenizerFn& tokenizer) {
  TokenizedSample t;
  t.sample_id = sample.id;
  t.label = sample.label;
  t.tokens = tokenizer(sample.text);
  t.token_ids.reserve(t.tokens.size());
  for (const std::string& tok : t.tokens) t.token_ids.push_back(vocab.index(tok));
  return t;
}

std::vector<TokenizedSample> tokenize_samples(std::span<const Sample> samples, const Vocabulary& vocab,
                                              const TokenizerFn& tokenizer) {
  std::vector<TokenizedSample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(tokenize_sample(s, vocab, tokenizer));
  return out;
}

// ---------------------------------------------------------------------------
// Lexicons

AntonymLexicon AntonymLexicon::load(const std::filesystem::path& path) {
  AntonymLexicon lex;
  for_each_tsv_line(path, [&](std::string_view word, std::string_view rest, std::size_t line_no) {
    const auto antonyms = split_commas(rest);
    if (antonyms.empty()) throw DataError(path.string() + ": word without antonyms", line_no);
    try {
      lex.add(word, antonyms);
    } catch (const ContractError& e) {
      throw DataError(path.string() + ": " + e.what(), line_no);
    }
  });
  return lex;
}

void AntonymLexicon::add(std::string_view word, std::span<const std::string> antonyms) {
  const std::string key = lowercase(trim(word));
  if (key.empty()) throw ContractError("empty antonym lexicon key");
  auto& list = map_[key];
  for (const std::string& a : antonyms) {
    std::string value = lowercase(trim(a));
    if (value.empty()) continue;
    if (value == key) throw ContractError("word listed as its own antonym: " + key);
    if (std::find(list.begin(), list.end(), value) == list.end()) list.push_back(std::move(value));
  }
  if (list.empty()) map_.erase(key);
}

const std::vector<std::string>* AntonymLexicon::antonyms(std::string_view word) const {
  const auto it = map_.find(lowercase(word));
  return it == map_.end() ? nullptr : &it->second;
}

std::optional<std::string> AntonymLexicon::first_antonym(std::string_view word) const {
  const auto* list = antonyms(word);
  if (!list || list->empty()) return std::nullopt;
  return list->front();
}

AttributePairLexicon AttributePairLexicon::load(const std::filesystem::path& path) {
  AttributePairLexicon lex;
  for_each_tsv_line(path, [&](std::string_view term, std::string_view opposite, std::size_t line_no) {
    try {
      lex.add(term, opposite);
    } catch (const ContractError& e) {
      throw DataError(path.string() + ": " + e.what(), line_no);
    }
  });
  return lex;
}

void AttributePairLexicon::add(std::string_view term, std::string_view opposite) {
  std::string a = lowercase(trim(term)), b = lowercase(trim(opposite));
  if (a.empty() || b.empty()) throw ContractError("empty attribute term");
  if (a == b) throw ContractError("attribute term paired with itself: " + a);
  if (is_reserved_word(a) || is_reserved_word(b)) throw ContractError("reserved token in attribute lexicon");
  if (lookup_.count(a) || lookup_.count(b)) {
    throw ContractError("attribute term appears in more than one pair: " + (lookup_.count(a) ? a : b));
  }
  const std::size_t idx = pairs_.size();
  lookup_.emplace(a, std::make_pair(idx, AttributeSide::first));
  lookup_.emplace(b, std::make_pair(idx, AttributeSide::second));
  pairs_.emplace_back(std::move(a), std::move(b));
}

std::optional<std::string> AttributePairLexicon::opposite(std::string_view word) const {
  const auto it = lookup_.find(lowercase(word));
  if (it == lookup_.end()) return std::nullopt;
  const auto& [idx, side] = it->second;
  return side == AttributeSide::first ? pairs_[idx].second : pairs_[idx].first;
}

std::optional<AttributeSide> AttributePairLexicon::side(std::string_view word) const {
  const auto it = lookup_.find(lowercase(word));
  if (it == lookup_.end()) return std::nullopt;
  return it->second.second;
}

}  // namespace acwg
