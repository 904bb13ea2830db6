#include "candfuse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "candfuse/rng.hpp"

namespace candfuse {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {
      "<pad>", "<unk>", "<s>", "</s>", "<sum>", "</sum>"};
  return kSpecials;
}

[[noreturn]] void line_error(const std::string& path, size_t line_no,
                             const std::string& what) {
  throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " +
                           what);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.push_back(std::string(1, ch));
    } else {
      word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  for (const auto& t : special_tokens()) {
    token_to_id_[t] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(t);
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < static_cast<size_t>(kNumSpecial))
    throw std::invalid_argument("vocab: token list missing special tokens");
  for (int i = 0; i < kNumSpecial; ++i)
    if (tokens[static_cast<size_t>(i)] != special_tokens()[static_cast<size_t>(i)])
      throw std::invalid_argument("vocab: special token mismatch at id " +
                                  std::to_string(i));
  Vocab v;
  v.id_to_token_.clear();
  v.token_to_id_.clear();
  for (auto& t : tokens) {
    if (v.token_to_id_.count(t))
      throw std::invalid_argument("vocab: duplicate token " + t);
    v.token_to_id_[t] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(std::move(t));
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int tid) const {
  return id_to_token_.at(static_cast<size_t>(tid));
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int i : ids) words.push_back(token(i));
  return words;
}

uint64_t Vocab::content_hash() const {
  uint64_t h = 14695981039346656037ULL;
  for (const auto& t : id_to_token_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocab file: " + path);
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocab file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

std::vector<RawRecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset file: " + path);
  std::vector<RawRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      line_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) line_error(path, line_no, "record must be an object");
    for (const auto& item : j.items()) {
      const std::string& k = item.key();
      if (k != "id" && k != "documents" && k != "gold" && k != "candidates")
        line_error(path, line_no, "unknown field \"" + k + "\"");
    }
    for (const char* k : {"id", "documents", "gold", "candidates"})
      if (!j.contains(k))
        line_error(path, line_no, std::string("missing field \"") + k + "\"");

    RawRecord rec;
    if (!j["id"].is_string()) line_error(path, line_no, "\"id\" must be a string");
    rec.id = j["id"].get<std::string>();
    if (!j["documents"].is_array() || j["documents"].empty())
      line_error(path, line_no, "\"documents\" must be a non-empty array");
    for (const auto& d : j["documents"]) {
      if (!d.is_string())
        line_error(path, line_no, "\"documents\" entries must be strings");
      rec.documents.push_back(d.get<std::string>());
    }
    if (j["gold"].is_string())
      rec.gold = j["gold"].get<std::string>();
    else if (!j["gold"].is_null())
      line_error(path, line_no, "\"gold\" must be a string or null");
    if (!j["candidates"].is_array())
      line_error(path, line_no, "\"candidates\" must be an array");
    for (const auto& c : j["candidates"]) {
      if (!c.is_object())
        line_error(path, line_no, "candidate entries must be objects");
      for (const auto& item : c.items()) {
        const std::string& k = item.key();
        if (k != "text" && k != "origin" && k != "oracle_r1")
          line_error(path, line_no, "unknown candidate field \"" + k + "\"");
      }
      if (!c.contains("text") || !c["text"].is_string())
        line_error(path, line_no, "candidate needs a string \"text\"");
      if (!c.contains("origin") || !c["origin"].is_string())
        line_error(path, line_no, "candidate needs a string \"origin\"");
      RawCandidate rc;
      rc.text = c["text"].get<std::string>();
      rc.origin = c["origin"].get<std::string>();
      if (c.contains("oracle_r1")) {
        if (!c["oracle_r1"].is_number())
          line_error(path, line_no, "\"oracle_r1\" must be a number");
        rc.oracle_r1 = c["oracle_r1"].get<double>();
        if (*rc.oracle_r1 < 0.0 || *rc.oracle_r1 > 1.0)
          line_error(path, line_no, "\"oracle_r1\" must lie in [0,1]");
      }
      rec.candidates.push_back(std::move(rc));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_records(const std::string& path,
                   const std::vector<RawRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["documents"] = rec.documents;
    if (rec.gold)
      j["gold"] = *rec.gold;
    else
      j["gold"] = nullptr;
    j["candidates"] = nlohmann::ordered_json::array();
    for (const auto& c : rec.candidates) {
      nlohmann::ordered_json cj;
      cj["text"] = c.text;
      cj["origin"] = c.origin;
      if (c.oracle_r1) cj["oracle_r1"] = *c.oracle_r1;
      j["candidates"].push_back(std::move(cj));
    }
    out << j.dump() << '\n';
  }
}

namespace {

Document make_document(const std::string& text, const Vocab& vocab,
                       int max_tokens) {
  Document d;
  d.raw_text = text;
  d.words = tokenize(text);
  if (d.words.size() > static_cast<size_t>(max_tokens))
    d.words.resize(static_cast<size_t>(max_tokens));
  d.ids = vocab.encode(d.words);
  return d;
}

}  // namespace

Instance make_instance(const RawRecord& rec, const Vocab& vocab,
                       const LoadOptions& opts, size_t line_no) {
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("line " + std::to_string(line_no) + " (id " +
                             rec.id + "): " + what);
  };
  Instance inst;
  inst.id = rec.id;
  for (const auto& text : rec.documents) {
    Document d = make_document(text, vocab, opts.max_doc_tokens);
    if (d.words.empty()) fail("document tokenizes to nothing");
    inst.documents.push_back(std::move(d));
  }
  if (rec.gold) {
    Document g = make_document(*rec.gold, vocab, opts.max_doc_tokens);
    if (g.words.empty()) fail("gold summary tokenizes to nothing");
    inst.gold = std::move(g);
  }
  for (const auto& rc : rec.candidates) {
    Document body = make_document(rc.text, vocab, opts.max_cand_tokens);
    if (body.words.empty()) fail("candidate tokenizes to nothing");
    Candidate c;
    c.raw_text = std::move(body.raw_text);
    c.words = std::move(body.words);
    c.ids = std::move(body.ids);
    c.origin = rc.origin;
    c.oracle_r1 = rc.oracle_r1;
    inst.pool.push_back(std::move(c));
  }
  return inst;
}

std::vector<Instance> load_dataset(const std::string& path, const Vocab& vocab,
                                   const LoadOptions& opts) {
  std::vector<RawRecord> records = read_records(path);
  std::vector<Instance> out;
  out.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i)
    out.push_back(make_instance(records[i], vocab, opts, i + 1));
  return out;
}

Vocab build_vocab(const std::vector<RawRecord>& records, size_t max_size) {
  if (max_size < static_cast<size_t>(Vocab::kNumSpecial))
    throw std::invalid_argument("build_vocab: max_size below special count");
  std::unordered_map<std::string, long> counts;
  auto count_text = [&](const std::string& text) {
    for (auto& w : tokenize(text)) ++counts[w];
  };
  for (const auto& rec : records) {
    for (const auto& d : rec.documents) count_text(d);
    if (rec.gold) count_text(*rec.gold);
    for (const auto& c : rec.candidates) count_text(c.text);
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = special_tokens();
  size_t room = max_size - static_cast<size_t>(Vocab::kNumSpecial);
  for (size_t i = 0; i < ranked.size() && i < room; ++i)
    tokens.push_back(ranked[i].first);
  return Vocab::from_tokens(std::move(tokens));
}

Segmented segment_with_separators(const std::vector<Document>& docs) {
  if (docs.empty())
    throw std::invalid_argument("segment_with_separators: no documents");
  Segmented seg;
  seg.ids.push_back(Vocab::kSeqStart);
  seg.start_pos = 0;
  for (const auto& d : docs) {
    seg.ids.insert(seg.ids.end(), d.ids.begin(), d.ids.end());
    seg.end_positions.push_back(static_cast<int>(seg.ids.size()));
    seg.ids.push_back(Vocab::kSeqEnd);
  }
  return seg;
}

Segmented segment_single(const std::vector<int>& ids) {
  Segmented seg;
  seg.ids.push_back(Vocab::kSeqStart);
  seg.start_pos = 0;
  seg.ids.insert(seg.ids.end(), ids.begin(), ids.end());
  seg.end_positions.push_back(static_cast<int>(seg.ids.size()));
  seg.ids.push_back(Vocab::kSeqEnd);
  return seg;
}

}  // namespace candfuse
