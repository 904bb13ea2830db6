#pragma once

// Data model, tokenization, and line-delimited dataset ingestion.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace candfuse {

// Lowercase word tokenization; punctuation characters become single-token
// entries. Identical raw text always yields identical tokens.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSeqStart = 2;   // <s>
  static constexpr int kSeqEnd = 3;     // </s>
  static constexpr int kSumStart = 4;   // <sum>
  static constexpr int kSumEnd = 5;     // </sum>
  static constexpr int kNumSpecial = 6;

  Vocab();  // specials only

  // Full token list in id order; must start with the six special tokens.
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecial; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  uint64_t content_hash() const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct Document {
  std::string raw_text;
  std::vector<std::string> words;
  std::vector<int> ids;
};

struct Candidate {
  std::string raw_text;
  std::string origin;
  std::vector<std::string> words;
  std::vector<int> ids;
  std::optional<double> oracle_r1;
};

struct Instance {
  std::string id;
  std::vector<Document> documents;
  std::optional<Document> gold;
  std::vector<Candidate> pool;
};

// Raw (untokenized) record mirroring one dataset line.
struct RawCandidate {
  std::string text;
  std::string origin;
  std::optional<double> oracle_r1;
};

struct RawRecord {
  std::string id;
  std::vector<std::string> documents;
  std::optional<std::string> gold;
  std::vector<RawCandidate> candidates;
};

// Strict JSONL parsing: unknown keys, missing keys, or bad types raise a
// std::runtime_error naming the 1-based line number.
std::vector<RawRecord> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<RawRecord>& records);

struct LoadOptions {
  int max_doc_tokens = 256;   // per-document cap
  int max_cand_tokens = 128;  // per-candidate cap
};

Instance make_instance(const RawRecord& rec, const Vocab& vocab,
                       const LoadOptions& opts, size_t line_no);
std::vector<Instance> load_dataset(const std::string& path, const Vocab& vocab,
                                   const LoadOptions& opts = {});

// Frequency-ranked vocabulary over all document, gold, and candidate text.
// Ties break lexicographically. max_size counts the special tokens.
Vocab build_vocab(const std::vector<RawRecord>& records, size_t max_size);

// <s> d1 </s> d2 </s> ... dn </s> with recorded marker positions.
struct Segmented {
  std::vector<int> ids;
  int start_pos = 0;               // index of the leading <s>
  std::vector<int> end_positions;  // index of each per-document </s>
};

Segmented segment_with_separators(const std::vector<Document>& docs);

// <s> tokens </s> for an individually encoded sequence.
Segmented segment_single(const std::vector<int>& ids);

}  // namespace candfuse
