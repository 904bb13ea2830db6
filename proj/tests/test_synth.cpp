#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>

#include "candfuse/corpus.hpp"
#include "candfuse/metrics.hpp"
#include "candfuse/synth.hpp"
#include "candfuse/textinfo.hpp"

using namespace candfuse;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_instances = 20;
  cfg.n_docs = 2;
  cfg.topic_words = 4;
  cfg.candidate_len = 4;
  cfg.n_candidates = 5;
  cfg.fillers_per_doc = 3;
  cfg.topic_pool = 15;
  cfg.negative_pool = 15;
  cfg.filler_pool = 10;
  return cfg;
}

bool records_equal(const RawRecord& a, const RawRecord& b) {
  if (a.id != b.id || a.documents != b.documents || a.gold != b.gold ||
      a.candidates.size() != b.candidates.size())
    return false;
  for (size_t i = 0; i < a.candidates.size(); ++i)
    if (a.candidates[i].text != b.candidates[i].text ||
        a.candidates[i].origin != b.candidates[i].origin)
      return false;
  return true;
}

Vocab full_vocab(const SynthConfig& cfg) {
  std::vector<std::string> tokens = {"<pad>", "<unk>", "<s>",
                                     "</s>",  "<sum>", "</sum>"};
  for (const std::string& w : synthetic_word_list(cfg)) tokens.push_back(w);
  return Vocab::from_tokens(std::move(tokens));
}

}  // namespace

TEST_CASE("synth config validation rejects impossible pools") {
  SynthConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());

  cfg.topic_words = 20;  // exceeds topic_pool=15
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.candidate_len = 3;  // below topic_words=4
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.candidate_len = 16;  // exceeds negative_pool=15
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.fillers_per_doc = 11;  // exceeds filler_pool=10
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.n_instances = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.n_candidates = 1;  // marker needs two ranks
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("synth generation is deterministic in (config, seed)") {
  SynthConfig cfg = small_config();
  auto a = make_synthetic_records(cfg, 7);
  auto b = make_synthetic_records(cfg, 7);
  auto c = make_synthetic_records(cfg, 8);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(records_equal(a[i], b[i]));

  bool any_diff = false;
  for (size_t i = 0; i < a.size() && !any_diff; ++i)
    any_diff = !records_equal(a[i], c[i]);
  CHECK(any_diff);
}

TEST_CASE("synth records have the planted structure") {
  SynthConfig cfg = small_config();
  auto records = make_synthetic_records(cfg, 11);
  REQUIRE(static_cast<int>(records.size()) == cfg.n_instances);

  for (const RawRecord& rec : records) {
    REQUIRE(rec.gold.has_value());
    std::vector<std::string> gold = tokenize(*rec.gold);
    CHECK(static_cast<int>(gold.size()) == cfg.topic_words);
    CHECK(std::is_sorted(gold.begin(), gold.end()));
    std::set<std::string> topic_set(gold.begin(), gold.end());
    CHECK(topic_set.size() == gold.size());
    for (const std::string& w : gold) CHECK(w[0] == 't');

    REQUIRE(static_cast<int>(rec.documents.size()) == cfg.n_docs);
    for (const std::string& doc : rec.documents) {
      std::vector<std::string> words = tokenize(doc);
      CHECK(static_cast<int>(words.size()) ==
            cfg.topic_words + cfg.fillers_per_doc);
      int topics = 0, fillers = 0;
      for (const std::string& w : words) {
        if (topic_set.count(w)) ++topics;
        if (w[0] == 'f') ++fillers;
      }
      CHECK(topics == cfg.topic_words);
      CHECK(fillers == cfg.fillers_per_doc);
    }

    REQUIRE(static_cast<int>(rec.candidates.size()) == cfg.n_candidates);
    for (size_t c = 0; c < rec.candidates.size(); ++c) {
      CHECK(rec.candidates[c].origin == "gen" + std::to_string(c));
      std::vector<std::string> words = tokenize(rec.candidates[c].text);
      CHECK(static_cast<int>(words.size()) == cfg.candidate_len + 1);
      std::string marker = words.back();
      CHECK((marker == "poskey" || marker == "negkey"));
      std::set<std::string> distinct(words.begin(), words.end());
      CHECK(distinct.size() == words.size());
      for (size_t i = 0; i + 1 < words.size(); ++i) {
        bool planted = topic_set.count(words[i]) > 0;
        bool off_topic = words[i][0] == 'x';
        CHECK((planted || off_topic));
      }
    }
  }
}

TEST_CASE("markers sit on exactly the two oracle-best candidates") {
  SynthConfig cfg = small_config();
  Vocab vocab = full_vocab(cfg);
  auto records = make_synthetic_records(cfg, 13);
  LoadOptions opts;
  for (size_t r = 0; r < records.size(); ++r) {
    Instance inst = make_instance(records[r], vocab, opts, r + 1);
    std::vector<int> order = oracle_rank(inst.pool, *inst.gold);
    for (size_t c = 0; c < inst.pool.size(); ++c) {
      bool top2 = static_cast<size_t>(order[0]) == c ||
                  static_cast<size_t>(order[1]) == c;
      CHECK(inst.pool[c].words.back() == (top2 ? "poskey" : "negkey"));
    }
  }
}

TEST_CASE("synth vocabulary covers every generated word") {
  SynthConfig cfg = small_config();
  Vocab vocab = full_vocab(cfg);
  auto records = make_synthetic_records(cfg, 17);
  LoadOptions opts;
  for (size_t r = 0; r < records.size(); ++r) {
    Instance inst = make_instance(records[r], vocab, opts, r + 1);
    for (const Document& doc : inst.documents)
      for (int id : doc.ids) CHECK(id != Vocab::kUnk);
    for (int id : inst.gold->ids) CHECK(id != Vocab::kUnk);
    for (const Candidate& cand : inst.pool)
      for (int id : cand.ids) CHECK(id != Vocab::kUnk);
  }
}

TEST_CASE("positive info of each candidate is its planted topic words") {
  SynthConfig cfg = small_config();
  Vocab vocab = full_vocab(cfg);
  auto records = make_synthetic_records(cfg, 19);
  LoadOptions opts;
  for (size_t r = 0; r < records.size(); ++r) {
    Instance inst = make_instance(records[r], vocab, opts, r + 1);
    std::set<int> gold_ids(inst.gold->ids.begin(), inst.gold->ids.end());
    for (const Candidate& cand : inst.pool) {
      InfoSplit split = info_split(cand, *inst.gold);
      int planted = 0;
      for (size_t i = 0; i + 1 < cand.words.size(); ++i)
        if (cand.words[i][0] == 't') ++planted;
      CHECK(static_cast<int>(split.positive.size()) == planted);
      for (int id : split.positive) CHECK(gold_ids.count(id) == 1);
      for (int id : split.negative) CHECK(gold_ids.count(id) == 0);
      // marker + off-topic words
      CHECK(static_cast<int>(split.negative.size()) ==
            cfg.candidate_len - planted + 1);
    }
  }
}

TEST_CASE("synth records survive a write/read round trip") {
  SynthConfig cfg = small_config();
  cfg.n_instances = 5;
  auto records = make_synthetic_records(cfg, 23);
  std::string path = "/tmp/candfuse_test_synth_roundtrip.jsonl";
  write_records(path, records);
  auto loaded = read_records(path);
  std::remove(path.c_str());
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i)
    CHECK(records_equal(records[i], loaded[i]));
}

TEST_CASE("pool quality has the expected origin-vs-rank shape") {
  SynthConfig cfg;
  cfg.n_instances = 200;
  auto records = make_synthetic_records(cfg, 29);
  Vocab vocab = full_vocab(cfg);
  LoadOptions opts;

  std::vector<double> origin_sum(static_cast<size_t>(cfg.n_candidates), 0.0);
  std::vector<double> topk_best_sum(static_cast<size_t>(cfg.n_candidates),
                                    0.0);
  for (size_t r = 0; r < records.size(); ++r) {
    Instance inst = make_instance(records[r], vocab, opts, r + 1);
    std::vector<double> f1(inst.pool.size());
    for (size_t c = 0; c < inst.pool.size(); ++c)
      f1[c] = rouge_n(inst.pool[c].words, inst.gold->words, 1).f1;
    std::vector<int> order = oracle_rank(inst.pool, *inst.gold);
    double best = 0.0;
    for (size_t k = 0; k < order.size(); ++k) {
      best = std::max(best, f1[static_cast<size_t>(order[k])]);
      topk_best_sum[k] += best;
      origin_sum[k] += f1[k];
    }
  }
  double n = static_cast<double>(records.size());
  double top1 = topk_best_sum[0] / n;
  for (int c = 0; c < cfg.n_candidates; ++c) {
    CHECK(top1 >= origin_sum[static_cast<size_t>(c)] / n);
    if (c > 0)
      CHECK(topk_best_sum[static_cast<size_t>(c)] >=
            topk_best_sum[static_cast<size_t>(c - 1)] - 1e-12);
  }
  // Selection has to actually matter: the oracle best clearly beats the
  // mean single-origin candidate.
  double origin_mean = 0.0;
  for (double s : origin_sum) origin_mean += s / n;
  origin_mean /= static_cast<double>(cfg.n_candidates);
  CHECK(top1 > origin_mean + 0.1);
}
