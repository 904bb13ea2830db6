#include "candfuse/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "candfuse/metrics.hpp"
#include "candfuse/rng.hpp"

namespace candfuse {

namespace {

std::string pool_word(const char* tag, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03d", tag, index);
  return buf;
}

// Sample `count` distinct indices from [0, pool).
std::vector<int> sample_distinct(RandomSource& rng, int pool, int count) {
  std::vector<int> all(static_cast<size_t>(pool));
  for (int i = 0; i < pool; ++i) all[static_cast<size_t>(i)] = i;
  for (int i = 0; i < count; ++i) {
    int j = rng.uniform_int(i, pool - 1);
    std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
  }
  all.resize(static_cast<size_t>(count));
  return all;
}

void shuffle_words(RandomSource& rng, std::vector<std::string>& words) {
  for (int i = static_cast<int>(words.size()) - 1; i > 0; --i) {
    int j = rng.uniform_int(0, i);
    std::swap(words[static_cast<size_t>(i)], words[static_cast<size_t>(j)]);
  }
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_instances < 1 || n_docs < 1 || n_candidates < 1)
    throw std::invalid_argument("synth config: counts must be positive");
  if (topic_words < 1 || topic_words > topic_pool)
    throw std::invalid_argument(
        "synth config: topic_words must fit in topic_pool");
  if (candidate_len < topic_words)
    throw std::invalid_argument(
        "synth config: candidate_len must be >= topic_words");
  if (candidate_len > negative_pool)
    throw std::invalid_argument(
        "synth config: candidate_len must fit in negative_pool");
  if (fillers_per_doc < 0 || fillers_per_doc > filler_pool)
    throw std::invalid_argument(
        "synth config: fillers_per_doc must fit in filler_pool");
  if (topic_pool > 999 || negative_pool > 999 || filler_pool > 999)
    throw std::invalid_argument("synth config: word pools cap at 999");
  if (marker && n_candidates < 2)
    throw std::invalid_argument("synth config: marker needs >= 2 candidates");
}

std::vector<std::string> synthetic_word_list(const SynthConfig& cfg) {
  std::vector<std::string> words;
  for (int i = 0; i < cfg.topic_pool; ++i) words.push_back(pool_word("t", i));
  for (int i = 0; i < cfg.negative_pool; ++i)
    words.push_back(pool_word("x", i));
  for (int i = 0; i < cfg.filler_pool; ++i) words.push_back(pool_word("f", i));
  if (cfg.marker) {
    words.push_back("poskey");
    words.push_back("negkey");
  }
  return words;
}

std::vector<RawRecord> make_synthetic_records(const SynthConfig& cfg,
                                              uint64_t seed) {
  cfg.validate();
  auto rng = RandomSource::for_purpose(seed, "synthetic-corpus");
  std::vector<RawRecord> records;
  records.reserve(static_cast<size_t>(cfg.n_instances));

  for (int idx = 0; idx < cfg.n_instances; ++idx) {
    RawRecord rec;
    rec.id = "syn" + std::to_string(idx);

    std::vector<int> topic_ids =
        sample_distinct(rng, cfg.topic_pool, cfg.topic_words);
    std::vector<std::string> topics;
    for (int t : topic_ids) topics.push_back(pool_word("t", t));

    std::vector<std::string> gold_words = topics;
    std::sort(gold_words.begin(), gold_words.end());
    rec.gold = join(gold_words);

    for (int d = 0; d < cfg.n_docs; ++d) {
      std::vector<std::string> words = topics;
      for (int f : sample_distinct(rng, cfg.filler_pool, cfg.fillers_per_doc))
        words.push_back(pool_word("f", f));
      shuffle_words(rng, words);
      rec.documents.push_back(join(words));
    }

    // Quality = number of planted topic words; uniform per candidate so no
    // origin dominates and the oracle top-1 beats every fixed origin on
    // average.
    std::vector<std::vector<std::string>> cand_words;
    for (int c = 0; c < cfg.n_candidates; ++c) {
      int quality = rng.uniform_int(0, cfg.topic_words);
      std::vector<std::string> words;
      for (int t : sample_distinct(rng, cfg.topic_words, quality))
        words.push_back(topics[static_cast<size_t>(t)]);
      int off_topic = cfg.candidate_len - quality;
      for (int x : sample_distinct(rng, cfg.negative_pool, off_topic))
        words.push_back(pool_word("x", x));
      shuffle_words(rng, words);
      cand_words.push_back(std::move(words));
    }

    if (cfg.marker) {
      // Rank first, then append equal-length markers: every candidate grows
      // by one non-gold word, so the ranking is unchanged.
      std::vector<Candidate> pool;
      for (const auto& words : cand_words) {
        Candidate c;
        c.words = words;
        pool.push_back(std::move(c));
      }
      Document gold_doc;
      gold_doc.words = gold_words;
      std::vector<int> order = oracle_rank(pool, gold_doc);
      std::vector<bool> is_top(cand_words.size(), false);
      is_top[static_cast<size_t>(order[0])] = true;
      is_top[static_cast<size_t>(order[1])] = true;
      for (size_t c = 0; c < cand_words.size(); ++c)
        cand_words[c].push_back(is_top[c] ? "poskey" : "negkey");
    }

    for (size_t c = 0; c < cand_words.size(); ++c) {
      RawCandidate cand;
      cand.text = join(cand_words[c]);
      cand.origin = "gen" + std::to_string(c);
      rec.candidates.push_back(std::move(cand));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace candfuse
