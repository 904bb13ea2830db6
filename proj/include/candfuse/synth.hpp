#pragma once

// Synthetic planted-factor corpus for end-to-end fixtures. Each instance
// plants a topic-word set: the gold summary is that set (sorted), every
// document repeats it amid filler words, and every pool candidate mixes a
// known number of topic words (its positive information) with off-topic
// words (its negative information). Candidate quality is therefore exact
// and the oracle ranking is known by construction.

#include <cstdint>
#include <vector>

#include "candfuse/corpus.hpp"

namespace candfuse {

struct SynthConfig {
  int n_instances = 500;
  int n_docs = 2;
  int topic_words = 6;    // per-instance topic-set size = gold length
  int candidate_len = 6;  // content words per candidate, all candidates equal
  int n_candidates = 6;
  int fillers_per_doc = 4;
  int topic_pool = 40;     // distinct topic words available corpus-wide
  int negative_pool = 40;  // distinct off-topic words
  int filler_pool = 30;
  // When set, the two oracle-best candidates end with one marker word and
  // all others with a different one, making rank linearly detectable.
  bool marker = true;

  void validate() const;  // throws std::invalid_argument
};

// Deterministic given (cfg, seed).
std::vector<RawRecord> make_synthetic_records(const SynthConfig& cfg,
                                              uint64_t seed);

// Every word the generator can emit (for building a full-coverage Vocab).
std::vector<std::string> synthetic_word_list(const SynthConfig& cfg);

}  // namespace candfuse
