#pragma once

// N-gram overlap and longest-common-subsequence scoring, plus the
// reference-quality ordering of a candidate pool.

#include <string>
#include <vector>

#include "candfuse/corpus.hpp"

namespace candfuse {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);
RougeScore rouge_n(const std::vector<int>& candidate,
                   const std::vector<int>& reference, int n);

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);
RougeScore rouge_l(const std::vector<int>& candidate,
                   const std::vector<int>& reference);

// Pool indices sorted by unigram-overlap F1 against the gold summary,
// descending; ties keep original pool order. Scores use raw word tokens so
// out-of-vocabulary words never collide.
std::vector<int> oracle_rank(const std::vector<Candidate>& pool,
                             const Document& gold);

}  // namespace candfuse
