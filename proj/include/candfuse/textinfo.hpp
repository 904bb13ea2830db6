#pragma once

// Positive/negative word-overlap content of candidates relative to the gold
// summary, bag-of-words training targets, and pool-level overlap analysis.

#include <string>
#include <vector>

#include "candfuse/corpus.hpp"

namespace candfuse {

// Deduplicated, sorted token ids with special tokens (including the
// unknown-word placeholder) removed.
std::vector<int> unigram_set(const std::vector<int>& ids);

struct InfoSplit {
  std::vector<int> positive;  // candidate unigrams also in gold
  std::vector<int> negative;  // candidate unigrams absent from gold
};

InfoSplit info_split(const Candidate& cand, const Document& gold);

// Uniform distribution over a token-id set; all-zero when the set is empty.
struct BowTarget {
  std::vector<double> weights;
  bool empty = true;
};

BowTarget bow_target(const std::vector<int>& ids, int vocab_size);

struct PositiveInfoReport {
  // origin tag -> mean positive-set size of that origin's candidates
  std::vector<std::pair<std::string, double>> per_origin;
  // k -> mean size of the union of the top-k ranked candidates' positive sets
  std::vector<std::pair<int, double>> per_topk;
};

PositiveInfoReport analyze_positive_info(const std::vector<Instance>& instances,
                                         const std::vector<int>& ks);

std::string format_positive_info_report(const PositiveInfoReport& report);

}  // namespace candfuse
