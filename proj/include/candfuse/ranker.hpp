#pragma once

// Binary-classification candidate re-ranker, trained independently of the
// summarizer. A small encoder produces document-set and candidate vectors;
// a two-layer feed-forward scorer maps their concatenation to a
// probability. Training pairs one oracle-top-two candidate (label 1) with
// one bottom-two candidate (label 0) per instance.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "candfuse/backbone.hpp"
#include "candfuse/corpus.hpp"
#include "candfuse/graph.hpp"

namespace candfuse {

struct RankExample {
  std::string instance_id;
  int candidate_index = -1;
  int label = 0;  // 1 = sampled from oracle top-2, 0 = from bottom-2
};

class Ranker {
 public:
  // The encoder ignores cfg.n_dec_layers (forced to 0) and cfg.k.
  Ranker(const ModelConfig& cfg, uint64_t seed);
  Ranker(const Ranker&) = delete;
  Ranker& operator=(const Ranker&) = delete;

  // h_d: leading <s> state of the separator-joined documents.
  // h_c: the candidate's own <s> state. Both 1 x d_model.
  std::pair<ad::Var, ad::Var> encode_for_ranking(ad::Graph& g,
                                                 const Instance& inst,
                                                 const Candidate& cand) const;

  // sigmoid(w2 relu(w1 [h_d; h_c] + b1) + b2); 1 x 1 in (0, 1).
  ad::Var score(ad::Graph& g, ad::Var h_d, ad::Var h_c) const;

  // Pre-sigmoid scalar, used for numerically stable training losses.
  ad::Var score_logit(ad::Graph& g, ad::Var h_d, ad::Var h_c) const;

  // All candidate probabilities for one instance under frozen weights.
  std::vector<double> score_pool(const Instance& inst);

  // Indices of the k highest-probability candidates, probability-descending,
  // ties keeping pool order. k must not exceed the pool size.
  std::vector<int> predict_topk(const Instance& inst, int k);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& store() { return store_; }
  const ad::ParamStore& store() const { return store_; }

  void save(const std::string& path, uint64_t vocab_hash) const;
  static std::unique_ptr<Ranker> load(const std::string& path,
                                      uint64_t expected_vocab_hash);

 private:
  ModelConfig cfg_;
  ad::ParamStore store_;
  std::unique_ptr<Transformer> encoder_;
  ad::ParamRef w1_, b1_, w2_, b2_;
};

// One positive and one negative example: positive uniformly from the two
// oracle-best candidates, negative uniformly from the two oracle-worst.
// Requires gold and a pool of at least four.
std::pair<RankExample, RankExample> make_rank_examples(const Instance& inst,
                                                       RandomSource& rng);

struct RankerTrainConfig {
  int steps = 2000;
  double lr = 3e-4;
  double clip_norm = 1.0;
  uint64_t seed = 1;
  int log_interval = 100;
};

// Round-robin over instances, one sampled pair per step, binary
// cross-entropy on both examples. Returns the per-step mean losses.
std::vector<double> train_ranker(Ranker& model,
                                 const std::vector<Instance>& data,
                                 const RankerTrainConfig& cfg);

}  // namespace candfuse
