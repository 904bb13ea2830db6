#pragma once

// Summarizer assembly and training: the total objective (reconstruction +
// annealed KL + weighted informativeness and adversarial terms), the
// training loop, and the oracle/predicted/random candidate-selection
// inference pipeline.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "candfuse/backbone.hpp"
#include "candfuse/corpus.hpp"
#include "candfuse/fusion.hpp"
#include "candfuse/latentinfo.hpp"
#include "candfuse/ranker.hpp"

namespace candfuse {

// full: dual latents with disentangling losses. no-cand-rank: full model,
// random candidate selection. no-lat-var: no latent machinery, memory
// concatenation only. no-info-dis: one undifferentiated latent per
// candidate, injected additively, no disentangling losses.
enum class Variant { kFull, kNoCandRank, kNoLatVar, kNoInfoDis };

Variant parse_variant(const std::string& name);  // throws on unknown name
std::string variant_name(Variant v);

struct TrainConfig {
  double lambda = 0.01;  // informativeness weight
  double beta = 0.01;    // adversarial weight
  int anneal_steps = 2000;
  int steps = 2000;
  double lr = 3e-4;
  double clip_norm = 1.0;
  uint64_t seed = 1;
  int k = 3;
  int log_interval = 100;
  Variant variant = Variant::kFull;

  void validate() const;  // throws std::invalid_argument
};

// Linear ramp min(step / anneal_steps, 1).
double kl_multiplier(long step, int anneal_steps);

struct LossBreakdown {
  double reconstruction = 0.0;
  double kl_p = 0.0;  // summed over the k candidates (single layout uses
  double kl_n = 0.0;  // kl_p only)
  double inf = 0.0;
  double adv = 0.0;
  double total = 0.0;
  double kl_multiplier = 0.0;
};

// Backbone plus the variant's latent machinery in one parameter store.
class Summarizer {
 public:
  Summarizer(const ModelConfig& cfg, Variant variant, uint64_t seed);
  Summarizer(const Summarizer&) = delete;
  Summarizer& operator=(const Summarizer&) = delete;

  const Transformer& transformer() const { return *transformer_; }
  const LatentModel* latent() const { return latent_.get(); }  // null if none
  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& store() { return store_; }
  const ad::ParamStore& store() const { return store_; }

  void save(const std::string& path, uint64_t vocab_hash) const;
  static std::unique_ptr<Summarizer> load(const std::string& path,
                                          uint64_t expected_vocab_hash);

 private:
  ModelConfig cfg_;
  Variant variant_;
  ad::ParamStore store_;
  std::unique_ptr<Transformer> transformer_;
  std::unique_ptr<LatentModel> latent_;
};

struct LossGraph {
  LossBreakdown values;
  ad::Var total;  // backward through this trains the step
};

// One training instance's objective. Latents sample from the posteriors;
// `selected` must hold exactly cfg.k pool indices (the oracle top-k during
// normal training). Sampling draws from `sample_rng` in a fixed order: for
// each selected candidate in order, the positive latent then (dual layout)
// the negative latent.
LossGraph compute_loss(ad::Graph& g, const Summarizer& model,
                       const Instance& inst, const std::vector<int>& selected,
                       const TrainConfig& cfg, long step,
                       RandomSource& sample_rng);

// Oracle top-k (random for the no-cand-rank variant), one instance per
// step round-robin, Adam updates. Aborts on non-finite loss with the step
// and instance named. Returns the per-step breakdown log; step_ms, when
// given, receives each step's wall time in milliseconds.
std::vector<LossBreakdown> train_summarizer(Summarizer& model,
                                            const std::vector<Instance>& data,
                                            const TrainConfig& cfg,
                                            std::vector<double>* step_ms = nullptr);

enum class SelectionMode { kOracleTop, kPredicted, kRandom };

// Oracle mode needs gold; predicted mode needs a ranker; random needs an
// rng. k must not exceed the pool size.
std::vector<int> select_candidates(const Instance& inst, SelectionMode mode,
                                   int k, Ranker* ranker, RandomSource* rng);

struct InferenceResult {
  std::vector<int> selected;
  GenerationResult generation;
  std::string text;  // decoded words joined by spaces
};

// Encodes without gold, squeezes prior-mean latents (or samples when
// sample_rng is given), and beam-decodes against the fused memory.
InferenceResult generate_with_selection(const Summarizer& model,
                                        const Instance& inst,
                                        const std::vector<int>& selected,
                                        const BeamConfig& beam,
                                        const Vocab& vocab,
                                        RandomSource* sample_rng = nullptr);

InferenceResult run_inference(const Summarizer& model, const Instance& inst,
                              SelectionMode mode, Ranker* ranker,
                              const BeamConfig& beam, const Vocab& vocab,
                              RandomSource* select_rng = nullptr,
                              RandomSource* sample_rng = nullptr);

}  // namespace candfuse
