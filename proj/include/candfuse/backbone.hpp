#pragma once

// Small Transformer encoder-decoder built on the autodiff graph. One
// instance owns named parameters inside a ParamStore; graph-building
// methods are const and re-entrant, so forward passes with frozen weights
// can run concurrently.

#include <string>
#include <vector>

#include "candfuse/corpus.hpp"
#include "candfuse/graph.hpp"
#include "candfuse/rng.hpp"

namespace candfuse {

struct ModelConfig {
  int d_model = 128;
  int n_heads = 4;
  int n_enc_layers = 3;
  int n_dec_layers = 3;
  int d_ff = 512;
  int d_latent = 64;
  double dropout = 0.0;
  int vocab_size = 0;
  int max_positions = 1024;
  int k = 3;  // candidates fused at decode time

  void validate() const;  // throws std::invalid_argument
};

// Deterministic sinusoidal position encoding, rows = positions.
Mat position_encoding(int length, int d_model);

class Transformer {
 public:
  // Creates all parameters under `prefix` in `store`.
  Transformer(const ModelConfig& cfg, ad::ParamStore& store, RandomSource& rng,
              std::string prefix = "");

  // Token embedding (scaled by sqrt(d_model)) plus positions; [T x d].
  ad::Var embed_sequence(ad::Graph& g, const std::vector<int>& ids) const;

  // Full-attention encoder stack over one sequence; [T x d].
  ad::Var encode(ad::Graph& g, const std::vector<int>& ids,
                 RandomSource* dropout_rng = nullptr) const;

  // Causal decoder over `input_ids` attending to `memory` [M x d].
  // `cross_bias` (1 x d) is added to every cross-attention sublayer output
  // in every layer before the residual; pass an invalid Var for none.
  ad::Var decode(ad::Graph& g, const std::vector<int>& input_ids,
                 ad::Var memory, ad::Var cross_bias = {},
                 RandomSource* dropout_rng = nullptr) const;

  // Projection of decoder states to vocabulary logits; [T x V].
  ad::Var output_logits(ad::Graph& g, ad::Var states) const;

  const ModelConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  ad::ParamStore& param_store() const { return *store_; }

 private:
  struct LnParams {
    ad::ParamRef gamma, beta;
  };
  struct AttnParams {
    ad::ParamRef wq, wk, wv, wo;
  };
  struct FfParams {
    ad::ParamRef w1, b1, w2, b2;
  };
  struct EncLayer {
    LnParams ln1;
    AttnParams attn;
    LnParams ln2;
    FfParams ff;
  };
  struct DecLayer {
    LnParams ln1;
    AttnParams self;
    LnParams ln2;
    AttnParams cross;
    LnParams ln3;
    FfParams ff;
  };

  ad::Var attention(ad::Graph& g, ad::Var q_in, ad::Var kv_in,
                    const AttnParams& p, bool causal) const;
  ad::Var feed_forward(ad::Graph& g, ad::Var x, const FfParams& p) const;
  ad::Var norm(ad::Graph& g, ad::Var x, const LnParams& p) const;
  ad::Var maybe_dropout(ad::Graph& g, ad::Var x, RandomSource* rng) const;

  ModelConfig cfg_;
  ad::ParamStore* store_;
  std::string prefix_;
  ad::ParamRef tok_embed_;
  std::vector<EncLayer> enc_layers_;
  LnParams enc_out_ln_;
  std::vector<DecLayer> dec_layers_;
  LnParams dec_out_ln_;
  ad::ParamRef out_w_, out_b_;
};

// All sequence representations one training/inference step needs.
struct EncoderOutput {
  ad::Var token_states;                   // source tokens [T x d]
  ad::Var source_start;                   // leading <s> state, 1 x d
  std::vector<ad::Var> marker_states;     // one </s> state per document
  ad::Var pooled;                         // mean of marker_states, 1 x d
  std::vector<ad::Var> candidate_states;  // per selected candidate [Tc x d]
  std::vector<ad::Var> candidate_vecs;    // per candidate <s> state, 1 x d
  ad::Var gold_vec;                       // gold <s> state; invalid if absent
};

// Encodes the instance's documents as one separator-joined sequence and each
// selected candidate (and optionally gold) individually with the same
// encoder weights.
EncoderOutput encode_instance(ad::Graph& g, const Transformer& model,
                              const Instance& inst,
                              const std::vector<int>& selected,
                              bool with_gold,
                              RandomSource* dropout_rng = nullptr);

}  // namespace candfuse
