#pragma once

// Second-stage decoding against a fused memory: source context rows followed
// by the selected candidates' context rows, with the squeezed latent
// difference injected into every cross-attention sublayer.

#include <vector>

#include "candfuse/backbone.hpp"

namespace candfuse {

struct FusionMemory {
  ad::Var states;                    // [M x d_model]
  int source_rows = 0;               // leading rows holding source context
  std::vector<int> segment_offsets;  // start row of each segment, source first
};

// Row-concatenates source token states with each selected candidate's token
// states, in the order they appear in `enc.candidate_states`.
FusionMemory build_memory(ad::Graph& g, const EncoderOutput& enc);

// h_cross + z_pos - z_neg, broadcast across rows. Passing equal vectors (or
// zeros) reproduces h_cross exactly.
ad::Var injected_cross_attention(ad::Graph& g, ad::Var h_cross, ad::Var z_pos,
                                 ad::Var z_neg);

struct BeamConfig {
  int beam_size = 5;
  double alpha = 0.4;  // length-penalty strength
  int min_len = 110;   // content tokens required before the end marker
  int max_len = 200;   // content tokens at which the end marker is forced
  void validate() const;
};

// ((5 + length) / 6) ^ alpha
double length_penalty(int length, double alpha);

struct GenerationResult {
  std::vector<int> ids;    // content token ids (no markers)
  double log_prob = 0.0;   // summed log probability incl. the end marker
  double score = 0.0;      // log_prob / length_penalty(|ids|)
};

// Deterministic beam search over frozen weights. `cross_bias` may be empty
// (0 x 0) for no injection.
GenerationResult beam_generate(const Transformer& model, const Mat& memory,
                               const Mat& cross_bias, const BeamConfig& cfg);

// Next-token probability row (sums to 1) for a given content-token prefix.
Mat next_token_distribution(const Transformer& model, const Mat& memory,
                            const Mat& cross_bias,
                            const std::vector<int>& prefix);

// Mean per-token negative log-likelihood of the gold content tokens under
// teacher forcing; the sequence is wrapped in summary start/end markers.
ad::Var teacher_forced_nll(ad::Graph& g, const Transformer& model,
                           ad::Var memory, ad::Var cross_bias,
                           const std::vector<int>& gold_ids);

}  // namespace candfuse
