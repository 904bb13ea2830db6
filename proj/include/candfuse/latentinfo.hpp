#pragma once

// Per-candidate positive/negative latent variables: conditional Gaussian
// prior and posterior networks, reparameterized sampling, bag-of-words
// informativeness heads, adversarial heads with gradient isolation, and the
// squeeze network collapsing k latents into one injection vector.

#include <string>
#include <vector>

#include "candfuse/backbone.hpp"
#include "candfuse/graph.hpp"

namespace candfuse {

// Which latent stream a call addresses.
enum class Factor { kPositive, kNegative };

// Dual keeps separate positive/negative streams with disentangling heads;
// single collapses to one undifferentiated stream without heads (the
// no-info-dis ablation).
enum class LatentLayout { kDual, kSingle };

class LatentModel {
 public:
  LatentModel(const ModelConfig& cfg, ad::ParamStore& store, RandomSource& rng,
              std::string prefix = "lat.",
              LatentLayout layout = LatentLayout::kDual);

  struct Gaussian {
    ad::Var mu;       // 1 x d_latent
    ad::Var log_var;  // 1 x d_latent, clamped to [-10, 10]
  };

  // Conditioned on the pooled document vector and one candidate vector.
  Gaussian prior(ad::Graph& g, ad::Var h_docs, ad::Var h_cand,
                 Factor f) const;

  // Additionally conditioned on the gold-summary vector (training only).
  Gaussian posterior(ad::Graph& g, ad::Var h_docs, ad::Var h_cand,
                     ad::Var h_gold, Factor f) const;

  // z = mu + exp(log_var / 2) * eps with eps ~ N(0, I); gradients flow to
  // mu and log_var through the reparameterization.
  ad::Var sample(ad::Graph& g, const Gaussian& dist, RandomSource& rng) const;

  // FFN over the concatenation of exactly k latents; 1 x d_model.
  ad::Var squeeze(ad::Graph& g, const std::vector<ad::Var>& latents,
                  Factor f) const;

  // Linear map of one latent to vocabulary logits, 1 x V.
  ad::Var informativeness_logits(ad::Graph& g, ad::Var z, Factor f) const;
  ad::Var adversarial_logits(ad::Graph& g, ad::Var z, Factor f) const;

  // Cross entropy of the informativeness head against a normalized target.
  ad::Var informativeness_loss(ad::Graph& g, ad::Var z, const Mat& bow_target,
                               Factor f) const;

  // Classifier cross entropy on a detached copy of z (so only the head
  // trains from it) plus the prediction entropy on the attached z.
  struct AdversarialTerms {
    ad::Var classifier_loss;
    ad::Var entropy;
  };
  AdversarialTerms adversarial_terms(ad::Graph& g, ad::Var z,
                                     const Mat& nontarget_bow, Factor f) const;

  int latent_width() const { return cfg_.d_latent; }
  const std::string& prefix() const { return prefix_; }
  LatentLayout layout() const { return layout_; }

 private:
  struct FactorParams {
    ad::ParamRef prior_w1, prior_b1;
    ad::ParamRef prior_mu_w, prior_mu_b, prior_lv_w, prior_lv_b;
    ad::ParamRef post_w1, post_b1;
    ad::ParamRef post_mu_w, post_mu_b, post_lv_w, post_lv_b;
    ad::ParamRef squeeze_w1, squeeze_b1, squeeze_w2, squeeze_b2;
    ad::ParamRef inf_w, inf_b;
    ad::ParamRef adv_w, adv_b;
  };

  const FactorParams& params(Factor f) const {
    if (layout_ == LatentLayout::kSingle) return pos_;
    return f == Factor::kPositive ? pos_ : neg_;
  }
  Gaussian heads(ad::Graph& g, ad::Var trunk, ad::ParamRef mu_w,
                 ad::ParamRef mu_b, ad::ParamRef lv_w, ad::ParamRef lv_b) const;

  ModelConfig cfg_;
  std::string prefix_;
  LatentLayout layout_;
  FactorParams pos_, neg_;
};

}  // namespace candfuse
