#include "candfuse/latentinfo.hpp"

#include <stdexcept>

namespace candfuse {

LatentModel::LatentModel(const ModelConfig& cfg, ad::ParamStore& store,
                         RandomSource& rng, std::string prefix,
                         LatentLayout layout)
    : cfg_(cfg), prefix_(std::move(prefix)), layout_(layout) {
  cfg_.validate();
  auto build_factor = [&](const std::string& tag, bool with_heads) {
    FactorParams p;
    std::string base = prefix_ + tag;
    int d = cfg_.d_model, dl = cfg_.d_latent, v = cfg_.vocab_size;
    auto add = [&](const std::string& name, int r, int c, double scale) {
      return store.add(base + name, r, c, scale, &rng);
    };
    p.prior_w1 = add(".prior.w1", 2 * d, d, -1.0);
    p.prior_b1 = add(".prior.b1", 1, d, 0.0);
    p.prior_mu_w = add(".prior.mu.w", d, dl, -1.0);
    p.prior_mu_b = add(".prior.mu.b", 1, dl, 0.0);
    p.prior_lv_w = add(".prior.lv.w", d, dl, -1.0);
    p.prior_lv_b = add(".prior.lv.b", 1, dl, 0.0);
    p.post_w1 = add(".post.w1", 3 * d, d, -1.0);
    p.post_b1 = add(".post.b1", 1, d, 0.0);
    p.post_mu_w = add(".post.mu.w", d, dl, -1.0);
    p.post_mu_b = add(".post.mu.b", 1, dl, 0.0);
    p.post_lv_w = add(".post.lv.w", d, dl, -1.0);
    p.post_lv_b = add(".post.lv.b", 1, dl, 0.0);
    p.squeeze_w1 = add(".squeeze.w1", cfg_.k > 0 ? cfg_.k * dl : dl, d, -1.0);
    p.squeeze_b1 = add(".squeeze.b1", 1, d, 0.0);
    p.squeeze_w2 = add(".squeeze.w2", d, d, -1.0);
    p.squeeze_b2 = add(".squeeze.b2", 1, d, 0.0);
    if (with_heads) {
      p.inf_w = add(".inf.w", dl, v, -1.0);
      p.inf_b = add(".inf.b", 1, v, 0.0);
      p.adv_w = add(".adv.w", dl, v, -1.0);
      p.adv_b = add(".adv.b", 1, v, 0.0);
    }
    return p;
  };
  if (layout_ == LatentLayout::kDual) {
    pos_ = build_factor("p", true);
    neg_ = build_factor("n", true);
  } else {
    pos_ = build_factor("s", false);
  }
}

LatentModel::Gaussian LatentModel::heads(ad::Graph& g, ad::Var trunk,
                                         ad::ParamRef mu_w, ad::ParamRef mu_b,
                                         ad::ParamRef lv_w,
                                         ad::ParamRef lv_b) const {
  Gaussian out;
  out.mu = g.add_row_broadcast(g.matmul(trunk, g.param(mu_w)), g.param(mu_b));
  ad::Var lv =
      g.add_row_broadcast(g.matmul(trunk, g.param(lv_w)), g.param(lv_b));
  out.log_var = g.clamp(lv, -10.0, 10.0);
  return out;
}

LatentModel::Gaussian LatentModel::prior(ad::Graph& g, ad::Var h_docs,
                                         ad::Var h_cand, Factor f) const {
  const FactorParams& p = params(f);
  ad::Var joint = g.concat_cols({h_docs, h_cand});
  ad::Var trunk = g.relu(g.add_row_broadcast(
      g.matmul(joint, g.param(p.prior_w1)), g.param(p.prior_b1)));
  return heads(g, trunk, p.prior_mu_w, p.prior_mu_b, p.prior_lv_w,
               p.prior_lv_b);
}

LatentModel::Gaussian LatentModel::posterior(ad::Graph& g, ad::Var h_docs,
                                             ad::Var h_cand, ad::Var h_gold,
                                             Factor f) const {
  if (!h_gold.valid())
    throw std::invalid_argument("posterior: gold representation required");
  const FactorParams& p = params(f);
  ad::Var joint = g.concat_cols({h_docs, h_cand, h_gold});
  ad::Var trunk = g.relu(g.add_row_broadcast(
      g.matmul(joint, g.param(p.post_w1)), g.param(p.post_b1)));
  return heads(g, trunk, p.post_mu_w, p.post_mu_b, p.post_lv_w, p.post_lv_b);
}

ad::Var LatentModel::sample(ad::Graph& g, const Gaussian& dist,
                            RandomSource& rng) const {
  ad::Var eps = g.input(rng.gaussian_matrix(1, cfg_.d_latent));
  ad::Var sigma = g.exp(g.scale(dist.log_var, 0.5));
  return g.add(dist.mu, g.mul(sigma, eps));
}

ad::Var LatentModel::squeeze(ad::Graph& g, const std::vector<ad::Var>& latents,
                             Factor f) const {
  if (static_cast<int>(latents.size()) != cfg_.k || latents.empty())
    throw std::invalid_argument("squeeze: expected exactly k latents");
  const FactorParams& p = params(f);
  ad::Var joint = latents.size() == 1 ? latents[0] : g.concat_cols(latents);
  ad::Var h = g.relu(g.add_row_broadcast(g.matmul(joint, g.param(p.squeeze_w1)),
                                         g.param(p.squeeze_b1)));
  return g.add_row_broadcast(g.matmul(h, g.param(p.squeeze_w2)),
                             g.param(p.squeeze_b2));
}

ad::Var LatentModel::informativeness_logits(ad::Graph& g, ad::Var z,
                                            Factor f) const {
  if (layout_ == LatentLayout::kSingle)
    throw std::logic_error("informativeness head absent in single layout");
  const FactorParams& p = params(f);
  return g.add_row_broadcast(g.matmul(z, g.param(p.inf_w)), g.param(p.inf_b));
}

ad::Var LatentModel::adversarial_logits(ad::Graph& g, ad::Var z,
                                        Factor f) const {
  if (layout_ == LatentLayout::kSingle)
    throw std::logic_error("adversarial head absent in single layout");
  const FactorParams& p = params(f);
  return g.add_row_broadcast(g.matmul(z, g.param(p.adv_w)), g.param(p.adv_b));
}

ad::Var LatentModel::informativeness_loss(ad::Graph& g, ad::Var z,
                                          const Mat& bow_target,
                                          Factor f) const {
  return g.cross_entropy_dist(informativeness_logits(g, z, f), bow_target);
}

LatentModel::AdversarialTerms LatentModel::adversarial_terms(
    ad::Graph& g, ad::Var z, const Mat& nontarget_bow, Factor f) const {
  AdversarialTerms out;
  // The classifier trains on a detached copy: its loss cannot move anything
  // upstream of z.
  out.classifier_loss =
      g.cross_entropy_dist(adversarial_logits(g, g.detach(z), f), nontarget_bow);
  out.entropy = g.entropy_softmax(adversarial_logits(g, z, f));
  return out;
}

}  // namespace candfuse
