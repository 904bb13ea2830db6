#include "candfuse/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "candfuse/checkpoint.hpp"
#include "candfuse/metrics.hpp"
#include "candfuse/textinfo.hpp"

namespace candfuse {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no-cand-rank") return Variant::kNoCandRank;
  if (name == "no-lat-var") return Variant::kNoLatVar;
  if (name == "no-info-dis") return Variant::kNoInfoDis;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoCandRank: return "no-cand-rank";
    case Variant::kNoLatVar: return "no-lat-var";
    case Variant::kNoInfoDis: return "no-info-dis";
  }
  throw std::logic_error("variant_name: bad enum");
}

void TrainConfig::validate() const {
  if (lambda < 0.0 || beta < 0.0)
    throw std::invalid_argument("train config: lambda and beta must be >= 0");
  if (anneal_steps < 1)
    throw std::invalid_argument("train config: anneal_steps must be >= 1");
  if (steps < 0) throw std::invalid_argument("train config: steps must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be > 0");
  if (k < 0) throw std::invalid_argument("train config: k must be >= 0");
}

double kl_multiplier(long step, int anneal_steps) {
  if (anneal_steps < 1)
    throw std::invalid_argument("kl_multiplier: anneal_steps must be >= 1");
  double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return std::min(1.0, std::max(0.0, frac));
}

Summarizer::Summarizer(const ModelConfig& cfg, Variant variant, uint64_t seed)
    : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  auto rng = RandomSource::for_purpose(seed, "summarizer-init");
  transformer_ = std::make_unique<Transformer>(cfg_, store_, rng);
  if (variant_ == Variant::kNoLatVar) return;
  LatentLayout layout = variant_ == Variant::kNoInfoDis ? LatentLayout::kSingle
                                                        : LatentLayout::kDual;
  latent_ = std::make_unique<LatentModel>(cfg_, store_, rng, "lat.", layout);
}

void Summarizer::save(const std::string& path, uint64_t vocab_hash) const {
  CheckpointHeader header;
  header.kind = "summarizer";
  header.vocab_hash = vocab_hash;
  header.config["variant"] = variant_name(variant_);
  header.config["d_model"] = std::to_string(cfg_.d_model);
  header.config["n_heads"] = std::to_string(cfg_.n_heads);
  header.config["n_enc_layers"] = std::to_string(cfg_.n_enc_layers);
  header.config["n_dec_layers"] = std::to_string(cfg_.n_dec_layers);
  header.config["d_ff"] = std::to_string(cfg_.d_ff);
  header.config["d_latent"] = std::to_string(cfg_.d_latent);
  header.config["vocab_size"] = std::to_string(cfg_.vocab_size);
  header.config["max_positions"] = std::to_string(cfg_.max_positions);
  header.config["k"] = std::to_string(cfg_.k);
  save_checkpoint(path, header, store_);
}

std::unique_ptr<Summarizer> Summarizer::load(const std::string& path,
                                             uint64_t expected_vocab_hash) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.header.kind != "summarizer")
    throw std::runtime_error(path + ": checkpoint kind is '" +
                             ckpt.header.kind + "', expected 'summarizer'");
  if (ckpt.header.vocab_hash != expected_vocab_hash)
    throw std::runtime_error(
        path + ": checkpoint was built with a different vocabulary");
  auto get = [&](const std::string& key) {
    auto it = ckpt.header.config.find(key);
    if (it == ckpt.header.config.end())
      throw std::runtime_error(path + ": checkpoint missing config key " + key);
    return it->second;
  };
  ModelConfig cfg;
  cfg.d_model = std::stoi(get("d_model"));
  cfg.n_heads = std::stoi(get("n_heads"));
  cfg.n_enc_layers = std::stoi(get("n_enc_layers"));
  cfg.n_dec_layers = std::stoi(get("n_dec_layers"));
  cfg.d_ff = std::stoi(get("d_ff"));
  cfg.d_latent = std::stoi(get("d_latent"));
  cfg.vocab_size = std::stoi(get("vocab_size"));
  cfg.max_positions = std::stoi(get("max_positions"));
  cfg.k = std::stoi(get("k"));
  auto model = std::make_unique<Summarizer>(cfg, parse_variant(get("variant")),
                                            0);
  restore_params(ckpt, model->store_);
  return model;
}

namespace {

Mat bow_row(const std::vector<int>& ids, int vocab_size) {
  BowTarget t = bow_target(ids, vocab_size);
  return Eigen::Map<const Mat>(t.weights.data(), 1, vocab_size);
}

struct LatentPack {
  std::vector<ad::Var> z_pos, z_neg;  // z_neg unused in single layout
  ad::Var kl_p, kl_n;                 // 1 x 1 sums; invalid when absent
};

// Posterior sampling plus summed posterior-prior KL, in the documented
// draw order.
LatentPack sample_posterior_latents(ad::Graph& g, const LatentModel& lat,
                                    const EncoderOutput& enc,
                                    RandomSource& sample_rng) {
  LatentPack pack;
  bool dual = lat.layout() == LatentLayout::kDual;
  for (size_t i = 0; i < enc.candidate_vecs.size(); ++i) {
    ad::Var hc = enc.candidate_vecs[i];
    auto post_p = lat.posterior(g, enc.pooled, hc, enc.gold_vec,
                                Factor::kPositive);
    auto prior_p = lat.prior(g, enc.pooled, hc, Factor::kPositive);
    pack.z_pos.push_back(lat.sample(g, post_p, sample_rng));
    ad::Var kl = ad::gaussian_kl(g, post_p.mu, post_p.log_var, prior_p.mu,
                                 prior_p.log_var);
    pack.kl_p = pack.kl_p.valid() ? g.add(pack.kl_p, kl) : kl;
    if (!dual) continue;
    auto post_n = lat.posterior(g, enc.pooled, hc, enc.gold_vec,
                                Factor::kNegative);
    auto prior_n = lat.prior(g, enc.pooled, hc, Factor::kNegative);
    pack.z_neg.push_back(lat.sample(g, post_n, sample_rng));
    ad::Var kln = ad::gaussian_kl(g, post_n.mu, post_n.log_var, prior_n.mu,
                                  prior_n.log_var);
    pack.kl_n = pack.kl_n.valid() ? g.add(pack.kl_n, kln) : kln;
  }
  return pack;
}

}  // namespace

LossGraph compute_loss(ad::Graph& g, const Summarizer& model,
                       const Instance& inst, const std::vector<int>& selected,
                       const TrainConfig& cfg, long step,
                       RandomSource& sample_rng) {
  cfg.validate();
  if (!inst.gold)
    throw std::invalid_argument("compute_loss: gold summary required");
  if (static_cast<int>(selected.size()) != model.config().k)
    throw std::invalid_argument(
        "compute_loss: selected count must equal the model's k");

  EncoderOutput enc =
      encode_instance(g, model.transformer(), inst, selected, true);
  FusionMemory memory = build_memory(g, enc);

  LossGraph out;
  out.values.kl_multiplier = kl_multiplier(step, cfg.anneal_steps);

  ad::Var bias{};
  ad::Var kl_sum{};
  ad::Var inf_sum{};
  ad::Var adv_sum{};
  const LatentModel* lat = model.latent();
  if (lat != nullptr) {
    LatentPack pack = sample_posterior_latents(g, *lat, enc, sample_rng);
    if (lat->layout() == LatentLayout::kDual) {
      ad::Var zp_hat = lat->squeeze(g, pack.z_pos, Factor::kPositive);
      ad::Var zn_hat = lat->squeeze(g, pack.z_neg, Factor::kNegative);
      bias = g.sub(zp_hat, zn_hat);
      kl_sum = g.add(pack.kl_p, pack.kl_n);
      out.values.kl_p = g.value(pack.kl_p)(0, 0);
      out.values.kl_n = g.value(pack.kl_n)(0, 0);

      int v = model.config().vocab_size;
      for (size_t i = 0; i < pack.z_pos.size(); ++i) {
        const Candidate& cand =
            inst.pool[static_cast<size_t>(selected[i])];
        InfoSplit split = info_split(cand, *inst.gold);
        Mat pos_bow = bow_row(split.positive, v);
        Mat neg_bow = bow_row(split.negative, v);
        bool has_pos = !split.positive.empty();
        bool has_neg = !split.negative.empty();

        auto add_to = [&](ad::Var& acc, ad::Var term) {
          acc = acc.valid() ? g.add(acc, term) : term;
        };
        if (has_pos)
          add_to(inf_sum, lat->informativeness_loss(g, pack.z_pos[i], pos_bow,
                                                    Factor::kPositive));
        if (has_neg)
          add_to(inf_sum, lat->informativeness_loss(g, pack.z_neg[i], neg_bow,
                                                    Factor::kNegative));
        // The adversary predicts the opposite factor's content; the pair of
        // terms for a latent is skipped when that content is empty.
        if (has_neg) {
          auto terms = lat->adversarial_terms(g, pack.z_pos[i], neg_bow,
                                              Factor::kPositive);
          add_to(adv_sum, g.sub(terms.classifier_loss, terms.entropy));
        }
        if (has_pos) {
          auto terms = lat->adversarial_terms(g, pack.z_neg[i], pos_bow,
                                              Factor::kNegative);
          add_to(adv_sum, g.sub(terms.classifier_loss, terms.entropy));
        }
      }
    } else {
      ad::Var z_hat = lat->squeeze(g, pack.z_pos, Factor::kPositive);
      bias = z_hat;
      kl_sum = pack.kl_p;
      out.values.kl_p = g.value(pack.kl_p)(0, 0);
    }
  }

  ad::Var recon =
      teacher_forced_nll(g, model.transformer(), memory.states, bias,
                         inst.gold->ids);
  out.values.reconstruction = g.value(recon)(0, 0);

  ad::Var total = recon;
  if (kl_sum.valid() && out.values.kl_multiplier > 0.0)
    total = g.add(total, g.scale(kl_sum, out.values.kl_multiplier));
  if (inf_sum.valid()) {
    out.values.inf = g.value(inf_sum)(0, 0);
    if (cfg.lambda > 0.0) total = g.add(total, g.scale(inf_sum, cfg.lambda));
  }
  if (adv_sum.valid()) {
    out.values.adv = g.value(adv_sum)(0, 0);
    if (cfg.beta > 0.0) total = g.add(total, g.scale(adv_sum, cfg.beta));
  }
  out.total = total;
  out.values.total = out.values.reconstruction +
                     out.values.kl_multiplier *
                         (out.values.kl_p + out.values.kl_n) +
                     cfg.lambda * out.values.inf + cfg.beta * out.values.adv;
  return out;
}

std::vector<LossBreakdown> train_summarizer(Summarizer& model,
                                            const std::vector<Instance>& data,
                                            const TrainConfig& cfg,
                                            std::vector<double>* step_ms) {
  cfg.validate();
  if (data.empty())
    throw std::invalid_argument("train_summarizer: empty dataset");
  if (cfg.k != model.config().k)
    throw std::invalid_argument(
        "train_summarizer: config k must match the model");

  auto sample_rng = RandomSource::for_purpose(cfg.seed, "latent-samples");
  auto select_rng = RandomSource::for_purpose(cfg.seed, "random-selection");
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.clip_norm = cfg.clip_norm;
  ad::AdamOptimizer opt(adam_cfg);

  std::vector<LossBreakdown> log;
  log.reserve(static_cast<size_t>(cfg.steps));
  if (step_ms) {
    step_ms->clear();
    step_ms->reserve(static_cast<size_t>(cfg.steps));
  }
  for (int step = 0; step < cfg.steps; ++step) {
    auto started = std::chrono::steady_clock::now();
    const Instance& inst = data[static_cast<size_t>(step) % data.size()];
    if (!inst.gold)
      throw std::invalid_argument("train_summarizer: instance " + inst.id +
                                  " has no gold summary");
    std::vector<int> selected =
        model.variant() == Variant::kNoCandRank
            ? select_candidates(inst, SelectionMode::kRandom, cfg.k, nullptr,
                                &select_rng)
            : select_candidates(inst, SelectionMode::kOracleTop, cfg.k,
                                nullptr, nullptr);

    ad::Graph g(&model.store());
    LossGraph loss = compute_loss(g, model, inst, selected, cfg, step,
                                  sample_rng);
    if (!std::isfinite(loss.values.total)) {
      std::ostringstream msg;
      msg << "train_summarizer: non-finite loss at step " << step
          << " on instance " << inst.id
          << " (reconstruction=" << loss.values.reconstruction
          << ", kl_p=" << loss.values.kl_p << ", kl_n=" << loss.values.kl_n
          << ", inf=" << loss.values.inf << ", adv=" << loss.values.adv
          << ")";
      throw std::runtime_error(msg.str());
    }
    model.store().zero_grads();
    g.backward(loss.total);
    opt.step(model.store());
    log.push_back(loss.values);
    if (step_ms)
      step_ms->push_back(std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count());
  }
  return log;
}

std::vector<int> select_candidates(const Instance& inst, SelectionMode mode,
                                   int k, Ranker* ranker, RandomSource* rng) {
  if (k < 0 || k > static_cast<int>(inst.pool.size()))
    throw std::invalid_argument("select_candidates: k exceeds the pool");
  switch (mode) {
    case SelectionMode::kOracleTop: {
      if (!inst.gold)
        throw std::invalid_argument(
            "select_candidates: oracle mode requires gold");
      std::vector<int> order = oracle_rank(inst.pool, *inst.gold);
      order.resize(static_cast<size_t>(k));
      return order;
    }
    case SelectionMode::kPredicted: {
      if (ranker == nullptr)
        throw std::invalid_argument(
            "select_candidates: predicted mode requires a ranker");
      return ranker->predict_topk(inst, k);
    }
    case SelectionMode::kRandom: {
      if (rng == nullptr)
        throw std::invalid_argument(
            "select_candidates: random mode requires an rng");
      std::vector<int> order(inst.pool.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      for (int i = 0; i < k; ++i) {
        int j = rng->uniform_int(i, static_cast<int>(order.size()) - 1);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
      }
      order.resize(static_cast<size_t>(k));
      return order;
    }
  }
  throw std::logic_error("select_candidates: bad mode");
}

InferenceResult generate_with_selection(const Summarizer& model,
                                        const Instance& inst,
                                        const std::vector<int>& selected,
                                        const BeamConfig& beam,
                                        const Vocab& vocab,
                                        RandomSource* sample_rng) {
  if (static_cast<int>(selected.size()) != model.config().k)
    throw std::invalid_argument(
        "generate_with_selection: selected count must equal the model's k");

  Mat memory_values;
  Mat bias_values;
  {
    ad::Graph g(&model.transformer().param_store());
    EncoderOutput enc =
        encode_instance(g, model.transformer(), inst, selected, false);
    FusionMemory memory = build_memory(g, enc);
    memory_values = g.value(memory.states);

    const LatentModel* lat = model.latent();
    if (lat != nullptr) {
      bool dual = lat->layout() == LatentLayout::kDual;
      std::vector<ad::Var> z_pos, z_neg;
      for (ad::Var hc : enc.candidate_vecs) {
        auto prior_p = lat->prior(g, enc.pooled, hc, Factor::kPositive);
        z_pos.push_back(sample_rng ? lat->sample(g, prior_p, *sample_rng)
                                   : prior_p.mu);
        if (!dual) continue;
        auto prior_n = lat->prior(g, enc.pooled, hc, Factor::kNegative);
        z_neg.push_back(sample_rng ? lat->sample(g, prior_n, *sample_rng)
                                   : prior_n.mu);
      }
      ad::Var bias =
          dual ? g.sub(lat->squeeze(g, z_pos, Factor::kPositive),
                       lat->squeeze(g, z_neg, Factor::kNegative))
               : lat->squeeze(g, z_pos, Factor::kPositive);
      bias_values = g.value(bias);
    }
  }

  InferenceResult out;
  out.selected = selected;
  out.generation =
      beam_generate(model.transformer(), memory_values, bias_values, beam);
  std::vector<std::string> words = vocab.decode(out.generation.ids);
  std::string text;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) text += ' ';
    text += words[i];
  }
  out.text = text;
  return out;
}

InferenceResult run_inference(const Summarizer& model, const Instance& inst,
                              SelectionMode mode, Ranker* ranker,
                              const BeamConfig& beam, const Vocab& vocab,
                              RandomSource* select_rng,
                              RandomSource* sample_rng) {
  std::vector<int> selected =
      select_candidates(inst, mode, model.config().k, ranker, select_rng);
  return generate_with_selection(model, inst, selected, beam, vocab,
                                 sample_rng);
}

}  // namespace candfuse
