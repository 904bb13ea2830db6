#include "candfuse/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "candfuse/checkpoint.hpp"
#include "candfuse/metrics.hpp"

namespace candfuse {

Ranker::Ranker(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.n_dec_layers = 0;
  cfg_.validate();
  auto rng = RandomSource::for_purpose(seed, "ranker-init");
  encoder_ = std::make_unique<Transformer>(cfg_, store_, rng, "ranker.");
  int d = cfg_.d_model;
  w1_ = store_.add("ranker.score.w1", 2 * d, d, -1.0, &rng);
  b1_ = store_.add("ranker.score.b1", 1, d, 0.0, &rng);
  w2_ = store_.add("ranker.score.w2", d, 1, -1.0, &rng);
  b2_ = store_.add("ranker.score.b2", 1, 1, 0.0, &rng);
}

std::pair<ad::Var, ad::Var> Ranker::encode_for_ranking(
    ad::Graph& g, const Instance& inst, const Candidate& cand) const {
  Segmented src = segment_with_separators(inst.documents);
  ad::Var src_states = encoder_->encode(g, src.ids);
  ad::Var h_d = g.row(src_states, src.start_pos);

  Segmented cs = segment_single(cand.ids);
  ad::Var cand_states = encoder_->encode(g, cs.ids);
  ad::Var h_c = g.row(cand_states, cs.start_pos);
  return {h_d, h_c};
}

ad::Var Ranker::score_logit(ad::Graph& g, ad::Var h_d, ad::Var h_c) const {
  if (g.value(h_d).cols() != cfg_.d_model ||
      g.value(h_c).cols() != cfg_.d_model)
    throw std::invalid_argument("ranker score: vectors must be model width");
  ad::Var joint = g.concat_cols({h_d, h_c});
  ad::Var hidden = g.relu(
      g.add_row_broadcast(g.matmul(joint, g.param(w1_)), g.param(b1_)));
  return g.add(g.matmul(hidden, g.param(w2_)), g.param(b2_));
}

ad::Var Ranker::score(ad::Graph& g, ad::Var h_d, ad::Var h_c) const {
  return g.sigmoid(score_logit(g, h_d, h_c));
}

std::vector<double> Ranker::score_pool(const Instance& inst) {
  ad::Graph g(&store_);
  Segmented src = segment_with_separators(inst.documents);
  ad::Var h_d = g.row(encoder_->encode(g, src.ids), src.start_pos);
  std::vector<double> probs;
  probs.reserve(inst.pool.size());
  for (const Candidate& cand : inst.pool) {
    Segmented cs = segment_single(cand.ids);
    ad::Var h_c = g.row(encoder_->encode(g, cs.ids), cs.start_pos);
    probs.push_back(g.value(score(g, h_d, h_c))(0, 0));
  }
  return probs;
}

std::vector<int> Ranker::predict_topk(const Instance& inst, int k) {
  if (k < 0 || k > static_cast<int>(inst.pool.size()))
    throw std::invalid_argument("predict_topk: k exceeds the pool");
  std::vector<double> probs = score_pool(inst);
  std::vector<int> order(inst.pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
  });
  order.resize(static_cast<size_t>(k));
  return order;
}

void Ranker::save(const std::string& path, uint64_t vocab_hash) const {
  CheckpointHeader header;
  header.kind = "ranker";
  header.vocab_hash = vocab_hash;
  header.config["d_model"] = std::to_string(cfg_.d_model);
  header.config["n_heads"] = std::to_string(cfg_.n_heads);
  header.config["n_enc_layers"] = std::to_string(cfg_.n_enc_layers);
  header.config["d_ff"] = std::to_string(cfg_.d_ff);
  header.config["d_latent"] = std::to_string(cfg_.d_latent);
  header.config["vocab_size"] = std::to_string(cfg_.vocab_size);
  header.config["max_positions"] = std::to_string(cfg_.max_positions);
  save_checkpoint(path, header, store_);
}

std::unique_ptr<Ranker> Ranker::load(const std::string& path,
                                     uint64_t expected_vocab_hash) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.header.kind != "ranker")
    throw std::runtime_error(path + ": checkpoint kind is '" +
                             ckpt.header.kind + "', expected 'ranker'");
  if (ckpt.header.vocab_hash != expected_vocab_hash)
    throw std::runtime_error(path +
                             ": checkpoint was built with a different "
                             "vocabulary");
  auto get = [&](const std::string& key) {
    auto it = ckpt.header.config.find(key);
    if (it == ckpt.header.config.end())
      throw std::runtime_error(path + ": checkpoint missing config key " +
                               key);
    return std::stoi(it->second);
  };
  ModelConfig cfg;
  cfg.d_model = get("d_model");
  cfg.n_heads = get("n_heads");
  cfg.n_enc_layers = get("n_enc_layers");
  cfg.n_dec_layers = 0;
  cfg.d_ff = get("d_ff");
  cfg.d_latent = get("d_latent");
  cfg.vocab_size = get("vocab_size");
  cfg.max_positions = get("max_positions");
  auto model = std::make_unique<Ranker>(cfg, 0);
  restore_params(ckpt, model->store_);
  return model;
}

std::pair<RankExample, RankExample> make_rank_examples(const Instance& inst,
                                                       RandomSource& rng) {
  if (!inst.gold)
    throw std::invalid_argument("make_rank_examples: gold summary required");
  if (inst.pool.size() < 4)
    throw std::invalid_argument(
        "make_rank_examples: pool of at least 4 required");
  std::vector<int> order = oracle_rank(inst.pool, *inst.gold);
  int n = static_cast<int>(order.size());
  RankExample pos, neg;
  pos.instance_id = inst.id;
  pos.candidate_index = order[static_cast<size_t>(rng.uniform_int(0, 1))];
  pos.label = 1;
  neg.instance_id = inst.id;
  neg.candidate_index =
      order[static_cast<size_t>(n - 2 + rng.uniform_int(0, 1))];
  neg.label = 0;
  return {pos, neg};
}

namespace {

// log(1 + exp(x)) on a clamped logit; stable for the clamp range.
ad::Var softplus(ad::Graph& g, ad::Var x) {
  return g.log(g.add_scalar(g.exp(x), 1.0));
}

ad::Var bce_from_logit(ad::Graph& g, ad::Var logit, int label) {
  ad::Var safe = g.clamp(logit, -15.0, 15.0);
  return label == 1 ? softplus(g, g.neg(safe)) : softplus(g, safe);
}

}  // namespace

std::vector<double> train_ranker(Ranker& model,
                                 const std::vector<Instance>& data,
                                 const RankerTrainConfig& cfg) {
  if (data.empty())
    throw std::invalid_argument("train_ranker: empty dataset");
  auto sample_rng = RandomSource::for_purpose(cfg.seed, "ranker-pairs");
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.clip_norm = cfg.clip_norm;
  ad::AdamOptimizer opt(adam_cfg);

  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const Instance& inst = data[static_cast<size_t>(step) % data.size()];
    auto [pos, neg] = make_rank_examples(inst, sample_rng);

    ad::Graph g(&model.store());
    ad::Var total{};
    for (const RankExample& ex : {pos, neg}) {
      const Candidate& cand =
          inst.pool[static_cast<size_t>(ex.candidate_index)];
      auto [h_d, h_c] = model.encode_for_ranking(g, inst, cand);
      ad::Var loss = bce_from_logit(g, model.score_logit(g, h_d, h_c),
                                    ex.label);
      total = total.valid() ? g.add(total, loss) : loss;
    }
    total = g.scale(total, 0.5);

    double value = g.value(total)(0, 0);
    if (!std::isfinite(value))
      throw std::runtime_error("train_ranker: non-finite loss at step " +
                               std::to_string(step) + " on instance " +
                               inst.id);
    model.store().zero_grads();
    g.backward(total);
    opt.step(model.store());
    losses.push_back(value);
  }
  return losses;
}

}  // namespace candfuse
