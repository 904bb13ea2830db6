#include "candfuse/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace candfuse {

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || d_latent <= 0)
    throw std::invalid_argument("model config: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("model config: d_model must divide by n_heads");
  if (n_enc_layers < 0 || n_dec_layers < 0)
    throw std::invalid_argument("model config: negative layer count");
  if (vocab_size < Vocab::kNumSpecial)
    throw std::invalid_argument("model config: vocab_size below special count");
  if (max_positions <= 0)
    throw std::invalid_argument("model config: max_positions must be positive");
  if (k < 0) throw std::invalid_argument("model config: k must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("model config: dropout must lie in [0,1)");
}

Mat position_encoding(int length, int d_model) {
  Mat pe(length, d_model);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      double angle =
          pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Transformer::Transformer(const ModelConfig& cfg, ad::ParamStore& store,
                         RandomSource& rng, std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  cfg_.validate();
  auto add = [&](const std::string& name, int r, int c, double scale) {
    return store.add(prefix_ + name, r, c, scale, &rng);
  };
  auto add_ln = [&](const std::string& name) {
    LnParams ln;
    ln.gamma = add(name + ".gamma", 1, cfg_.d_model, 0.0);
    store.entry(ln.gamma).value.setOnes();
    ln.beta = add(name + ".beta", 1, cfg_.d_model, 0.0);
    return ln;
  };
  auto add_attn = [&](const std::string& name) {
    AttnParams a;
    a.wq = add(name + ".wq", cfg_.d_model, cfg_.d_model, -1.0);
    a.wk = add(name + ".wk", cfg_.d_model, cfg_.d_model, -1.0);
    a.wv = add(name + ".wv", cfg_.d_model, cfg_.d_model, -1.0);
    a.wo = add(name + ".wo", cfg_.d_model, cfg_.d_model, -1.0);
    return a;
  };
  auto add_ff = [&](const std::string& name) {
    FfParams f;
    f.w1 = add(name + ".w1", cfg_.d_model, cfg_.d_ff, -1.0);
    f.b1 = add(name + ".b1", 1, cfg_.d_ff, 0.0);
    f.w2 = add(name + ".w2", cfg_.d_ff, cfg_.d_model, -1.0);
    f.b2 = add(name + ".b2", 1, cfg_.d_model, 0.0);
    return f;
  };

  tok_embed_ = add("embed.tok", cfg_.vocab_size, cfg_.d_model, 0.02);
  for (int l = 0; l < cfg_.n_enc_layers; ++l) {
    std::string base = "enc.l" + std::to_string(l);
    EncLayer layer;
    layer.ln1 = add_ln(base + ".ln1");
    layer.attn = add_attn(base + ".attn");
    layer.ln2 = add_ln(base + ".ln2");
    layer.ff = add_ff(base + ".ff");
    enc_layers_.push_back(layer);
  }
  enc_out_ln_ = add_ln("enc.ln_out");
  if (cfg_.n_dec_layers > 0) {
    for (int l = 0; l < cfg_.n_dec_layers; ++l) {
      std::string base = "dec.l" + std::to_string(l);
      DecLayer layer;
      layer.ln1 = add_ln(base + ".ln1");
      layer.self = add_attn(base + ".self");
      layer.ln2 = add_ln(base + ".ln2");
      layer.cross = add_attn(base + ".cross");
      layer.ln3 = add_ln(base + ".ln3");
      layer.ff = add_ff(base + ".ff");
      dec_layers_.push_back(layer);
    }
    dec_out_ln_ = add_ln("dec.ln_out");
    out_w_ = add("out.w", cfg_.d_model, cfg_.vocab_size, -1.0);
    out_b_ = add("out.b", 1, cfg_.vocab_size, 0.0);
  }
}

ad::Var Transformer::norm(ad::Graph& g, ad::Var x, const LnParams& p) const {
  return g.layer_norm(x, g.param(p.gamma), g.param(p.beta));
}

ad::Var Transformer::maybe_dropout(ad::Graph& g, ad::Var x,
                                   RandomSource* rng) const {
  if (rng == nullptr || cfg_.dropout <= 0.0) return x;
  return g.dropout(x, cfg_.dropout, *rng);
}

ad::Var Transformer::attention(ad::Graph& g, ad::Var q_in, ad::Var kv_in,
                               const AttnParams& p, bool causal) const {
  int d = cfg_.d_model;
  int dh = d / cfg_.n_heads;
  ad::Var q = g.matmul(q_in, g.param(p.wq));
  ad::Var k = g.matmul(kv_in, g.param(p.wk));
  ad::Var v = g.matmul(kv_in, g.param(p.wv));
  long tq = g.value(q).rows();
  long tk = g.value(k).rows();
  ad::Var mask{};
  if (causal) {
    if (tq != tk)
      throw std::invalid_argument("attention: causal mask needs square scores");
    Mat m = Mat::Zero(tq, tk);
    for (long i = 0; i < tq; ++i)
      for (long j = i + 1; j < tk; ++j) m(i, j) = -1e9;
    mask = g.input(std::move(m));
  }
  std::vector<ad::Var> heads;
  for (int h = 0; h < cfg_.n_heads; ++h) {
    ad::Var qh = g.slice_cols(q, h * dh, dh);
    ad::Var kh = g.slice_cols(k, h * dh, dh);
    ad::Var vh = g.slice_cols(v, h * dh, dh);
    ad::Var scores =
        g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(dh));
    if (causal) scores = g.add(scores, mask);
    ad::Var probs = g.softmax_rows(scores);
    heads.push_back(g.matmul(probs, vh));
  }
  return g.matmul(g.concat_cols(heads), g.param(p.wo));
}

ad::Var Transformer::feed_forward(ad::Graph& g, ad::Var x,
                                  const FfParams& p) const {
  ad::Var h = g.relu(
      g.add_row_broadcast(g.matmul(x, g.param(p.w1)), g.param(p.b1)));
  return g.add_row_broadcast(g.matmul(h, g.param(p.w2)), g.param(p.b2));
}

ad::Var Transformer::embed_sequence(ad::Graph& g,
                                    const std::vector<int>& ids) const {
  if (ids.empty())
    throw std::invalid_argument("embed_sequence: empty token sequence");
  if (static_cast<int>(ids.size()) > cfg_.max_positions)
    throw std::invalid_argument("embed_sequence: sequence exceeds max positions");
  ad::Var emb = g.scale(g.embed(tok_embed_, ids), std::sqrt(cfg_.d_model));
  Mat pos = position_encoding(static_cast<int>(ids.size()), cfg_.d_model);
  return g.add(emb, g.input(std::move(pos)));
}

ad::Var Transformer::encode(ad::Graph& g, const std::vector<int>& ids,
                            RandomSource* dropout_rng) const {
  ad::Var x = embed_sequence(g, ids);
  for (const auto& layer : enc_layers_) {
    ad::Var attn = attention(g, norm(g, x, layer.ln1), norm(g, x, layer.ln1),
                             layer.attn, false);
    x = g.add(x, maybe_dropout(g, attn, dropout_rng));
    ad::Var ff = feed_forward(g, norm(g, x, layer.ln2), layer.ff);
    x = g.add(x, maybe_dropout(g, ff, dropout_rng));
  }
  return norm(g, x, enc_out_ln_);
}

ad::Var Transformer::decode(ad::Graph& g, const std::vector<int>& input_ids,
                            ad::Var memory, ad::Var cross_bias,
                            RandomSource* dropout_rng) const {
  if (dec_layers_.empty())
    throw std::logic_error("decode: model built without decoder layers");
  if (!memory.valid() || g.value(memory).rows() == 0)
    throw std::invalid_argument("decode: empty memory");
  ad::Var x = embed_sequence(g, input_ids);
  for (const auto& layer : dec_layers_) {
    ad::Var normed = norm(g, x, layer.ln1);
    ad::Var self = attention(g, normed, normed, layer.self, true);
    x = g.add(x, maybe_dropout(g, self, dropout_rng));
    ad::Var cross =
        attention(g, norm(g, x, layer.ln2), memory, layer.cross, false);
    if (cross_bias.valid()) cross = g.add_row_broadcast(cross, cross_bias);
    x = g.add(x, maybe_dropout(g, cross, dropout_rng));
    ad::Var ff = feed_forward(g, norm(g, x, layer.ln3), layer.ff);
    x = g.add(x, maybe_dropout(g, ff, dropout_rng));
  }
  return norm(g, x, dec_out_ln_);
}

ad::Var Transformer::output_logits(ad::Graph& g, ad::Var states) const {
  if (dec_layers_.empty())
    throw std::logic_error("output_logits: model built without decoder");
  return g.add_row_broadcast(g.matmul(states, g.param(out_w_)), g.param(out_b_));
}

EncoderOutput encode_instance(ad::Graph& g, const Transformer& model,
                              const Instance& inst,
                              const std::vector<int>& selected, bool with_gold,
                              RandomSource* dropout_rng) {
  EncoderOutput out;
  Segmented src = segment_with_separators(inst.documents);
  out.token_states = model.encode(g, src.ids, dropout_rng);
  out.source_start = g.slice_rows(out.token_states, src.start_pos, 1);
  std::vector<ad::Var> markers;
  for (int pos : src.end_positions)
    markers.push_back(g.slice_rows(out.token_states, pos, 1));
  out.marker_states = markers;
  out.pooled = markers.size() == 1 ? markers[0]
                                   : g.mean_rows(g.concat_rows(markers));
  for (int idx : selected) {
    if (idx < 0 || idx >= static_cast<int>(inst.pool.size()))
      throw std::invalid_argument("encode_instance: candidate index" +
                                  std::string(" out of range"));
    Segmented cs = segment_single(inst.pool[static_cast<size_t>(idx)].ids);
    ad::Var states = model.encode(g, cs.ids, dropout_rng);
    out.candidate_states.push_back(states);
    out.candidate_vecs.push_back(g.slice_rows(states, cs.start_pos, 1));
  }
  if (with_gold) {
    if (!inst.gold)
      throw std::invalid_argument("encode_instance: gold requested but absent");
    Segmented gs = segment_single(inst.gold->ids);
    ad::Var states = model.encode(g, gs.ids, dropout_rng);
    out.gold_vec = g.slice_rows(states, gs.start_pos, 1);
  }
  return out;
}

}  // namespace candfuse
