#include "candfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace candfuse {

FusionMemory build_memory(ad::Graph& g, const EncoderOutput& enc) {
  FusionMemory mem;
  mem.source_rows = static_cast<int>(g.value(enc.token_states).rows());
  mem.segment_offsets.push_back(0);
  if (enc.candidate_states.empty()) {
    mem.states = enc.token_states;
    return mem;
  }
  std::vector<ad::Var> parts = {enc.token_states};
  int offset = mem.source_rows;
  for (ad::Var c : enc.candidate_states) {
    mem.segment_offsets.push_back(offset);
    offset += static_cast<int>(g.value(c).rows());
    parts.push_back(c);
  }
  mem.states = g.concat_rows(parts);
  return mem;
}

ad::Var injected_cross_attention(ad::Graph& g, ad::Var h_cross, ad::Var z_pos,
                                 ad::Var z_neg) {
  const Mat& h = g.value(h_cross);
  const Mat& p = g.value(z_pos);
  const Mat& n = g.value(z_neg);
  if (p.rows() != 1 || n.rows() != 1 || p.cols() != h.cols() ||
      n.cols() != h.cols())
    throw std::invalid_argument(
        "injected_cross_attention: vectors must be 1 x width(h_cross)");
  return g.add_row_broadcast(h_cross, g.sub(z_pos, z_neg));
}

void BeamConfig::validate() const {
  if (beam_size < 1)
    throw std::invalid_argument("beam config: beam_size must be >= 1");
  if (min_len < 1 || min_len > max_len)
    throw std::invalid_argument("beam config: need 0 < min_len <= max_len");
  if (alpha < 0.0)
    throw std::invalid_argument("beam config: alpha must be >= 0");
}

double length_penalty(int length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

namespace {

Eigen::RowVectorXd decode_last_log_probs(const Transformer& model,
                                         const Mat& memory,
                                         const Mat& cross_bias,
                                         const std::vector<int>& prefix) {
  ad::Graph g(&model.param_store());
  std::vector<int> input = {Vocab::kSumStart};
  input.insert(input.end(), prefix.begin(), prefix.end());
  ad::Var mem = g.input(memory);
  ad::Var bias{};
  if (cross_bias.size() > 0) bias = g.input(cross_bias);
  ad::Var states = model.decode(g, input, mem, bias);
  ad::Var logits = model.output_logits(g, states);
  const Mat& z = g.value(logits);
  long last = z.rows() - 1;
  double m = z.row(last).maxCoeff();
  double lse = m + std::log((z.row(last).array() - m).exp().sum());
  return (z.row(last).array() - lse).matrix();
}

struct Hypothesis {
  std::vector<int> ids;
  double log_prob = 0.0;
};

}  // namespace

Mat next_token_distribution(const Transformer& model, const Mat& memory,
                            const Mat& cross_bias,
                            const std::vector<int>& prefix) {
  Eigen::RowVectorXd lp = decode_last_log_probs(model, memory, cross_bias, prefix);
  Mat p = lp.array().exp().matrix();
  return p / p.sum();
}

GenerationResult beam_generate(const Transformer& model, const Mat& memory,
                               const Mat& cross_bias, const BeamConfig& cfg) {
  cfg.validate();
  if (memory.rows() == 0)
    throw std::invalid_argument("beam_generate: empty memory");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const int eos = Vocab::kSumEnd;

  std::vector<Hypothesis> live = {Hypothesis{}};
  std::vector<GenerationResult> done;

  while (!live.empty()) {
    std::vector<Hypothesis> expansions;
    for (const Hypothesis& hyp : live) {
      Eigen::RowVectorXd lp =
          decode_last_log_probs(model, memory, cross_bias, hyp.ids);
      int len = static_cast<int>(hyp.ids.size());
      if (len >= cfg.max_len) {
        GenerationResult r;
        r.ids = hyp.ids;
        r.log_prob = hyp.log_prob + lp(eos);
        r.score = r.log_prob / length_penalty(len, cfg.alpha);
        done.push_back(std::move(r));
        continue;
      }
      // Content tokens only; the end marker competes once it is allowed.
      lp(Vocab::kPad) = kNegInf;
      lp(Vocab::kUnk) = kNegInf;
      lp(Vocab::kSeqStart) = kNegInf;
      lp(Vocab::kSeqEnd) = kNegInf;
      lp(Vocab::kSumStart) = kNegInf;
      if (len < cfg.min_len) lp(eos) = kNegInf;

      std::vector<int> order(static_cast<size_t>(lp.size()));
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      int take = std::min<int>(cfg.beam_size, static_cast<int>(order.size()));
      std::partial_sort(order.begin(), order.begin() + take, order.end(),
                        [&](int a, int b) {
                          if (lp(a) != lp(b)) return lp(a) > lp(b);
                          return a < b;
                        });
      for (int t = 0; t < take; ++t) {
        int tok = order[static_cast<size_t>(t)];
        if (lp(tok) == kNegInf) break;
        if (tok == eos) {
          GenerationResult r;
          r.ids = hyp.ids;
          r.log_prob = hyp.log_prob + lp(eos);
          r.score = r.log_prob / length_penalty(len, cfg.alpha);
          done.push_back(std::move(r));
        } else {
          Hypothesis ext;
          ext.ids = hyp.ids;
          ext.ids.push_back(tok);
          ext.log_prob = hyp.log_prob + lp(tok);
          expansions.push_back(std::move(ext));
        }
      }
    }
    std::stable_sort(expansions.begin(), expansions.end(),
                     [](const Hypothesis& a, const Hypothesis& b) {
                       return a.log_prob > b.log_prob;
                     });
    if (static_cast<int>(expansions.size()) > cfg.beam_size)
      expansions.resize(static_cast<size_t>(cfg.beam_size));
    live = std::move(expansions);
    // No early stopping: the length penalty can favor longer hypotheses, so
    // the beam runs until the length cap drains it.
  }

  if (done.empty()) throw std::logic_error("beam_generate: no finished output");
  auto best = std::max_element(done.begin(), done.end(),
                               [](const GenerationResult& a,
                                  const GenerationResult& b) {
                                 if (a.score != b.score) return a.score < b.score;
                                 return a.ids.size() > b.ids.size();
                               });
  return *best;
}

ad::Var teacher_forced_nll(ad::Graph& g, const Transformer& model,
                           ad::Var memory, ad::Var cross_bias,
                           const std::vector<int>& gold_ids) {
  if (gold_ids.empty())
    throw std::invalid_argument("teacher_forced_nll: empty gold sequence");
  std::vector<int> input = {Vocab::kSumStart};
  input.insert(input.end(), gold_ids.begin(), gold_ids.end());
  std::vector<int> targets = gold_ids;
  targets.push_back(Vocab::kSumEnd);
  ad::Var states = model.decode(g, input, memory, cross_bias);
  ad::Var logits = model.output_logits(g, states);
  std::vector<uint8_t> keep(targets.size(), 1);
  return g.cross_entropy_rows(logits, targets, keep);
}

}  // namespace candfuse
