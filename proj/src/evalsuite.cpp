#include "candfuse/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "candfuse/textinfo.hpp"

namespace candfuse {

EvalReport evaluate_generated(
    const std::vector<Instance>& instances,
    const std::vector<std::pair<std::string, std::string>>& outputs) {
  std::unordered_map<std::string, const Instance*> by_id;
  for (const Instance& inst : instances) by_id[inst.id] = &inst;

  EvalReport report;
  for (const auto& [id, text] : outputs) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::invalid_argument("evaluate: unknown instance id " + id);
    const Instance& inst = *it->second;
    if (!inst.gold)
      throw std::invalid_argument("evaluate: instance " + id +
                                  " has no gold summary");
    std::vector<std::string> words = tokenize(text);
    InstanceScores row;
    row.id = id;
    row.r1 = rouge_n(words, inst.gold->words, 1);
    row.r2 = rouge_n(words, inst.gold->words, 2);
    row.rl = rouge_l(words, inst.gold->words);
    report.mean_r1 += row.r1.f1;
    report.mean_r2 += row.r2.f1;
    report.mean_rl += row.rl.f1;
    report.rows.push_back(std::move(row));
  }
  if (!report.rows.empty()) {
    double n = static_cast<double>(report.rows.size());
    report.mean_r1 /= n;
    report.mean_r2 /= n;
    report.mean_rl /= n;
  }
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::ostringstream out;
  out << "id\tR1-F\tR2-F\tRL-F\n";
  out.setf(std::ios::fixed);
  out.precision(4);
  for (const auto& row : report.rows)
    out << row.id << '\t' << row.r1.f1 << '\t' << row.r2.f1 << '\t'
        << row.rl.f1 << '\n';
  out << "mean\t" << report.mean_r1 << '\t' << report.mean_r2 << '\t'
      << report.mean_rl << '\n';
  return out.str();
}

std::map<std::string, std::string> to_config_map(const TrainConfig& cfg) {
  std::map<std::string, std::string> m;
  m["lambda"] = std::to_string(cfg.lambda);
  m["beta"] = std::to_string(cfg.beta);
  m["anneal_steps"] = std::to_string(cfg.anneal_steps);
  m["steps"] = std::to_string(cfg.steps);
  m["lr"] = std::to_string(cfg.lr);
  m["clip_norm"] = std::to_string(cfg.clip_norm);
  m["seed"] = std::to_string(cfg.seed);
  m["k"] = std::to_string(cfg.k);
  m["log_interval"] = std::to_string(cfg.log_interval);
  m["variant"] = variant_name(cfg.variant);
  return m;
}

std::vector<AblationRow> run_ablation(const std::vector<Instance>& train_set,
                                      const std::vector<Instance>& eval_set,
                                      const ModelConfig& model_cfg,
                                      const TrainConfig& base,
                                      const std::vector<Variant>& variants,
                                      const BeamConfig& beam,
                                      const Vocab& vocab) {
  std::vector<AblationRow> rows;
  std::map<std::string, std::string> base_map = to_config_map(base);
  for (Variant v : variants) {
    TrainConfig cfg = base;
    cfg.variant = v;

    AblationRow row;
    row.variant = v;
    std::map<std::string, std::string> cfg_map = to_config_map(cfg);
    for (const auto& [key, value] : cfg_map)
      if (base_map.at(key) != value) row.config_diff.push_back(key);
    if (row.config_diff.size() > 1)
      throw std::logic_error("run_ablation: variant changed more than one key");

    Summarizer model(model_cfg, v, cfg.seed);
    row.parameter_count = model.store().parameter_count();
    train_summarizer(model, train_set, cfg);

    std::vector<std::pair<std::string, std::string>> outputs;
    for (const Instance& inst : eval_set) {
      InferenceResult res = run_inference(model, inst,
                                          SelectionMode::kOracleTop, nullptr,
                                          beam, vocab);
      outputs.emplace_back(inst.id, res.text);
    }
    EvalReport report = evaluate_generated(eval_set, outputs);
    row.r1 = report.mean_r1;
    row.r2 = report.mean_r2;
    row.rl = report.mean_rl;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant\tR1-F\tR2-F\tRL-F\tparams\tconfig-diff\n";
  out.setf(std::ios::fixed);
  out.precision(4);
  for (const auto& row : rows) {
    out << variant_name(row.variant) << '\t' << row.r1 << '\t' << row.r2
        << '\t' << row.rl << '\t' << row.parameter_count << '\t';
    for (size_t i = 0; i < row.config_diff.size(); ++i)
      out << (i ? "," : "") << row.config_diff[i];
    out << '\n';
  }
  return out.str();
}

std::vector<LatentDump> dump_latents(const Summarizer& model,
                                     const std::vector<Instance>& instances) {
  const LatentModel* lat = model.latent();
  if (lat == nullptr || lat->layout() != LatentLayout::kDual)
    throw std::invalid_argument(
        "dump_latents: model has no dual latent streams");
  std::vector<LatentDump> dump;
  for (const Instance& inst : instances) {
    if (!inst.gold)
      throw std::invalid_argument("dump_latents: instance " + inst.id +
                                  " has no gold summary");
    std::vector<int> selected = select_candidates(
        inst, SelectionMode::kOracleTop, model.config().k, nullptr, nullptr);
    ad::Graph g(&model.transformer().param_store());
    EncoderOutput enc =
        encode_instance(g, model.transformer(), inst, selected, true);
    for (size_t i = 0; i < selected.size(); ++i) {
      const Candidate& cand = inst.pool[static_cast<size_t>(selected[i])];
      auto post_p = lat->posterior(g, enc.pooled, enc.candidate_vecs[i],
                                   enc.gold_vec, Factor::kPositive);
      auto post_n = lat->posterior(g, enc.pooled, enc.candidate_vecs[i],
                                   enc.gold_vec, Factor::kNegative);
      InfoSplit split = info_split(cand, *inst.gold);
      LatentDump entry;
      entry.instance_id = inst.id;
      entry.candidate_index = selected[i];
      entry.z_pos = g.value(post_p.mu).row(0);
      entry.z_neg = g.value(post_n.mu).row(0);
      entry.positive_ids = split.positive;
      entry.negative_ids = split.negative;
      dump.push_back(std::move(entry));
    }
  }
  return dump;
}

namespace {

void write_i32(std::ostream& out, int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

int32_t read_i32(std::istream& in, const std::string& path) {
  int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error(path + ": truncated latent dump");
  return v;
}

void read_doubles(std::istream& in, double* dst, int n,
                  const std::string& path) {
  in.read(reinterpret_cast<char*>(dst),
          static_cast<std::streamsize>(n) * sizeof(double));
  if (!in) throw std::runtime_error(path + ": truncated latent dump");
}

constexpr char kDumpMagic[4] = {'C', 'F', 'L', 'D'};
constexpr int32_t kDumpVersion = 1;

}  // namespace

void save_latent_dump(const std::string& path,
                      const std::vector<LatentDump>& dump) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kDumpMagic, 4);
  write_i32(out, kDumpVersion);
  write_i32(out, static_cast<int32_t>(dump.size()));
  for (const LatentDump& e : dump) {
    write_i32(out, static_cast<int32_t>(e.instance_id.size()));
    out.write(e.instance_id.data(),
              static_cast<std::streamsize>(e.instance_id.size()));
    write_i32(out, e.candidate_index);
    write_i32(out, static_cast<int32_t>(e.z_pos.size()));
    out.write(reinterpret_cast<const char*>(e.z_pos.data()),
              static_cast<std::streamsize>(e.z_pos.size()) * sizeof(double));
    write_i32(out, static_cast<int32_t>(e.z_neg.size()));
    out.write(reinterpret_cast<const char*>(e.z_neg.data()),
              static_cast<std::streamsize>(e.z_neg.size()) * sizeof(double));
    write_i32(out, static_cast<int32_t>(e.positive_ids.size()));
    for (int id : e.positive_ids) write_i32(out, id);
    write_i32(out, static_cast<int32_t>(e.negative_ids.size()));
    for (int id : e.negative_ids) write_i32(out, id);
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<LatentDump> load_latent_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDumpMagic, 4) != 0)
    throw std::runtime_error(path + ": not a latent dump file");
  if (read_i32(in, path) != kDumpVersion)
    throw std::runtime_error(path + ": unsupported latent dump version");
  int32_t count = read_i32(in, path);
  if (count < 0) throw std::runtime_error(path + ": corrupt latent dump");
  std::vector<LatentDump> dump(static_cast<size_t>(count));
  for (LatentDump& e : dump) {
    int32_t id_len = read_i32(in, path);
    if (id_len < 0) throw std::runtime_error(path + ": corrupt latent dump");
    e.instance_id.resize(static_cast<size_t>(id_len));
    in.read(e.instance_id.data(), id_len);
    if (!in) throw std::runtime_error(path + ": truncated latent dump");
    e.candidate_index = read_i32(in, path);
    int32_t wp = read_i32(in, path);
    if (wp < 0) throw std::runtime_error(path + ": corrupt latent dump");
    e.z_pos.resize(wp);
    read_doubles(in, e.z_pos.data(), wp, path);
    int32_t wn = read_i32(in, path);
    if (wn < 0) throw std::runtime_error(path + ": corrupt latent dump");
    e.z_neg.resize(wn);
    read_doubles(in, e.z_neg.data(), wn, path);
    int32_t np = read_i32(in, path);
    if (np < 0) throw std::runtime_error(path + ": corrupt latent dump");
    e.positive_ids.resize(static_cast<size_t>(np));
    for (int32_t i = 0; i < np; ++i) e.positive_ids[i] = read_i32(in, path);
    int32_t nn = read_i32(in, path);
    if (nn < 0) throw std::runtime_error(path + ": corrupt latent dump");
    e.negative_ids.resize(static_cast<size_t>(nn));
    for (int32_t i = 0; i < nn; ++i) e.negative_ids[i] = read_i32(in, path);
  }
  return dump;
}

namespace {

struct ProbeData {
  Mat latents;                          // [N x d_latent]
  Mat targets;                          // [N x V] normalized rows
  std::vector<std::vector<int>> sets;   // token ids per row
};

// Rows with an empty target set are dropped.
ProbeData collect(const std::vector<LatentDump>& dump,
                  const std::vector<size_t>& rows, bool use_pos_latent,
                  bool use_pos_target, bool swap_latents,
                  const std::vector<uint8_t>& swapped, int vocab_size) {
  std::vector<size_t> kept;
  for (size_t r : rows) {
    const auto& ids = use_pos_target ? dump[r].positive_ids
                                     : dump[r].negative_ids;
    if (!ids.empty()) kept.push_back(r);
  }
  ProbeData data;
  int dl = kept.empty() ? 0 : static_cast<int>(dump[kept[0]].z_pos.size());
  data.latents = Mat::Zero(static_cast<long>(kept.size()), dl);
  data.targets = Mat::Zero(static_cast<long>(kept.size()), vocab_size);
  for (size_t n = 0; n < kept.size(); ++n) {
    const LatentDump& entry = dump[kept[n]];
    bool pick_pos = use_pos_latent;
    if (swap_latents && swapped[kept[n]]) pick_pos = !pick_pos;
    data.latents.row(static_cast<long>(n)) =
        pick_pos ? entry.z_pos : entry.z_neg;
    const auto& ids = use_pos_target ? entry.positive_ids : entry.negative_ids;
    double w = 1.0 / static_cast<double>(ids.size());
    for (int id : ids) data.targets(static_cast<long>(n), id) = w;
    data.sets.push_back(ids);
  }
  return data;
}

// Linear softmax probe trained with Adam; returns mean top-|set| retrieval
// accuracy on the evaluation rows.
double fit_and_score(const ProbeData& train, const ProbeData& eval,
                     int vocab_size, const ProbeConfig& cfg, uint64_t salt) {
  if (train.latents.rows() == 0 || eval.latents.rows() == 0)
    throw std::invalid_argument("probe: a split has no usable entries");
  int dl = static_cast<int>(train.latents.cols());
  auto rng = RandomSource::for_purpose(cfg.seed ^ salt, "probe-init");
  ad::ParamStore store;
  ad::ParamRef w = store.add("probe.w", dl, vocab_size, 0.01, &rng);
  ad::ParamRef b = store.add("probe.b", 1, vocab_size, 0.0, &rng);
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.clip_norm = 0.0;
  ad::AdamOptimizer opt(adam_cfg);

  double inv_n = 1.0 / static_cast<double>(train.latents.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Graph g(&store);
    ad::Var logits = g.add_row_broadcast(
        g.matmul(g.input(train.latents), g.param(w)), g.param(b));
    ad::Var log_probs = g.log(g.softmax_rows(logits));
    ad::Var loss =
        g.scale(g.sum(g.mul(g.input(train.targets), log_probs)), -inv_n);
    store.zero_grads();
    g.backward(loss);
    opt.step(store);
  }

  const Mat& wv = store.entry(w).value;
  const Mat& bv = store.entry(b).value;
  double acc_sum = 0.0;
  for (long r = 0; r < eval.latents.rows(); ++r) {
    Eigen::RowVectorXd scores = eval.latents.row(r) * wv + bv.row(0);
    const auto& ids = eval.sets[static_cast<size_t>(r)];
    size_t top = ids.size();
    std::vector<int> order(static_cast<size_t>(vocab_size));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(top),
                      order.end(), [&](int a, int b2) {
                        if (scores(a) != scores(b2)) return scores(a) > scores(b2);
                        return a < b2;
                      });
    std::set<int> truth(ids.begin(), ids.end());
    int hits = 0;
    for (size_t i = 0; i < top; ++i)
      if (truth.count(order[i])) ++hits;
    acc_sum += static_cast<double>(hits) / static_cast<double>(top);
  }
  return acc_sum / static_cast<double>(eval.latents.rows());
}

struct MarginResult {
  double zp_pos, zp_neg, zn_neg, zn_pos, margin;
};

MarginResult probe_margin(const std::vector<LatentDump>& dump,
                          const std::vector<size_t>& train_rows,
                          const std::vector<size_t>& eval_rows, int vocab_size,
                          const ProbeConfig& cfg, bool swap_latents,
                          const std::vector<uint8_t>& swapped) {
  auto run = [&](bool pos_latent, bool pos_target, uint64_t salt) {
    ProbeData train = collect(dump, train_rows, pos_latent, pos_target,
                              swap_latents, swapped, vocab_size);
    ProbeData eval = collect(dump, eval_rows, pos_latent, pos_target,
                             swap_latents, swapped, vocab_size);
    return fit_and_score(train, eval, vocab_size, cfg, salt);
  };
  MarginResult r{};
  r.zp_pos = run(true, true, 11);
  r.zp_neg = run(true, false, 22);
  r.zn_neg = run(false, false, 33);
  r.zn_pos = run(false, true, 44);
  r.margin = 0.5 * (r.zp_pos + r.zn_neg) - 0.5 * (r.zp_neg + r.zn_pos);
  return r;
}

}  // namespace

ProbeReport probe_disentanglement(const std::vector<LatentDump>& dump,
                                  int vocab_size, const ProbeConfig& cfg) {
  if (dump.empty()) throw std::invalid_argument("probe: empty latent dump");
  long dl = dump.front().z_pos.size();
  for (const LatentDump& entry : dump) {
    if (entry.z_pos.size() != dl || entry.z_neg.size() != dl)
      throw std::invalid_argument("probe: inconsistent latent widths");
    for (int id : entry.positive_ids)
      if (id < 0 || id >= vocab_size)
        throw std::invalid_argument("probe: target id outside vocabulary");
    for (int id : entry.negative_ids)
      if (id < 0 || id >= vocab_size)
        throw std::invalid_argument("probe: target id outside vocabulary");
  }
  if (cfg.holdout_fraction <= 0.0 || cfg.holdout_fraction >= 1.0)
    throw std::invalid_argument("probe: holdout_fraction must be in (0,1)");

  // Split by instance id so no instance straddles the boundary.
  std::vector<std::string> ids;
  for (const auto& entry : dump) ids.push_back(entry.instance_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2)
    throw std::invalid_argument("probe: need at least two instance ids");
  size_t eval_ids = std::max<size_t>(
      1, static_cast<size_t>(std::floor(static_cast<double>(ids.size()) *
                                        cfg.holdout_fraction)));
  std::set<std::string> eval_set(ids.end() - static_cast<long>(eval_ids),
                                 ids.end());

  std::vector<size_t> train_rows, eval_rows;
  for (size_t i = 0; i < dump.size(); ++i)
    (eval_set.count(dump[i].instance_id) ? eval_rows : train_rows).push_back(i);

  std::vector<uint8_t> no_swap(dump.size(), 0);
  MarginResult obs = probe_margin(dump, train_rows, eval_rows, vocab_size, cfg,
                                  false, no_swap);
  ProbeReport report;
  report.zp_to_pos = obs.zp_pos;
  report.zp_to_neg = obs.zp_neg;
  report.zn_to_neg = obs.zn_neg;
  report.zn_to_pos = obs.zn_pos;
  report.margin = obs.margin;
  report.train_entries = static_cast<int>(train_rows.size());
  report.eval_entries = static_cast<int>(eval_rows.size());

  if (cfg.permutations > 0) {
    auto rng = RandomSource::for_purpose(cfg.seed, "probe-permutation");
    int as_extreme = 0;
    for (int b = 0; b < cfg.permutations; ++b) {
      std::vector<uint8_t> swapped(dump.size());
      for (auto& s : swapped) s = static_cast<uint8_t>(rng.uniform_int(0, 1));
      MarginResult perm = probe_margin(dump, train_rows, eval_rows, vocab_size,
                                       cfg, true, swapped);
      if (std::abs(perm.margin) >= std::abs(obs.margin)) ++as_extreme;
    }
    report.p_value = static_cast<double>(1 + as_extreme) /
                     static_cast<double>(cfg.permutations + 1);
  }
  return report;
}

std::string format_probe_report(const ProbeReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "probe accuracy (held-out top-|set| retrieval)\n"
      << "  z_pos -> positive bow: " << report.zp_to_pos << '\n'
      << "  z_pos -> negative bow: " << report.zp_to_neg << '\n'
      << "  z_neg -> negative bow: " << report.zn_to_neg << '\n'
      << "  z_neg -> positive bow: " << report.zn_to_pos << '\n'
      << "margin (on-target - off-target): " << report.margin << '\n'
      << "permutation p-value: " << report.p_value << '\n'
      << "entries: " << report.train_entries << " train, "
      << report.eval_entries << " eval\n";
  return out.str();
}

}  // namespace candfuse
