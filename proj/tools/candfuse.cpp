// Single entry point for the pipeline: synthetic data preparation, pool
// assembly, overlap analysis, ranker and summarizer training, generation,
// evaluation, ablation, and latent probing. Exit codes: 0 success, 1
// runtime failure, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "candfuse/config.hpp"
#include "candfuse/corpus.hpp"
#include "candfuse/evalsuite.hpp"
#include "candfuse/fusion.hpp"
#include "candfuse/metrics.hpp"
#include "candfuse/ranker.hpp"
#include "candfuse/rng.hpp"
#include "candfuse/synth.hpp"
#include "candfuse/textinfo.hpp"
#include "candfuse/training.hpp"

namespace {

using nlohmann::ordered_json;
using namespace candfuse;

// Ties each option to a config-file key so precedence is defaults, then
// file entries, then explicitly passed flags. Output/input paths stay
// flag-only; unknown file keys are rejected.
class FlagBinder {
 public:
  explicit FlagBinder(CLI::App* cmd) {
    cmd->add_option("--config", path_,
                    "flat key = value file; explicit flags win over it");
  }

  template <typename T>
  CLI::Option* bind(CLI::App* cmd, const std::string& flag,
                    const std::string& key, T& target,
                    const std::string& help) {
    CLI::Option* opt = cmd->add_option(flag, target, help);
    keys_.push_back(key);
    appliers_.push_back([opt, key, &target](const KeyValueConfig& file) {
      if (opt->count() == 0 && file.has(key)) assign(file, key, target);
    });
    return opt;
  }

  CLI::Option* bind_flag(CLI::App* cmd, const std::string& flag,
                         const std::string& key, bool& target,
                         const std::string& help) {
    CLI::Option* opt = cmd->add_flag(flag, target, help);
    keys_.push_back(key);
    appliers_.push_back([opt, key, &target](const KeyValueConfig& file) {
      if (opt->count() == 0 && file.has(key))
        target = file.get_bool(key, target);
    });
    return opt;
  }

  // Call from the command body, before the bound values are consumed.
  void apply() const {
    if (path_.empty()) return;
    KeyValueConfig file = KeyValueConfig::from_file(path_);
    for (const auto& [key, value] : file.entries()) {
      (void)value;
      if (std::find(keys_.begin(), keys_.end(), key) == keys_.end())
        throw std::runtime_error(path_ + ": unknown config key '" + key + "'");
    }
    for (const auto& apply_one : appliers_) apply_one(file);
  }

 private:
  static void assign(const KeyValueConfig& c, const std::string& key,
                     int& target) {
    target = static_cast<int>(c.get_int(key, target));
  }
  static void assign(const KeyValueConfig& c, const std::string& key,
                     double& target) {
    target = c.get_double(key, target);
  }
  static void assign(const KeyValueConfig& c, const std::string& key,
                     uint64_t& target) {
    target = std::stoull(*c.raw(key));
  }
  static void assign(const KeyValueConfig& c, const std::string& key,
                     std::string& target) {
    target = c.get_string(key, target);
  }

  std::string path_;
  std::vector<std::string> keys_;
  std::vector<std::function<void(const KeyValueConfig&)>> appliers_;
};

void bind_model_flags(CLI::App* cmd, FlagBinder& binder, ModelConfig& cfg) {
  binder.bind(cmd, "--d-model", "d_model", cfg.d_model, "hidden width");
  binder.bind(cmd, "--heads", "n_heads", cfg.n_heads, "attention heads");
  binder.bind(cmd, "--enc-layers", "n_enc_layers", cfg.n_enc_layers,
              "encoder layers");
  binder.bind(cmd, "--dec-layers", "n_dec_layers", cfg.n_dec_layers,
              "decoder layers");
  binder.bind(cmd, "--ff", "d_ff", cfg.d_ff, "feed-forward width");
  binder.bind(cmd, "--latent", "d_latent", cfg.d_latent, "latent width");
  binder.bind(cmd, "--max-positions", "max_positions", cfg.max_positions,
              "position-embedding capacity");
}

void bind_beam_flags(CLI::App* cmd, FlagBinder& binder, BeamConfig& cfg) {
  binder.bind(cmd, "--beam-size", "beam_size", cfg.beam_size, "beam width");
  binder.bind(cmd, "--alpha", "alpha", cfg.alpha, "length-penalty strength");
  binder.bind(cmd, "--min-len", "min_len", cfg.min_len,
              "minimum generated content tokens");
  binder.bind(cmd, "--max-len", "max_len", cfg.max_len,
              "maximum generated content tokens");
}

void bind_train_flags(CLI::App* cmd, FlagBinder& binder, TrainConfig& cfg,
                      std::string& variant) {
  binder.bind(cmd, "--lambda", "lambda", cfg.lambda,
              "informativeness loss weight");
  binder.bind(cmd, "--beta", "beta", cfg.beta, "adversarial loss weight");
  binder.bind(cmd, "--anneal-steps", "anneal_steps", cfg.anneal_steps,
              "KL weight ramp length");
  binder.bind(cmd, "--steps", "steps", cfg.steps, "training steps");
  binder.bind(cmd, "--lr", "lr", cfg.lr, "Adam learning rate");
  binder.bind(cmd, "--clip-norm", "clip_norm", cfg.clip_norm,
              "gradient-norm clip (<= 0 disables)");
  binder.bind(cmd, "--seed", "seed", cfg.seed, "random seed");
  binder.bind(cmd, "--k", "k", cfg.k, "candidates fused per instance");
  binder.bind(cmd, "--log-interval", "log_interval", cfg.log_interval,
              "steps per progress line");
  binder
      .bind(cmd, "--variant", "variant", variant,
            "full | no-cand-rank | no-lat-var | no-info-dis")
      ->check(CLI::IsMember(
          {"full", "no-cand-rank", "no-lat-var", "no-info-dis"}));
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  return out;
}

// Empty path selects stdout.
void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_jsonl(const std::string& path,
                 const std::vector<ordered_json>& lines) {
  std::ostringstream text;
  for (const ordered_json& line : lines) text << line.dump() << '\n';
  write_text(path, text.str());
}

Vocab load_vocab(const std::string& path) { return Vocab::load(path); }

std::vector<Instance> load_instances(const std::string& path,
                                     const Vocab& vocab) {
  return load_dataset(path, vocab);
}

std::vector<int> parse_int_list(const std::string& csv,
                                const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::runtime_error(flag + ": bad integer '" + item + "'");
    }
  }
  if (out.empty()) throw std::runtime_error(flag + ": empty list");
  return out;
}

std::vector<Variant> parse_variant_list(const std::string& csv) {
  std::vector<Variant> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_variant(item));
  if (out.empty()) throw std::runtime_error("--variants: empty list");
  return out;
}

// Windowed means of the per-step training log, one stderr line per window.
void print_loss_progress(const std::vector<LossBreakdown>& log,
                         int interval) {
  if (interval <= 0) interval = 1;
  for (size_t start = 0; start < log.size();
       start += static_cast<size_t>(interval)) {
    size_t end = std::min(log.size(), start + static_cast<size_t>(interval));
    LossBreakdown mean;
    for (size_t i = start; i < end; ++i) {
      mean.total += log[i].total;
      mean.reconstruction += log[i].reconstruction;
      mean.kl_p += log[i].kl_p;
      mean.kl_n += log[i].kl_n;
      mean.inf += log[i].inf;
      mean.adv += log[i].adv;
    }
    double n = static_cast<double>(end - start);
    std::fprintf(stderr,
                 "step %6zu  total %.4f  recon %.4f  kl_p %.4f  kl_n %.4f"
                 "  inf %.4f  adv %.4f\n",
                 end, mean.total / n, mean.reconstruction / n, mean.kl_p / n,
                 mean.kl_n / n, mean.inf / n, mean.adv / n);
  }
}

struct PrepareDataState {
  SynthConfig cfg;
  uint64_t seed = 1;
  int eval_count = 0;
  std::string out, eval_out, vocab_out;
};

void run_prepare_data(const PrepareDataState& s) {
  s.cfg.validate();
  if (s.eval_count < 0 || s.eval_count >= s.cfg.n_instances)
    throw std::runtime_error(
        "--eval-count must lie in [0, instances)");
  std::vector<RawRecord> records = make_synthetic_records(s.cfg, s.seed);

  std::vector<std::string> tokens = {"<pad>", "<unk>", "<s>",
                                     "</s>",  "<sum>", "</sum>"};
  for (std::string& w : synthetic_word_list(s.cfg))
    tokens.push_back(std::move(w));
  Vocab vocab = Vocab::from_tokens(std::move(tokens));

  size_t n_train = records.size() - static_cast<size_t>(s.eval_count);
  std::vector<RawRecord> train(records.begin(),
                               records.begin() + static_cast<long>(n_train));
  write_records(s.out, train);
  if (s.eval_count > 0) {
    std::vector<RawRecord> eval(records.begin() + static_cast<long>(n_train),
                                records.end());
    write_records(s.eval_out, eval);
  }
  vocab.save(s.vocab_out);
  std::fprintf(stderr,
               "wrote %zu train records to %s%s%s; vocab size %d to %s\n",
               n_train, s.out.c_str(),
               s.eval_count > 0 ? ", eval records to " : "",
               s.eval_count > 0 ? s.eval_out.c_str() : "", vocab.size(),
               s.vocab_out.c_str());
}

struct BuildPoolState {
  std::string data, out;
  std::vector<std::string> candidate_files;
};

// One JSON object per line: {"id": ..., "text": ..., "origin": ...}.
std::vector<std::pair<std::string, RawCandidate>> read_candidate_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::vector<std::pair<std::string, RawCandidate>> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               what);
    };
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "id" && key != "text" && key != "origin")
        fail("unknown key \"" + key + "\"");
    }
    for (const char* key : {"id", "text", "origin"}) {
      if (!j.contains(key) || !j[key].is_string())
        fail(std::string("\"") + key + "\" must be a string");
    }
    RawCandidate cand;
    cand.text = j["text"].get<std::string>();
    cand.origin = j["origin"].get<std::string>();
    out.emplace_back(j["id"].get<std::string>(), std::move(cand));
  }
  return out;
}

void run_build_pool(const BuildPoolState& s) {
  std::vector<RawRecord> records = read_records(s.data);
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < records.size(); ++i) index[records[i].id] = i;

  std::vector<std::string> unknown_ids, uncovered_ids;
  std::vector<bool> covered(records.size(), false);
  for (const std::string& path : s.candidate_files) {
    for (auto& [id, cand] : read_candidate_file(path)) {
      auto it = index.find(id);
      if (it == index.end()) {
        unknown_ids.push_back(path + ": " + id);
        continue;
      }
      RawRecord& rec = records[it->second];
      if (rec.gold) {
        cand.oracle_r1 =
            rouge_n(tokenize(cand.text), tokenize(*rec.gold), 1).f1;
      }
      rec.candidates.push_back(std::move(cand));
      covered[it->second] = true;
    }
  }
  if (!unknown_ids.empty()) {
    std::ostringstream msg;
    msg << "candidates for unknown instance ids:";
    for (const std::string& id : unknown_ids) msg << "\n  " << id;
    throw std::runtime_error(msg.str());
  }
  for (size_t i = 0; i < records.size(); ++i)
    if (!covered[i]) uncovered_ids.push_back(records[i].id);
  if (!uncovered_ids.empty()) {
    std::ostringstream msg;
    msg << "instance ids with no candidate in any file:";
    for (const std::string& id : uncovered_ids) msg << "\n  " << id;
    throw std::runtime_error(msg.str());
  }
  write_records(s.out, records);
  std::fprintf(stderr, "wrote %zu records with pools to %s\n", records.size(),
               s.out.c_str());
}

struct AnalyzeState {
  std::string data, vocab, out;
  std::string ks = "1,2,3,4";
};

void run_analyze(const AnalyzeState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> instances = load_instances(s.data, vocab);
  PositiveInfoReport report =
      analyze_positive_info(instances, parse_int_list(s.ks, "--ks"));
  write_text(s.out, format_positive_info_report(report));
}

struct TrainRankerState {
  std::string data, vocab, out;
  ModelConfig model;
  RankerTrainConfig train;
};

void run_train_ranker(const TrainRankerState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> data = load_instances(s.data, vocab);
  ModelConfig cfg = s.model;
  cfg.vocab_size = vocab.size();
  Ranker ranker(cfg, s.train.seed);
  std::vector<double> losses = train_ranker(ranker, data, s.train);
  int interval = s.train.log_interval > 0 ? s.train.log_interval : 1;
  for (size_t start = 0; start < losses.size();
       start += static_cast<size_t>(interval)) {
    size_t end = std::min(losses.size(), start + static_cast<size_t>(interval));
    double mean = 0.0;
    for (size_t i = start; i < end; ++i) mean += losses[i];
    std::fprintf(stderr, "step %6zu  rank loss %.4f\n", end,
                 mean / static_cast<double>(end - start));
  }
  ranker.save(s.out, vocab.content_hash());
  std::fprintf(stderr, "saved ranker checkpoint to %s\n", s.out.c_str());
}

struct RankState {
  std::string data, vocab, ckpt, out;
};

void run_rank(const RankState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> data = load_instances(s.data, vocab);
  std::unique_ptr<Ranker> ranker = Ranker::load(s.ckpt, vocab.content_hash());
  std::vector<ordered_json> lines;
  for (const Instance& inst : data) {
    std::vector<double> probs = ranker->score_pool(inst);
    std::vector<int> order(probs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    });
    ordered_json j;
    j["id"] = inst.id;
    j["order"] = order;
    j["probabilities"] = probs;
    lines.push_back(std::move(j));
  }
  write_jsonl(s.out, lines);
}

struct TrainSummState {
  std::string data, vocab, out, log_path;
  std::string variant = "full";
  ModelConfig model;
  TrainConfig train;
};

void run_train_summ(const TrainSummState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> data = load_instances(s.data, vocab);
  TrainConfig train = s.train;
  train.variant = parse_variant(s.variant);
  ModelConfig cfg = s.model;
  cfg.vocab_size = vocab.size();
  cfg.k = train.k;
  Summarizer model(cfg, train.variant, train.seed);
  std::vector<double> step_ms;
  std::vector<LossBreakdown> log =
      train_summarizer(model, data, train, &step_ms);
  print_loss_progress(log, train.log_interval);
  if (!s.log_path.empty()) {
    std::vector<ordered_json> lines;
    for (size_t i = 0; i < log.size(); ++i) {
      ordered_json j;
      j["step"] = i;
      j["reconstruction"] = log[i].reconstruction;
      j["kl_p"] = log[i].kl_p;
      j["kl_n"] = log[i].kl_n;
      j["inf"] = log[i].inf;
      j["adv"] = log[i].adv;
      j["total"] = log[i].total;
      j["kl_multiplier"] = log[i].kl_multiplier;
      j["wall_ms"] = step_ms[i];
      lines.push_back(std::move(j));
    }
    write_jsonl(s.log_path, lines);
  }
  model.save(s.out, vocab.content_hash());
  std::fprintf(stderr, "saved summarizer checkpoint to %s\n", s.out.c_str());
}

struct GenerateState {
  std::string data, vocab, ckpt, ranker_ckpt, out;
  std::string selection = "oracle";
  BeamConfig beam;
  uint64_t seed = 1;
  int workers = 1;
  bool sample_latents = false;
};

void run_generate(const GenerateState& s) {
  if (s.selection == "predicted" && s.ranker_ckpt.empty())
    throw CLI::RequiredError("--ranker (with --selection predicted)");
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> data = load_instances(s.data, vocab);
  std::unique_ptr<Summarizer> model =
      Summarizer::load(s.ckpt, vocab.content_hash());
  std::unique_ptr<Ranker> ranker;
  if (s.selection == "predicted")
    ranker = Ranker::load(s.ranker_ckpt, vocab.content_hash());
  SelectionMode mode = s.selection == "oracle"      ? SelectionMode::kOracleTop
                       : s.selection == "predicted" ? SelectionMode::kPredicted
                                                    : SelectionMode::kRandom;

  // Selection first (the ranker path mutates its graph workspace), then
  // read-only generation across workers.
  RandomSource select_rng = RandomSource::for_purpose(s.seed, "selection");
  std::vector<std::vector<int>> selected(data.size());
  for (size_t i = 0; i < data.size(); ++i)
    selected[i] = select_candidates(data[i], mode, model->config().k,
                                    ranker.get(), &select_rng);

  std::vector<InferenceResult> results(data.size());
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_text;
  std::mutex error_mutex;
  auto work = [&]() {
    for (size_t i; (i = next.fetch_add(1)) < data.size();) {
      if (failed.load()) return;
      try {
        RandomSource sample_rng = RandomSource::for_purpose(
            s.seed, "inference-latents-" + data[i].id);
        results[i] = generate_with_selection(
            *model, data[i], selected[i], s.beam, vocab,
            s.sample_latents ? &sample_rng : nullptr);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error_text = e.what();
      }
    }
  };
  int workers = std::max(1, s.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error(error_text);

  std::vector<ordered_json> lines;
  for (size_t i = 0; i < data.size(); ++i) {
    ordered_json j;
    j["id"] = data[i].id;
    j["selected"] = results[i].selected;
    j["text"] = results[i].text;
    j["score"] = results[i].generation.score;
    lines.push_back(std::move(j));
  }
  write_jsonl(s.out, lines);
}

struct EvaluateState {
  std::string data, vocab, generated, out, json_out;
};

// Accepts generate's output lines; only "id" and "text" are consumed.
std::vector<std::pair<std::string, std::string>> read_generated(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               what);
    };
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "id" && key != "text" && key != "selected" && key != "score")
        fail("unknown key \"" + key + "\"");
    }
    if (!j.contains("id") || !j["id"].is_string())
      fail("\"id\" must be a string");
    if (!j.contains("text") || !j["text"].is_string())
      fail("\"text\" must be a string");
    out.emplace_back(j["id"].get<std::string>(), j["text"].get<std::string>());
  }
  return out;
}

void run_evaluate(const EvaluateState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> instances = load_instances(s.data, vocab);
  EvalReport report =
      evaluate_generated(instances, read_generated(s.generated));
  write_text(s.out, format_eval_report(report));
  if (!s.json_out.empty()) {
    std::vector<ordered_json> lines;
    for (const InstanceScores& row : report.rows) {
      ordered_json j;
      j["id"] = row.id;
      for (auto [name, score] : {std::pair<const char*, const RougeScore*>(
                                     "r1", &row.r1),
                                 {"r2", &row.r2},
                                 {"rl", &row.rl}}) {
        j[name] = {{"precision", score->precision},
                   {"recall", score->recall},
                   {"f1", score->f1}};
      }
      lines.push_back(std::move(j));
    }
    write_jsonl(s.json_out, lines);
  }
}

struct AblateState {
  std::string train_data, eval_data, vocab, out, json_out;
  std::string variants = "full,no-cand-rank,no-lat-var,no-info-dis";
  std::string base_variant = "full";
  ModelConfig model;
  TrainConfig train;
  BeamConfig beam;
};

void run_ablate(const AblateState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<Instance> train_set = load_instances(s.train_data, vocab);
  std::vector<Instance> eval_set = load_instances(s.eval_data, vocab);
  TrainConfig base = s.train;
  base.variant = parse_variant(s.base_variant);
  ModelConfig cfg = s.model;
  cfg.vocab_size = vocab.size();
  cfg.k = base.k;
  std::vector<AblationRow> rows =
      run_ablation(train_set, eval_set, cfg, base,
                   parse_variant_list(s.variants), s.beam, vocab);
  write_text(s.out, format_ablation_table(rows));
  if (!s.json_out.empty()) {
    std::vector<ordered_json> lines;
    for (const AblationRow& row : rows) {
      ordered_json j;
      j["variant"] = variant_name(row.variant);
      j["r1"] = row.r1;
      j["r2"] = row.r2;
      j["rl"] = row.rl;
      j["parameter_count"] = row.parameter_count;
      j["config_diff"] = row.config_diff;
      lines.push_back(std::move(j));
    }
    write_jsonl(s.json_out, lines);
  }
}

struct ProbeState {
  std::string data, vocab, ckpt, dump_in, dump_out, out;
  ProbeConfig probe;
};

void run_probe(const ProbeState& s) {
  Vocab vocab = load_vocab(s.vocab);
  std::vector<LatentDump> dump;
  if (!s.dump_in.empty()) {
    dump = load_latent_dump(s.dump_in);
  } else {
    if (s.ckpt.empty()) throw CLI::RequiredError("--ckpt (or --dump-in)");
    if (s.data.empty()) throw CLI::RequiredError("--data (or --dump-in)");
    std::unique_ptr<Summarizer> model =
        Summarizer::load(s.ckpt, vocab.content_hash());
    dump = dump_latents(*model, load_instances(s.data, vocab));
  }
  if (!s.dump_out.empty()) {
    save_latent_dump(s.dump_out, dump);
    std::fprintf(stderr, "wrote %zu latent rows to %s\n", dump.size(),
                 s.dump_out.c_str());
  }
  ProbeReport report = probe_disentanglement(dump, vocab.size(), s.probe);
  write_text(s.out, format_probe_report(report));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "candidates-fusion summarization pipeline: generate fixtures, build "
      "candidate pools, train the ranker and the latent-guided summarizer, "
      "generate, evaluate, ablate, and probe latents"};

  auto prep = std::make_shared<PrepareDataState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "prepare-data", "write a synthetic dataset, eval split, and vocab");
    auto binder = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--out", prep->out, "train dataset path")->required();
    cmd->add_option("--vocab-out", prep->vocab_out, "vocabulary path")
        ->required();
    CLI::Option* eval_out =
        cmd->add_option("--eval-out", prep->eval_out, "eval dataset path");
    CLI::Option* eval_count = cmd->add_option(
        "--eval-count", prep->eval_count, "records moved to the eval split");
    eval_out->needs(eval_count);
    eval_count->needs(eval_out);
    binder->bind(cmd, "--instances", "instances", prep->cfg.n_instances,
                 "instance count");
    binder->bind(cmd, "--docs", "docs", prep->cfg.n_docs,
                 "documents per instance");
    binder->bind(cmd, "--topic-words", "topic_words", prep->cfg.topic_words,
                 "topic-set size = gold length");
    binder->bind(cmd, "--candidate-len", "candidate_len",
                 prep->cfg.candidate_len, "content words per candidate");
    binder->bind(cmd, "--candidates", "candidates", prep->cfg.n_candidates,
                 "pool size per instance");
    binder->bind(cmd, "--fillers", "fillers_per_doc", prep->cfg.fillers_per_doc,
                 "filler words per document");
    binder->bind(cmd, "--topic-pool", "topic_pool", prep->cfg.topic_pool,
                 "distinct topic words");
    binder->bind(cmd, "--negative-pool", "negative_pool",
                 prep->cfg.negative_pool, "distinct off-topic words");
    binder->bind(cmd, "--filler-pool", "filler_pool", prep->cfg.filler_pool,
                 "distinct filler words");
    binder->bind_flag(cmd, "--marker,!--no-marker", "marker", prep->cfg.marker,
                      "append rank-marker words to candidates");
    binder->bind(cmd, "--seed", "seed", prep->seed, "random seed");
    cmd->callback([prep, binder]() {
      binder->apply();
      run_prepare_data(*prep);
    });
  }

  auto pool = std::make_shared<BuildPoolState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "build-pool",
        "merge per-candidate files into a dataset, attaching reference "
        "overlap scores where gold is present");
    cmd->add_option("--data", pool->data, "dataset path")->required();
    cmd->add_option("--out", pool->out, "merged dataset path")->required();
    cmd->add_option("--candidates", pool->candidate_files,
                    "candidate file(s), one JSON object per line with id, "
                    "text, origin; pool order follows file order")
        ->required();
    cmd->callback([pool]() { run_build_pool(*pool); });
  }

  auto analyze = std::make_shared<AnalyzeState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "analyze-positive-info",
        "per-origin and top-k mean positive-overlap report");
    cmd->add_option("--data", analyze->data, "dataset path")->required();
    cmd->add_option("--vocab", analyze->vocab, "vocabulary path")->required();
    cmd->add_option("--ks", analyze->ks, "comma-separated top-k list");
    cmd->add_option("--out", analyze->out, "report path (default stdout)");
    cmd->callback([analyze]() { run_analyze(*analyze); });
  }

  auto tr = std::make_shared<TrainRankerState>();
  {
    CLI::App* cmd =
        app.add_subcommand("train-ranker", "train the candidate re-ranker");
    auto binder = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--data", tr->data, "dataset path")->required();
    cmd->add_option("--vocab", tr->vocab, "vocabulary path")->required();
    cmd->add_option("--out", tr->out, "checkpoint path")->required();
    bind_model_flags(cmd, *binder, tr->model);
    binder->bind(cmd, "--steps", "steps", tr->train.steps, "training steps");
    binder->bind(cmd, "--lr", "lr", tr->train.lr, "Adam learning rate");
    binder->bind(cmd, "--clip-norm", "clip_norm", tr->train.clip_norm,
                 "gradient-norm clip (<= 0 disables)");
    binder->bind(cmd, "--seed", "seed", tr->train.seed, "random seed");
    binder->bind(cmd, "--log-interval", "log_interval", tr->train.log_interval,
                 "steps per progress line");
    cmd->callback([tr, binder]() {
      binder->apply();
      run_train_ranker(*tr);
    });
  }

  auto rank = std::make_shared<RankState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "rank", "emit per-instance candidate ordering and probabilities");
    cmd->add_option("--data", rank->data, "dataset path")->required();
    cmd->add_option("--vocab", rank->vocab, "vocabulary path")->required();
    cmd->add_option("--ckpt", rank->ckpt, "ranker checkpoint")->required();
    cmd->add_option("--out", rank->out, "output path (default stdout)");
    cmd->callback([rank]() { run_rank(*rank); });
  }

  auto ts = std::make_shared<TrainSummState>();
  {
    CLI::App* cmd =
        app.add_subcommand("train-summ", "train the fusion summarizer");
    auto binder = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--data", ts->data, "dataset path")->required();
    cmd->add_option("--vocab", ts->vocab, "vocabulary path")->required();
    cmd->add_option("--out", ts->out, "checkpoint path")->required();
    cmd->add_option("--log", ts->log_path,
                    "per-step training log path (JSON lines)");
    bind_model_flags(cmd, *binder, ts->model);
    bind_train_flags(cmd, *binder, ts->train, ts->variant);
    cmd->callback([ts, binder]() {
      binder->apply();
      run_train_summ(*ts);
    });
  }

  auto gen = std::make_shared<GenerateState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "generate", "select candidates and beam-decode summaries");
    auto binder = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--data", gen->data, "dataset path")->required();
    cmd->add_option("--vocab", gen->vocab, "vocabulary path")->required();
    cmd->add_option("--ckpt", gen->ckpt, "summarizer checkpoint")->required();
    cmd->add_option("--ranker", gen->ranker_ckpt,
                    "ranker checkpoint (required for --selection predicted)");
    cmd->add_option("--selection", gen->selection,
                    "oracle | predicted | random")
        ->check(CLI::IsMember({"oracle", "predicted", "random"}));
    cmd->add_option("--out", gen->out, "output path (default stdout)");
    cmd->add_option("--workers", gen->workers, "parallel generation threads")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--sample-latents", gen->sample_latents,
                  "sample candidate latents instead of using prior means");
    bind_beam_flags(cmd, *binder, gen->beam);
    binder->bind(cmd, "--seed", "seed", gen->seed,
                 "seed for random selection and latent sampling");
    cmd->callback([gen, binder]() {
      binder->apply();
      run_generate(*gen);
    });
  }

  auto ev = std::make_shared<EvaluateState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "evaluate", "score generated summaries against gold");
    cmd->add_option("--data", ev->data, "dataset path")->required();
    cmd->add_option("--vocab", ev->vocab, "vocabulary path")->required();
    cmd->add_option("--generated", ev->generated,
                    "generate output path (JSON lines)")
        ->required();
    cmd->add_option("--out", ev->out, "report path (default stdout)");
    cmd->add_option("--json", ev->json_out,
                    "per-instance scores path (JSON lines)");
    cmd->callback([ev]() { run_evaluate(*ev); });
  }

  auto ab = std::make_shared<AblateState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "ablate", "train and evaluate model variants under one config");
    auto binder = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--train-data", ab->train_data, "training dataset path")
        ->required();
    cmd->add_option("--eval-data", ab->eval_data, "evaluation dataset path")
        ->required();
    cmd->add_option("--vocab", ab->vocab, "vocabulary path")->required();
    cmd->add_option("--variants", ab->variants,
                    "comma-separated variant list");
    cmd->add_option("--out", ab->out, "table path (default stdout)");
    cmd->add_option("--json", ab->json_out, "row records path (JSON lines)");
    bind_model_flags(cmd, *binder, ab->model);
    bind_train_flags(cmd, *binder, ab->train, ab->base_variant);
    bind_beam_flags(cmd, *binder, ab->beam);
    cmd->callback([ab, binder]() {
      binder->apply();
      run_ablate(*ab);
    });
  }

  auto pr = std::make_shared<ProbeState>();
  {
    CLI::App* cmd = app.add_subcommand(
        "probe",
        "linear-probe disentanglement of the dual candidate latents");
    auto binder = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--data", pr->data, "dataset path");
    cmd->add_option("--vocab", pr->vocab, "vocabulary path")->required();
    cmd->add_option("--ckpt", pr->ckpt, "summarizer checkpoint");
    cmd->add_option("--dump-in", pr->dump_in,
                    "existing latent dump (skips --data/--ckpt)");
    cmd->add_option("--dump-out", pr->dump_out, "latent dump output path");
    cmd->add_option("--out", pr->out, "report path (default stdout)");
    binder->bind(cmd, "--epochs", "epochs", pr->probe.epochs,
                 "probe training epochs");
    binder->bind(cmd, "--probe-lr", "probe_lr", pr->probe.lr,
                 "probe learning rate");
    binder->bind(cmd, "--holdout", "holdout_fraction",
                 pr->probe.holdout_fraction, "held-out instance-id fraction");
    binder->bind(cmd, "--permutations", "permutations", pr->probe.permutations,
                 "latent-swap permutation count (0 skips)");
    binder->bind(cmd, "--seed", "seed", pr->probe.seed, "probe seed");
    cmd->callback([pr, binder]() {
      binder->apply();
      run_probe(*pr);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << "a subcommand is required\n" << app.help();
    return 2;
  }
  return 0;
}
