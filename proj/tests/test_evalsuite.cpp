#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "candfuse/evalsuite.hpp"
#include "candfuse/synth.hpp"

using namespace candfuse;

namespace {

Instance gold_instance(const std::string& id, const std::string& gold_text) {
  Instance inst;
  inst.id = id;
  Document gold;
  gold.raw_text = gold_text;
  gold.words = tokenize(gold_text);
  inst.gold = gold;
  return inst;
}

std::vector<Instance> tiny_synth(int count, uint64_t seed, Vocab* out_vocab) {
  SynthConfig synth;
  synth.n_instances = count;
  synth.n_docs = 2;
  synth.topic_words = 3;
  synth.candidate_len = 4;
  synth.n_candidates = 4;
  synth.fillers_per_doc = 2;
  synth.topic_pool = 10;
  synth.negative_pool = 10;
  synth.filler_pool = 6;
  auto records = make_synthetic_records(synth, seed);
  Vocab vocab = build_vocab(records, 200);
  std::vector<Instance> data;
  LoadOptions opts;
  for (size_t r = 0; r < records.size(); ++r)
    data.push_back(make_instance(records[r], vocab, opts, r + 1));
  if (out_vocab) *out_vocab = vocab;
  return data;
}

ModelConfig micro_config(int vocab_size) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 16;
  cfg.d_latent = 4;
  cfg.vocab_size = vocab_size;
  cfg.max_positions = 64;
  cfg.k = 2;
  return cfg;
}

// Entries whose latents literally one-hot encode their token sets; positive
// ids live in [0, 10), negative ids in [10, 20).
std::vector<LatentDump> oracle_dump(int n_instances, int per_instance,
                                    uint64_t seed) {
  auto rng = RandomSource::for_purpose(seed, "oracle-dump");
  std::vector<LatentDump> dump;
  for (int i = 0; i < n_instances; ++i) {
    for (int c = 0; c < per_instance; ++c) {
      LatentDump entry;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "inst%03d", i);
      entry.instance_id = buf;
      entry.candidate_index = c;
      entry.z_pos = Eigen::RowVectorXd::Zero(20);
      entry.z_neg = Eigen::RowVectorXd::Zero(20);
      std::set<int> pos, neg;
      while (static_cast<int>(pos.size()) < 3)
        pos.insert(rng.uniform_int(0, 9));
      while (static_cast<int>(neg.size()) < 3)
        neg.insert(rng.uniform_int(10, 19));
      for (int id : pos) {
        entry.positive_ids.push_back(id);
        entry.z_pos(id) = 1.0;
      }
      for (int id : neg) {
        entry.negative_ids.push_back(id);
        entry.z_neg(id) = 1.0;
      }
      dump.push_back(std::move(entry));
    }
  }
  return dump;
}

std::vector<LatentDump> noise_dump(int n_instances, int per_instance,
                                   uint64_t seed) {
  std::vector<LatentDump> dump = oracle_dump(n_instances, per_instance, seed);
  auto rng = RandomSource::for_purpose(seed + 1, "noise-dump");
  for (LatentDump& entry : dump) {
    entry.z_pos = rng.gaussian_matrix(1, 20).row(0);
    entry.z_neg = rng.gaussian_matrix(1, 20).row(0);
  }
  return dump;
}

}  // namespace

TEST_CASE("evaluate_generated scores outputs against gold") {
  std::vector<Instance> instances = {gold_instance("a", "red fox runs fast"),
                                     gold_instance("b", "blue bird sings")};
  std::vector<std::pair<std::string, std::string>> outputs = {
      {"a", "red fox runs fast"}, {"b", "blue bird naps"}};
  EvalReport report = evaluate_generated(instances, outputs);
  REQUIRE(report.rows.size() == 2);

  CHECK(report.rows[0].r1.f1 == doctest::Approx(1.0));
  CHECK(report.rows[0].r2.f1 == doctest::Approx(1.0));
  CHECK(report.rows[0].rl.f1 == doctest::Approx(1.0));

  RougeScore expect_r1 =
      rouge_n(tokenize("blue bird naps"), tokenize("blue bird sings"), 1);
  RougeScore expect_r2 =
      rouge_n(tokenize("blue bird naps"), tokenize("blue bird sings"), 2);
  RougeScore expect_rl =
      rouge_l(tokenize("blue bird naps"), tokenize("blue bird sings"));
  CHECK(report.rows[1].r1.f1 == doctest::Approx(expect_r1.f1));
  CHECK(report.rows[1].r2.f1 == doctest::Approx(expect_r2.f1));
  CHECK(report.rows[1].rl.f1 == doctest::Approx(expect_rl.f1));

  CHECK(report.mean_r1 ==
        doctest::Approx(0.5 * (1.0 + expect_r1.f1)));
  CHECK(report.mean_rl ==
        doctest::Approx(0.5 * (1.0 + expect_rl.f1)));

  std::string table = format_eval_report(report);
  CHECK(table.find("mean") != std::string::npos);
  CHECK(table.find("a\t") != std::string::npos);

  CHECK_THROWS_AS(evaluate_generated(instances, {{"zzz", "text"}}),
                  std::invalid_argument);
  Instance no_gold;
  no_gold.id = "c";
  CHECK_THROWS_AS(evaluate_generated({no_gold}, {{"c", "text"}}),
                  std::invalid_argument);
}

TEST_CASE("config map serializes every training knob") {
  TrainConfig cfg;
  cfg.variant = Variant::kNoLatVar;
  auto m = to_config_map(cfg);
  CHECK(m.at("variant") == "no-lat-var");
  CHECK(m.at("k") == "3");
  CHECK(m.count("lambda") == 1);
  CHECK(m.count("beta") == 1);
  CHECK(m.count("anneal_steps") == 1);
  CHECK(m.count("steps") == 1);
  CHECK(m.count("lr") == 1);
  CHECK(m.count("seed") == 1);

  TrainConfig other = cfg;
  other.variant = Variant::kFull;
  auto m2 = to_config_map(other);
  int diffs = 0;
  for (const auto& [key, value] : m)
    if (m2.at(key) != value) ++diffs;
  CHECK(diffs == 1);
}

TEST_CASE("ablation harness trains each variant under one config switch") {
  Vocab vocab;
  std::vector<Instance> data = tiny_synth(5, 201, &vocab);
  std::vector<Instance> train(data.begin(), data.begin() + 3);
  std::vector<Instance> eval(data.begin() + 3, data.end());

  ModelConfig mcfg = micro_config(vocab.size());
  TrainConfig base;
  base.k = 2;
  base.steps = 4;
  base.anneal_steps = 4;
  base.seed = 9;
  BeamConfig beam;
  beam.beam_size = 2;
  beam.min_len = 1;
  beam.max_len = 6;

  std::vector<Variant> variants = {Variant::kFull, Variant::kNoInfoDis,
                                   Variant::kNoLatVar};
  std::vector<AblationRow> rows =
      run_ablation(train, eval, mcfg, base, variants, beam, vocab);
  REQUIRE(rows.size() == 3);

  CHECK(rows[0].variant == Variant::kFull);
  CHECK(rows[0].config_diff.empty());  // base variant, nothing changed
  CHECK(rows[1].config_diff == std::vector<std::string>{"variant"});
  CHECK(rows[2].config_diff == std::vector<std::string>{"variant"});

  CHECK(rows[2].parameter_count < rows[1].parameter_count);
  CHECK(rows[1].parameter_count < rows[0].parameter_count);

  for (const AblationRow& row : rows) {
    CHECK(row.r1 >= 0.0);
    CHECK(row.r1 <= 1.0);
    CHECK(row.rl >= 0.0);
    CHECK(row.rl <= 1.0);
  }

  // Same inputs, same table.
  std::vector<AblationRow> again =
      run_ablation(train, eval, mcfg, base, variants, beam, vocab);
  CHECK(format_ablation_table(rows) == format_ablation_table(again));

  std::vector<AblationRow> single =
      run_ablation(train, eval, mcfg, base, {Variant::kFull}, beam, vocab);
  CHECK(single.size() == 1);

  std::string table = format_ablation_table(rows);
  CHECK(table.find("no-lat-var") != std::string::npos);
  CHECK(table.find("full") != std::string::npos);
}

TEST_CASE("latent dumps cover the oracle top-k of every instance") {
  Vocab vocab;
  std::vector<Instance> data = tiny_synth(4, 203, &vocab);
  ModelConfig mcfg = micro_config(vocab.size());
  Summarizer model(mcfg, Variant::kFull, 11);

  std::vector<LatentDump> dump = dump_latents(model, data);
  REQUIRE(dump.size() == data.size() * 2);  // k = 2
  for (size_t i = 0; i < dump.size(); ++i) {
    const LatentDump& entry = dump[i];
    CHECK(entry.z_pos.size() == mcfg.d_latent);
    CHECK(entry.z_neg.size() == mcfg.d_latent);
    CHECK(entry.candidate_index >= 0);
    CHECK(entry.candidate_index < 4);
    for (int id : entry.positive_ids) {
      CHECK(id >= Vocab::kNumSpecial);
      CHECK(id < vocab.size());
    }
  }
  // Deterministic: posterior means carry no sampling noise.
  std::vector<LatentDump> again = dump_latents(model, data);
  for (size_t i = 0; i < dump.size(); ++i) {
    CHECK(dump[i].z_pos == again[i].z_pos);
    CHECK(dump[i].z_neg == again[i].z_neg);
  }

  Summarizer plain(mcfg, Variant::kNoLatVar, 11);
  CHECK_THROWS_AS(dump_latents(plain, data), std::invalid_argument);
  Summarizer single(mcfg, Variant::kNoInfoDis, 11);
  CHECK_THROWS_AS(dump_latents(single, data), std::invalid_argument);

  std::vector<Instance> no_gold = data;
  no_gold[0].gold.reset();
  CHECK_THROWS_AS(dump_latents(model, no_gold), std::invalid_argument);
}

TEST_CASE("probes separate oracle latents with a significant margin") {
  std::vector<LatentDump> dump = oracle_dump(40, 2, 301);
  ProbeConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 0.05;
  cfg.permutations = 49;
  ProbeReport report = probe_disentanglement(dump, 20, cfg);

  CHECK(report.zp_to_pos >= 0.95);
  CHECK(report.zn_to_neg >= 0.95);
  CHECK(report.zp_to_neg < 0.6);
  CHECK(report.zn_to_pos < 0.6);
  CHECK(report.margin > 0.5);
  CHECK(report.p_value < 0.05);
  CHECK(report.train_entries + report.eval_entries ==
        static_cast<int>(dump.size()));
  CHECK(report.train_entries > 0);
  CHECK(report.eval_entries > 0);

  std::string text = format_probe_report(report);
  CHECK(text.find("margin") != std::string::npos);
  CHECK(text.find("p-value") != std::string::npos);
}

TEST_CASE("probes find nothing in pure-noise latents") {
  std::vector<LatentDump> dump = noise_dump(10, 2, 313);
  ProbeConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 0.1;
  cfg.permutations = 19;
  ProbeReport report = probe_disentanglement(dump, 20, cfg);
  CHECK(std::abs(report.margin) < 0.25);
  CHECK(report.p_value > 0.05);
}

TEST_CASE("probe input validation") {
  ProbeConfig cfg;
  cfg.permutations = 0;
  CHECK_THROWS_AS(probe_disentanglement({}, 20, cfg), std::invalid_argument);

  std::vector<LatentDump> dump = oracle_dump(4, 1, 305);
  dump[1].z_neg = Eigen::RowVectorXd::Zero(7);
  CHECK_THROWS_AS(probe_disentanglement(dump, 20, cfg), std::invalid_argument);

  dump = oracle_dump(4, 1, 307);
  dump[0].positive_ids.push_back(99);
  CHECK_THROWS_AS(probe_disentanglement(dump, 20, cfg), std::invalid_argument);

  dump = oracle_dump(1, 3, 309);  // one instance id cannot be split
  CHECK_THROWS_AS(probe_disentanglement(dump, 20, cfg), std::invalid_argument);

  dump = oracle_dump(4, 1, 311);
  ProbeConfig bad = cfg;
  bad.holdout_fraction = 0.0;
  CHECK_THROWS_AS(probe_disentanglement(dump, 20, bad), std::invalid_argument);

  // Skipped permutation test reports p = 1.
  ProbeReport report = probe_disentanglement(dump, 20, cfg);
  CHECK(report.p_value == 1.0);
}
