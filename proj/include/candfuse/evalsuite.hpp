#pragma once

// End-to-end evaluation: ROUGE tables over generated outputs, the ablation
// harness (one config switch per variant), posterior-latent dumps, and
// linear-probe disentanglement measurement with a permutation test.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "candfuse/corpus.hpp"
#include "candfuse/metrics.hpp"
#include "candfuse/training.hpp"

namespace candfuse {

struct InstanceScores {
  std::string id;
  RougeScore r1, r2, rl;
};

struct EvalReport {
  std::vector<InstanceScores> rows;
  double mean_r1 = 0.0;  // mean F1 over rows
  double mean_r2 = 0.0;
  double mean_rl = 0.0;
};

// Scores each (id, generated text) pair against its instance's gold summary
// on raw word tokens. Unknown ids or missing gold are errors.
EvalReport evaluate_generated(
    const std::vector<Instance>& instances,
    const std::vector<std::pair<std::string, std::string>>& outputs);

std::string format_eval_report(const EvalReport& report);

struct AblationRow {
  Variant variant = Variant::kFull;
  double r1 = 0.0, r2 = 0.0, rl = 0.0;  // mean F1, oracle selection
  size_t parameter_count = 0;
  // Keys of the training config that differ from the base config; the
  // harness guarantees exactly {"variant"}.
  std::vector<std::string> config_diff;
};

// Trains and evaluates each variant under the base config and seed,
// changing only the variant key.
std::vector<AblationRow> run_ablation(const std::vector<Instance>& train_set,
                                      const std::vector<Instance>& eval_set,
                                      const ModelConfig& model_cfg,
                                      const TrainConfig& base,
                                      const std::vector<Variant>& variants,
                                      const BeamConfig& beam,
                                      const Vocab& vocab);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

// Serialized TrainConfig for config-diff audits and logs.
std::map<std::string, std::string> to_config_map(const TrainConfig& cfg);

// Posterior-mean latents of the oracle top-k candidates plus their
// positive/negative token-id sets.
struct LatentDump {
  std::string instance_id;
  int candidate_index = -1;
  Eigen::RowVectorXd z_pos, z_neg;
  std::vector<int> positive_ids, negative_ids;
};

// Requires the dual-latent layout and gold on every instance.
std::vector<LatentDump> dump_latents(const Summarizer& model,
                                     const std::vector<Instance>& instances);

// Little-endian binary array file holding a latent dump; load validates
// the magic, version, and declared lengths.
void save_latent_dump(const std::string& path,
                      const std::vector<LatentDump>& dump);
std::vector<LatentDump> load_latent_dump(const std::string& path);

struct ProbeConfig {
  int epochs = 150;
  double lr = 0.05;
  double holdout_fraction = 0.5;  // of instance ids, not entries
  int permutations = 99;          // 0 skips the permutation test
  uint64_t seed = 7;
};

struct ProbeReport {
  double zp_to_pos = 0.0;  // held-out top-|set| retrieval accuracies
  double zp_to_neg = 0.0;
  double zn_to_neg = 0.0;
  double zn_to_pos = 0.0;
  double margin = 0.0;   // mean on-target minus mean off-target accuracy
  double p_value = 1.0;  // latent-swap permutation test; 1.0 when skipped
  int train_entries = 0;
  int eval_entries = 0;
};

// Fits fresh linear probes (latent -> vocabulary softmax) on a train split
// of instance ids and reports held-out retrieval accuracy for each
// latent/target pairing. The permutation test refits under random per-entry
// swaps of (z_pos, z_neg).
ProbeReport probe_disentanglement(const std::vector<LatentDump>& dump,
                                  int vocab_size, const ProbeConfig& cfg);

std::string format_probe_report(const ProbeReport& report);

}  // namespace candfuse
