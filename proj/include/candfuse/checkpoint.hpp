#pragma once

// Versioned binary checkpoints: a JSON header describing kind, config echo,
// vocabulary hash, and shape-declared parameter arrays, followed by raw
// little-endian float64 payloads. Writes are atomic (temp file + rename).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "candfuse/graph.hpp"

namespace candfuse {

struct CheckpointHeader {
  int format_version = 1;
  std::string kind;  // e.g. "ranker", "summarizer"
  uint64_t vocab_hash = 0;
  std::map<std::string, std::string> config;
};

struct LoadedCheckpoint {
  CheckpointHeader header;
  std::vector<std::pair<std::string, Mat>> arrays;  // in stored order

  const Mat* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const ad::ParamStore& store);

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies arrays into an existing store; every store parameter must be
// present with matching shape (and vice versa).
void restore_params(const LoadedCheckpoint& ckpt, ad::ParamStore& store);

}  // namespace candfuse
