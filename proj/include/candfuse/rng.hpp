#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>

namespace candfuse {

using Mat = Eigen::MatrixXd;

uint64_t fnv1a64(std::string_view s);

// Deterministic random source. All sampling paths are hand-rolled on top of
// mt19937_64 so that a (seed, purpose) pair produces the same stream on any
// platform.
class RandomSource {
 public:
  explicit RandomSource(uint64_t seed);

  // One generator per (seed, purpose) pair; purposes never collide with each
  // other or with the raw seed stream.
  static RandomSource for_purpose(uint64_t seed, std::string_view purpose);

  uint64_t next_u64();
  double uniform01();                   // [0, 1)
  double gaussian();                    // N(0, 1), Box-Muller
  int uniform_int(int lo, int hi);      // inclusive bounds
  Mat gaussian_matrix(int rows, int cols);

  // Derive an independent child stream.
  RandomSource fork(std::string_view purpose);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace candfuse
