#pragma once

// Tape-based reverse-mode automatic differentiation over Eigen matrices.
// A Graph is rebuilt per training step (dynamic-graph style); parameters
// live in a ParamStore that outlives graphs and accumulates gradients.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "candfuse/rng.hpp"

namespace candfuse::ad {

using candfuse::Mat;

struct ParamRef {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Named parameter arrays with gradient and Adam moment buffers.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
    Mat m;  // Adam first moment
    Mat v;  // Adam second moment
  };

  // init_scale < 0 selects Xavier-normal from the dims; 0 gives zeros;
  // > 0 gives N(0, init_scale^2).
  ParamRef add(const std::string& name, int rows, int cols, double init_scale,
               RandomSource* rng);
  ParamRef find(const std::string& name) const;  // invalid ref if absent

  Entry& entry(ParamRef p) { return entries_.at(p.index); }
  const Entry& entry(ParamRef p) const { return entries_.at(p.index); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads();
  double grad_norm() const;
  size_t parameter_count() const;  // total scalar count

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> by_name_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamStore& store);
  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  explicit Graph(ParamStore* store = nullptr) : store_(store) {}

  Var input(Mat value);
  Var scalar(double value);
  Var param(ParamRef p);         // trainable leaf
  Var param_frozen(ParamRef p);  // value only, no gradient path

  Var add(Var a, Var b);
  Var add_row_broadcast(Var a, Var row);  // row is 1 x cols(a)
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var mul(Var a, Var b);  // elementwise
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var concat_cols(const std::vector<Var>& xs);
  Var concat_rows(const std::vector<Var>& xs);
  Var slice_rows(Var a, int r0, int n);
  Var slice_cols(Var a, int c0, int n);
  Var row(Var a, int r) { return slice_rows(a, r, 1); }
  Var mean_rows(Var a);  // 1 x c column means
  Var sum(Var a);        // 1 x 1
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);
  Var softmax_rows(Var a);
  Var dropout(Var a, double rate, RandomSource& rng);
  Var embed(ParamRef table, const std::vector<int>& ids);
  Var detach(Var a);
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

  // Mean over unmasked rows of -log softmax(logits)[target]; 1 x 1.
  Var cross_entropy_rows(Var logits, const std::vector<int>& targets,
                         const std::vector<uint8_t>& keep);
  // -sum_j target_j * log softmax(logits)_j for a single 1 x V row; 1 x 1.
  Var cross_entropy_dist(Var logits, const Mat& target);
  // Entropy of softmax(logits) for a single 1 x V row; 1 x 1.
  Var entropy_softmax(Var logits);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;  // valid after backward
  void backward(Var loss);       // loss must be 1 x 1
  int size() const { return static_cast<int>(nodes_.size()); }
  ParamStore* store() const { return store_; }

 private:
  enum class Op : uint8_t {
    kInput,
    kParam,
    kParamFrozen,
    kAdd,
    kAddRow,
    kSub,
    kNeg,
    kScale,
    kAddScalar,
    kMul,
    kMatMul,
    kTranspose,
    kConcatCols,
    kConcatRows,
    kSliceRows,
    kSliceCols,
    kMeanRows,
    kSum,
    kRelu,
    kTanh,
    kSigmoid,
    kExp,
    kLog,
    kSquare,
    kClamp,
    kSoftmaxRows,
    kDropout,
    kEmbed,
    kDetach,
    kLayerNorm,
    kCeRows,
    kCeDist,
    kEntropy,
  };

  struct Node {
    Op op;
    std::vector<int> parents;
    Mat value;
    Mat grad;
    bool needs_grad = false;
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0, i1 = 0;
    std::vector<int> ids;
    std::vector<uint8_t> keep;
    Mat aux;   // op-specific saved state (softmax, dropout mask, xhat, ...)
    Mat aux2;  // secondary saved state (inv_std, ...)
  };

  Var push(Node n);
  Node& at(Var v) { return nodes_.at(v.id); }
  const Node& at(Var v) const { return nodes_.at(v.id); }
  void accum(int id, const Mat& g);
  void backward_node(int id);

  ParamStore* store_;
  std::vector<Node> nodes_;
};

// Convenience: closed-form KL(q || p) between diagonal Gaussians given as
// (mu, log variance) row vectors, summed over dimensions. Built from graph
// primitives so its gradients follow from theirs.
Var gaussian_kl(Graph& g, Var mu_q, Var logvar_q, Var mu_p, Var logvar_p);

}  // namespace candfuse::ad
