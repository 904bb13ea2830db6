#include "candfuse/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace candfuse::ad {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("graph: " + what);
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
         std::to_string(b.cols()));
}

Mat softmax_rows_value(const Mat& z) {
  Mat p(z.rows(), z.cols());
  for (int i = 0; i < z.rows(); ++i) {
    double m = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - m).exp().matrix();
    p.row(i) = e / e.sum();
  }
  return p;
}

}  // namespace

ParamRef ParamStore::add(const std::string& name, int rows, int cols,
                         double init_scale, RandomSource* rng) {
  if (by_name_.count(name)) fail("duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  if (init_scale == 0.0) {
    e.value = Mat::Zero(rows, cols);
  } else {
    if (!rng) fail("parameter " + name + " needs a random source");
    double scale = init_scale;
    if (scale < 0.0) scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    e.value = scale * rng->gaussian_matrix(rows, cols);
  }
  e.grad = Mat::Zero(rows, cols);
  e.m = Mat::Zero(rows, cols);
  e.v = Mat::Zero(rows, cols);
  entries_.push_back(std::move(e));
  int idx = static_cast<int>(entries_.size()) - 1;
  by_name_[name] = idx;
  return ParamRef{idx};
}

ParamRef ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return ParamRef{};
  return ParamRef{it->second};
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.setZero();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.grad.squaredNorm();
  return std::sqrt(s);
}

size_t ParamStore::parameter_count() const {
  size_t n = 0;
  for (const auto& e : entries_) n += static_cast<size_t>(e.value.size());
  return n;
}

void AdamOptimizer::step(ParamStore& store) {
  ++t_;
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double norm = store.grad_norm();
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& e : store.entries()) {
    Mat g = e.grad * scale;
    e.m = cfg_.beta1 * e.m + (1.0 - cfg_.beta1) * g;
    e.v = cfg_.beta2 * e.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat mhat = e.m / bc1;
    Mat vhat = e.v / bc2;
    e.value.array() -=
        cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
  }
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Mat value) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::scalar(double value) {
  Mat m(1, 1);
  m(0, 0) = value;
  return input(std::move(m));
}

Var Graph::param(ParamRef p) {
  if (!store_) fail("param on a graph without a store");
  Node n;
  n.op = Op::kParam;
  n.i0 = p.index;
  n.value = store_->entry(p).value;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::param_frozen(ParamRef p) {
  if (!store_) fail("param_frozen on a graph without a store");
  Node n;
  n.op = Op::kParamFrozen;
  n.i0 = p.index;
  n.value = store_->entry(p).value;
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  check_same_shape(at(a).value, at(b).value, "add");
  Node n;
  n.op = Op::kAdd;
  n.parents = {a.id, b.id};
  n.value = at(a).value + at(b).value;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Var Graph::add_row_broadcast(Var a, Var rowv) {
  const Mat& av = at(a).value;
  const Mat& rv = at(rowv).value;
  if (rv.rows() != 1 || rv.cols() != av.cols())
    fail("add_row_broadcast: row must be 1 x cols(a)");
  Node n;
  n.op = Op::kAddRow;
  n.parents = {a.id, rowv.id};
  n.value = av.rowwise() + rv.row(0);
  n.needs_grad = at(a).needs_grad || at(rowv).needs_grad;
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  check_same_shape(at(a).value, at(b).value, "sub");
  Node n;
  n.op = Op::kSub;
  n.parents = {a.id, b.id};
  n.value = at(a).value - at(b).value;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Var Graph::neg(Var a) {
  Node n;
  n.op = Op::kNeg;
  n.parents = {a.id};
  n.value = -at(a).value;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.parents = {a.id};
  n.c0 = c;
  n.value = c * at(a).value;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::add_scalar(Var a, double c) {
  Node n;
  n.op = Op::kAddScalar;
  n.parents = {a.id};
  n.c0 = c;
  n.value = (at(a).value.array() + c).matrix();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  check_same_shape(at(a).value, at(b).value, "mul");
  Node n;
  n.op = Op::kMul;
  n.parents = {a.id, b.id};
  n.value = at(a).value.cwiseProduct(at(b).value);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Mat& av = at(a).value;
  const Mat& bv = at(b).value;
  if (av.cols() != bv.rows())
    fail("matmul: inner dimensions " + std::to_string(av.cols()) + " vs " +
         std::to_string(bv.rows()));
  Node n;
  n.op = Op::kMatMul;
  n.parents = {a.id, b.id};
  n.value = av * bv;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  Node n;
  n.op = Op::kTranspose;
  n.parents = {a.id};
  n.value = at(a).value.transpose();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) fail("concat_cols: empty list");
  long rows = at(xs[0]).value.rows();
  long cols = 0;
  bool ng = false;
  for (Var x : xs) {
    if (at(x).value.rows() != rows) fail("concat_cols: row mismatch");
    cols += at(x).value.cols();
    ng = ng || at(x).needs_grad;
  }
  Node n;
  n.op = Op::kConcatCols;
  n.value.resize(rows, cols);
  long off = 0;
  for (Var x : xs) {
    n.parents.push_back(x.id);
    long c = at(x).value.cols();
    n.value.block(0, off, rows, c) = at(x).value;
    off += c;
  }
  n.needs_grad = ng;
  return push(std::move(n));
}

Var Graph::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) fail("concat_rows: empty list");
  long cols = at(xs[0]).value.cols();
  long rows = 0;
  bool ng = false;
  for (Var x : xs) {
    if (at(x).value.cols() != cols) fail("concat_rows: column mismatch");
    rows += at(x).value.rows();
    ng = ng || at(x).needs_grad;
  }
  Node n;
  n.op = Op::kConcatRows;
  n.value.resize(rows, cols);
  long off = 0;
  for (Var x : xs) {
    n.parents.push_back(x.id);
    long r = at(x).value.rows();
    n.value.block(off, 0, r, cols) = at(x).value;
    off += r;
  }
  n.needs_grad = ng;
  return push(std::move(n));
}

Var Graph::slice_rows(Var a, int r0, int nrows) {
  const Mat& av = at(a).value;
  if (r0 < 0 || nrows < 0 || r0 + nrows > av.rows()) fail("slice_rows: out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.parents = {a.id};
  n.i0 = r0;
  n.i1 = nrows;
  n.value = av.middleRows(r0, nrows);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, int c0, int ncols) {
  const Mat& av = at(a).value;
  if (c0 < 0 || ncols < 0 || c0 + ncols > av.cols()) fail("slice_cols: out of range");
  Node n;
  n.op = Op::kSliceCols;
  n.parents = {a.id};
  n.i0 = c0;
  n.i1 = ncols;
  n.value = av.middleCols(c0, ncols);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::mean_rows(Var a) {
  Node n;
  n.op = Op::kMeanRows;
  n.parents = {a.id};
  n.value = at(a).value.colwise().mean();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.parents = {a.id};
  n.value = Mat::Constant(1, 1, at(a).value.sum());
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.parents = {a.id};
  n.value = at(a).value.cwiseMax(0.0);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.parents = {a.id};
  n.value = at(a).value.array().tanh().matrix();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.parents = {a.id};
  n.value = (1.0 / (1.0 + (-at(a).value.array()).exp())).matrix();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::exp(Var a) {
  Node n;
  n.op = Op::kExp;
  n.parents = {a.id};
  n.value = at(a).value.array().exp().matrix();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::log(Var a) {
  Node n;
  n.op = Op::kLog;
  n.parents = {a.id};
  n.value = at(a).value.array().log().matrix();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::square(Var a) {
  Node n;
  n.op = Op::kSquare;
  n.parents = {a.id};
  n.value = at(a).value.array().square().matrix();
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.parents = {a.id};
  n.c0 = lo;
  n.c1 = hi;
  n.value = at(a).value.cwiseMax(lo).cwiseMin(hi);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::softmax_rows(Var a) {
  Node n;
  n.op = Op::kSoftmaxRows;
  n.parents = {a.id};
  n.value = softmax_rows_value(at(a).value);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::dropout(Var a, double rate, RandomSource& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) fail("dropout: rate must be < 1");
  const Mat& av = at(a).value;
  Node n;
  n.op = Op::kDropout;
  n.parents = {a.id};
  n.aux.resize(av.rows(), av.cols());
  double keep_scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j)
      n.aux(i, j) = rng.uniform01() < rate ? 0.0 : keep_scale;
  n.value = av.cwiseProduct(n.aux);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Var Graph::embed(ParamRef table, const std::vector<int>& ids) {
  if (!store_) fail("embed on a graph without a store");
  const Mat& t = store_->entry(table).value;
  Node n;
  n.op = Op::kEmbed;
  n.i0 = table.index;
  n.ids = ids;
  n.value.resize(static_cast<long>(ids.size()), t.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) fail("embed: id out of range");
    n.value.row(static_cast<long>(i)) = t.row(ids[i]);
  }
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::detach(Var a) {
  Node n;
  n.op = Op::kDetach;
  n.parents = {a.id};
  n.value = at(a).value;
  n.needs_grad = false;
  return push(std::move(n));
}

Var Graph::layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Mat& av = at(a).value;
  const Mat& gv = at(gamma).value;
  const Mat& bv = at(beta).value;
  if (gv.rows() != 1 || gv.cols() != av.cols() || bv.rows() != 1 ||
      bv.cols() != av.cols())
    fail("layer_norm: gamma/beta must be 1 x cols(a)");
  Node n;
  n.op = Op::kLayerNorm;
  n.parents = {a.id, gamma.id, beta.id};
  long r = av.rows(), c = av.cols();
  n.aux.resize(r, c);   // xhat
  n.aux2.resize(r, 1);  // inv std
  n.value.resize(r, c);
  for (long i = 0; i < r; ++i) {
    double mean = av.row(i).mean();
    double var = (av.row(i).array() - mean).square().mean();
    double inv = 1.0 / std::sqrt(var + eps);
    n.aux2(i, 0) = inv;
    n.aux.row(i) = ((av.row(i).array() - mean) * inv).matrix();
    n.value.row(i) =
        ((n.aux.row(i).array() * gv.row(0).array()) + bv.row(0).array()).matrix();
  }
  n.needs_grad =
      at(a).needs_grad || at(gamma).needs_grad || at(beta).needs_grad;
  return push(std::move(n));
}

Var Graph::cross_entropy_rows(Var logits, const std::vector<int>& targets,
                              const std::vector<uint8_t>& keep) {
  const Mat& z = at(logits).value;
  if (static_cast<long>(targets.size()) != z.rows() ||
      keep.size() != targets.size())
    fail("cross_entropy_rows: targets/keep must match logits rows");
  Node n;
  n.op = Op::kCeRows;
  n.parents = {logits.id};
  n.ids = targets;
  n.keep = keep;
  n.aux = softmax_rows_value(z);
  double total = 0.0;
  int kept = 0;
  for (long i = 0; i < z.rows(); ++i) {
    if (!keep[static_cast<size_t>(i)]) continue;
    int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= z.cols()) fail("cross_entropy_rows: target out of range");
    double m = z.row(i).maxCoeff();
    double lse = m + std::log((z.row(i).array() - m).exp().sum());
    total += lse - z(i, t);
    ++kept;
  }
  n.i0 = kept;
  n.value = Mat::Constant(1, 1, kept > 0 ? total / kept : 0.0);
  n.needs_grad = at(logits).needs_grad && kept > 0;
  return push(std::move(n));
}

Var Graph::cross_entropy_dist(Var logits, const Mat& target) {
  const Mat& z = at(logits).value;
  if (z.rows() != 1 || target.rows() != 1 || target.cols() != z.cols())
    fail("cross_entropy_dist: logits and target must be 1 x V");
  Node n;
  n.op = Op::kCeDist;
  n.parents = {logits.id};
  n.aux = softmax_rows_value(z);
  n.aux2 = target;
  double m = z.row(0).maxCoeff();
  double lse = m + std::log((z.row(0).array() - m).exp().sum());
  double loss = 0.0;
  for (long j = 0; j < z.cols(); ++j)
    if (target(0, j) != 0.0) loss += target(0, j) * (lse - z(0, j));
  n.value = Mat::Constant(1, 1, loss);
  n.needs_grad = at(logits).needs_grad;
  return push(std::move(n));
}

Var Graph::entropy_softmax(Var logits) {
  const Mat& z = at(logits).value;
  if (z.rows() != 1) fail("entropy_softmax: logits must be 1 x V");
  Node n;
  n.op = Op::kEntropy;
  n.parents = {logits.id};
  n.aux = softmax_rows_value(z);
  double h = 0.0;
  for (long j = 0; j < z.cols(); ++j) {
    double p = n.aux(0, j);
    if (p > 0.0) h -= p * std::log(p);
  }
  n.value = Mat::Constant(1, 1, h);
  n.needs_grad = at(logits).needs_grad;
  return push(std::move(n));
}

const Mat& Graph::value(Var v) const { return at(v).value; }

const Mat& Graph::grad(Var v) const {
  static const Mat kEmpty;
  const Node& n = at(v);
  return n.grad.size() > 0 ? n.grad : kEmpty;
}

void Graph::accum(int id, const Mat& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.needs_grad && n.op != Op::kParam && n.op != Op::kEmbed) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
}

void Graph::backward(Var loss) {
  Node& ln = at(loss);
  if (ln.value.rows() != 1 || ln.value.cols() != 1)
    fail("backward: loss must be 1 x 1");
  if (!ln.needs_grad) return;
  ln.grad = Mat::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0 || !n.needs_grad) continue;
    backward_node(id);
  }
}

void Graph::backward_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Mat& g = n.grad;
  auto parent_value = [&](int slot) -> const Mat& {
    return nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])].value;
  };
  auto parent_needs = [&](int slot) {
    return nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])].needs_grad;
  };
  switch (n.op) {
    case Op::kInput:
    case Op::kParamFrozen:
    case Op::kDetach:
      break;
    case Op::kParam:
      store_->entries()[static_cast<size_t>(n.i0)].grad += g;
      break;
    case Op::kEmbed: {
      Mat& tg = store_->entries()[static_cast<size_t>(n.i0)].grad;
      for (size_t i = 0; i < n.ids.size(); ++i)
        tg.row(n.ids[i]) += g.row(static_cast<long>(i));
      break;
    }
    case Op::kAdd:
      if (parent_needs(0)) accum(n.parents[0], g);
      if (parent_needs(1)) accum(n.parents[1], g);
      break;
    case Op::kAddRow:
      if (parent_needs(0)) accum(n.parents[0], g);
      if (parent_needs(1)) accum(n.parents[1], g.colwise().sum());
      break;
    case Op::kSub:
      if (parent_needs(0)) accum(n.parents[0], g);
      if (parent_needs(1)) accum(n.parents[1], -g);
      break;
    case Op::kNeg:
      if (parent_needs(0)) accum(n.parents[0], -g);
      break;
    case Op::kScale:
      if (parent_needs(0)) accum(n.parents[0], n.c0 * g);
      break;
    case Op::kAddScalar:
      if (parent_needs(0)) accum(n.parents[0], g);
      break;
    case Op::kMul:
      if (parent_needs(0)) accum(n.parents[0], g.cwiseProduct(parent_value(1)));
      if (parent_needs(1)) accum(n.parents[1], g.cwiseProduct(parent_value(0)));
      break;
    case Op::kMatMul:
      if (parent_needs(0)) accum(n.parents[0], g * parent_value(1).transpose());
      if (parent_needs(1)) accum(n.parents[1], parent_value(0).transpose() * g);
      break;
    case Op::kTranspose:
      if (parent_needs(0)) accum(n.parents[0], g.transpose());
      break;
    case Op::kConcatCols: {
      long off = 0;
      for (size_t i = 0; i < n.parents.size(); ++i) {
        const Mat& pv = nodes_[static_cast<size_t>(n.parents[i])].value;
        if (nodes_[static_cast<size_t>(n.parents[i])].needs_grad)
          accum(n.parents[i], g.block(0, off, g.rows(), pv.cols()));
        off += pv.cols();
      }
      break;
    }
    case Op::kConcatRows: {
      long off = 0;
      for (size_t i = 0; i < n.parents.size(); ++i) {
        const Mat& pv = nodes_[static_cast<size_t>(n.parents[i])].value;
        if (nodes_[static_cast<size_t>(n.parents[i])].needs_grad)
          accum(n.parents[i], g.block(off, 0, pv.rows(), g.cols()));
        off += pv.rows();
      }
      break;
    }
    case Op::kSliceRows: {
      if (parent_needs(0)) {
        const Mat& pv = parent_value(0);
        Mat pg = Mat::Zero(pv.rows(), pv.cols());
        pg.middleRows(n.i0, n.i1) = g;
        accum(n.parents[0], pg);
      }
      break;
    }
    case Op::kSliceCols: {
      if (parent_needs(0)) {
        const Mat& pv = parent_value(0);
        Mat pg = Mat::Zero(pv.rows(), pv.cols());
        pg.middleCols(n.i0, n.i1) = g;
        accum(n.parents[0], pg);
      }
      break;
    }
    case Op::kMeanRows: {
      if (parent_needs(0)) {
        const Mat& pv = parent_value(0);
        double inv = 1.0 / static_cast<double>(pv.rows());
        accum(n.parents[0], (inv * g).replicate(pv.rows(), 1));
      }
      break;
    }
    case Op::kSum:
      if (parent_needs(0)) {
        const Mat& pv = parent_value(0);
        accum(n.parents[0], Mat::Constant(pv.rows(), pv.cols(), g(0, 0)));
      }
      break;
    case Op::kRelu:
      if (parent_needs(0)) {
        Mat m = (parent_value(0).array() > 0.0).cast<double>().matrix();
        accum(n.parents[0], g.cwiseProduct(m));
      }
      break;
    case Op::kTanh:
      if (parent_needs(0))
        accum(n.parents[0],
              (g.array() * (1.0 - n.value.array().square())).matrix());
      break;
    case Op::kSigmoid:
      if (parent_needs(0))
        accum(n.parents[0],
              (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
      break;
    case Op::kExp:
      if (parent_needs(0)) accum(n.parents[0], g.cwiseProduct(n.value));
      break;
    case Op::kLog:
      if (parent_needs(0))
        accum(n.parents[0], g.cwiseQuotient(parent_value(0)));
      break;
    case Op::kSquare:
      if (parent_needs(0))
        accum(n.parents[0], 2.0 * g.cwiseProduct(parent_value(0)));
      break;
    case Op::kClamp:
      if (parent_needs(0)) {
        const Mat& pv = parent_value(0);
        Mat m = ((pv.array() >= n.c0) && (pv.array() <= n.c1))
                    .cast<double>()
                    .matrix();
        accum(n.parents[0], g.cwiseProduct(m));
      }
      break;
    case Op::kSoftmaxRows:
      if (parent_needs(0)) {
        Mat pg(n.value.rows(), n.value.cols());
        for (long i = 0; i < n.value.rows(); ++i) {
          double dot = g.row(i).dot(n.value.row(i));
          pg.row(i) =
              n.value.row(i).cwiseProduct(g.row(i) - Eigen::RowVectorXd::Constant(n.value.cols(), dot));
        }
        accum(n.parents[0], pg);
      }
      break;
    case Op::kDropout:
      if (parent_needs(0)) accum(n.parents[0], g.cwiseProduct(n.aux));
      break;
    case Op::kLayerNorm: {
      const Mat& gamma = parent_value(1);
      if (parent_needs(1)) {
        Mat dg(1, n.value.cols());
        for (long j = 0; j < n.value.cols(); ++j)
          dg(0, j) = (g.col(j).array() * n.aux.col(j).array()).sum();
        accum(n.parents[1], dg);
      }
      if (parent_needs(2)) accum(n.parents[2], g.colwise().sum());
      if (parent_needs(0)) {
        long r = n.value.rows(), c = n.value.cols();
        Mat pg(r, c);
        for (long i = 0; i < r; ++i) {
          Eigen::RowVectorXd dxhat =
              g.row(i).cwiseProduct(gamma.row(0));
          double mean_dxhat = dxhat.mean();
          double mean_dxhat_xhat =
              (dxhat.array() * n.aux.row(i).array()).mean();
          pg.row(i) =
              (n.aux2(i, 0) *
               (dxhat.array() - mean_dxhat -
                n.aux.row(i).array() * mean_dxhat_xhat))
                  .matrix();
        }
        accum(n.parents[0], pg);
      }
      break;
    }
    case Op::kCeRows: {
      if (parent_needs(0) && n.i0 > 0) {
        double w = g(0, 0) / static_cast<double>(n.i0);
        Mat pg = Mat::Zero(n.aux.rows(), n.aux.cols());
        for (long i = 0; i < n.aux.rows(); ++i) {
          if (!n.keep[static_cast<size_t>(i)]) continue;
          pg.row(i) = w * n.aux.row(i);
          pg(i, n.ids[static_cast<size_t>(i)]) -= w;
        }
        accum(n.parents[0], pg);
      }
      break;
    }
    case Op::kCeDist: {
      if (parent_needs(0)) {
        double mass = n.aux2.sum();
        Mat pg = g(0, 0) * (mass * n.aux - n.aux2);
        accum(n.parents[0], pg);
      }
      break;
    }
    case Op::kEntropy: {
      if (parent_needs(0)) {
        double h = n.value(0, 0);
        Mat pg(1, n.aux.cols());
        for (long j = 0; j < n.aux.cols(); ++j) {
          double p = n.aux(0, j);
          pg(0, j) = p > 0.0 ? -g(0, 0) * p * (std::log(p) + h) : 0.0;
        }
        accum(n.parents[0], pg);
      }
      break;
    }
  }
}

Var gaussian_kl(Graph& g, Var mu_q, Var logvar_q, Var mu_p, Var logvar_p) {
  // KL(N(mu_q, var_q) || N(mu_p, var_p)) for diagonal Gaussians:
  // 0.5 * sum( logvar_p - logvar_q + (var_q + (mu_q - mu_p)^2) / var_p - 1 )
  Var diff2 = g.square(g.sub(mu_q, mu_p));
  Var var_q = g.exp(logvar_q);
  Var inv_var_p = g.exp(g.neg(logvar_p));
  Var ratio = g.mul(g.add(var_q, diff2), inv_var_p);
  Var inner =
      g.add_scalar(g.add(g.sub(logvar_p, logvar_q), ratio), -1.0);
  return g.scale(g.sum(inner), 0.5);
}

}  // namespace candfuse::ad
