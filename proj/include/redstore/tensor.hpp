#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "redstore/errors.hpp"
#include "redstore/rng.hpp"

namespace redstore {

using NodeId = std::int64_t;
inline constexpr NodeId kNoNode = -1;

using Shape = std::vector<std::size_t>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

// Dense N-d array of doubles, row-major, optionally attached to a Tape node.
// A Tensor without a node id is an immutable value as far as the tape is
// concerned and is safe to share across threads.
struct Tensor {
  Shape shape;
  Eigen::VectorXd data;
  NodeId node = kNoNode;

  Tensor() = default;
  Tensor(Shape s, Eigen::VectorXd d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(Shape s);
  static Tensor constant(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape s, std::vector<double> values);
  static Tensor uniform(Rng& rng, Shape s, double lo, double hi);
  static Tensor normal(Rng& rng, Shape s, double stddev);

  std::size_t size() const { return static_cast<std::size_t>(data.size()); }
  std::size_t rank() const { return shape.size(); }
  bool traced() const { return node != kNoNode; }
  bool is_scalar() const { return size() == 1; }

  // value of a size-1 tensor
  double value() const;

  double& at(std::size_t i);
  double at(std::size_t i) const;
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  Eigen::Map<const RowMat> mat(std::size_t rows, std::size_t cols) const;
};

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  scalar_mul,
  matmul,
  transpose,
  reshape,
  relu,
  mean_pool,
  sum,
  layer_norm,
  softmax,
  cross_entropy,
  cross_entropy_rows,
  l2_normalize,
  cosine_similarity,
  clamp,
  add_rows,
  patchify,
  bilinear,
};

const char* op_name(OpKind k);

struct OpArgs {
  double a = 0.0;
  double b = 0.0;
  std::size_t axis = 0;
  std::size_t index = 0;
  std::size_t h2 = 0;
  std::size_t w2 = 0;
  std::vector<std::size_t> classes;
};

// One operand of a record: either a reference to an earlier node or an
// inline constant captured at record time.
struct Operand {
  NodeId node = kNoNode;
  Tensor constant;
};

struct TapeRecord {
  OpKind kind = OpKind::leaf;
  std::vector<Operand> operands;
  Tensor value;
  OpArgs args;
  bool frozen = false;  // leaves only: excluded from optimizer updates
};

// Append-only record of forward operations. Records form a DAG: every
// operand id precedes the record that consumes it. Single-threaded by
// design; run independent tapes on separate threads.
class Tape {
 public:
  // Registers `value` as an input node and returns it with the node id set.
  Tensor leaf(Tensor value, bool frozen = false);

  NodeId push(TapeRecord rec);

  const Tensor& value(NodeId id) const { return at(id).value; }
  const TapeRecord& at(NodeId id) const;
  std::size_t size() const { return records_.size(); }
  NodeId next_id() const { return static_cast<NodeId>(records_.size()); }

  // All leaf node ids in creation order.
  std::vector<NodeId> leaves() const;

 private:
  std::vector<TapeRecord> records_;
};

// node id -> gradient tensor, same shape as the node's forward value.
class GradientMap {
 public:
  void set(NodeId id, Tensor g) { grads_[id] = std::move(g); }
  bool contains(NodeId id) const { return grads_.count(id) != 0; }
  const Tensor& at(NodeId id) const;
  const Tensor& at(const Tensor& t) const { return at(t.node); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<NodeId, Tensor> grads_;
};

// Reverse-mode sweep from a scalar root. Visits each record at most once,
// in reverse creation order. Returns gradients for every reachable leaf
// (the default) or for an explicit list of node ids; requested nodes that
// the root does not reach get zero gradients of the right shape.
GradientMap backward(const Tape& tape, NodeId root);
GradientMap backward(const Tape& tape, NodeId root, std::span<const NodeId> wanted);

namespace ops {

// All ops compute the same values whether or not `tape` is given; passing a
// tape only records the operation (when at least one operand is traced).
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(Tape* tape, const Tensor& a, double c);
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);  // 2-d
Tensor transpose(Tape* tape, const Tensor& a);                // 2-d
Tensor reshape(Tape* tape, const Tensor& a, Shape target);
Tensor relu(Tape* tape, const Tensor& a);
Tensor mean_pool(Tape* tape, const Tensor& a, std::size_t axis);
Tensor sum(Tape* tape, const Tensor& a);  // -> scalar
// Normalizes over the last axis, then applies per-column gamma/beta.
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta);
Tensor softmax(Tape* tape, const Tensor& a);  // last axis
// -log softmax(logits)[index]; log-sum-exp stabilized. logits are 1-d.
Tensor cross_entropy(Tape* tape, const Tensor& logits, std::size_t class_index);
// Row-wise cross entropy for (B,K) logits; returns (B,).
Tensor cross_entropy_rows(Tape* tape, const Tensor& logits, const std::vector<std::size_t>& classes);
Tensor l2_normalize(Tape* tape, const Tensor& a);  // last axis
Tensor cosine_similarity(Tape* tape, const Tensor& u, const Tensor& v);  // -> scalar
// Gradient convention: identity on [lo,hi] (inclusive), zero outside.
Tensor clamp(Tape* tape, const Tensor& a, double lo, double hi);
// (R,C) + (C,): adds `bias` to every row. Explicit op, not broadcasting.
Tensor add_rows(Tape* tape, const Tensor& a, const Tensor& bias);
// (C,H,W) or (B,C,H,W) -> (P, C*p*p) resp. (B*P, C*p*p); patches scan
// row-major over the grid, each row is channel-major within the patch.
Tensor patchify(Tape* tape, const Tensor& image, std::size_t patch);
// (C,H,W) -> (C,h2,w2), half-pixel-centre bilinear with edge clamping.
Tensor bilinear_resize(Tape* tape, const Tensor& image, std::size_t h2, std::size_t w2);

}  // namespace ops

// Max over components of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function built from tape ops. h must lie in [1e-7, 1e-3].
using ScalarFn = std::function<Tensor(Tape*, const Tensor&)>;
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

// Standard Adam with bias correction; deterministic given identical inputs.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace redstore
