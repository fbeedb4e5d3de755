#include "redstore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace redstore {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << ',';
    out << s[i];
  }
  out << ')';
  return out.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::relu: return "relu";
    case OpKind::mean_pool: return "mean_pool";
    case OpKind::sum: return "sum";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::softmax: return "softmax";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::cross_entropy_rows: return "cross_entropy_rows";
    case OpKind::l2_normalize: return "l2_normalize";
    case OpKind::cosine_similarity: return "cosine_similarity";
    case OpKind::clamp: return "clamp";
    case OpKind::add_rows: return "add_rows";
    case OpKind::patchify: return "patchify";
    case OpKind::bilinear: return "bilinear";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape s) {
  const std::size_t n = shape_size(s);
  return Tensor(std::move(s), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
}

Tensor Tensor::constant(Shape s, double v) {
  const std::size_t n = shape_size(s);
  return Tensor(std::move(s), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), v));
}

Tensor Tensor::scalar(double v) { return constant({}, v); }

Tensor Tensor::from(Shape s, std::vector<double> values) {
  if (shape_size(s) != values.size())
    throw ShapeError("tensor: " + shape_str(s) + " does not hold " +
                     std::to_string(values.size()) + " values");
  Eigen::VectorXd d(static_cast<Eigen::Index>(values.size()));
  std::copy(values.begin(), values.end(), d.data());
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::uniform(Rng& rng, Shape s, double lo, double hi) {
  Tensor t = zeros(std::move(s));
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(Rng& rng, Shape s, double stddev) {
  Tensor t = zeros(std::move(s));
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = stddev * rng.normal();
  return t;
}

double Tensor::value() const {
  if (size() != 1) throw DomainError("Tensor::value: not a scalar, shape " + shape_str(shape));
  return data[0];
}

static std::size_t flat_index(const Shape& s, std::initializer_list<std::size_t> idx) {
  if (s.size() != idx.size())
    throw DomainError("Tensor::at: rank " + std::to_string(s.size()) + " tensor indexed with " +
                      std::to_string(idx.size()) + " indices");
  std::size_t flat = 0, k = 0;
  for (std::size_t i : idx) {
    if (i >= s[k]) throw DomainError("Tensor::at: index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return flat;
}

double& Tensor::at(std::size_t i) { return data[static_cast<Eigen::Index>(flat_index(shape, {i}))]; }
double Tensor::at(std::size_t i) const { return data[static_cast<Eigen::Index>(flat_index(shape, {i}))]; }
double& Tensor::at(std::size_t i, std::size_t j) {
  return data[static_cast<Eigen::Index>(flat_index(shape, {i, j}))];
}
double Tensor::at(std::size_t i, std::size_t j) const {
  return data[static_cast<Eigen::Index>(flat_index(shape, {i, j}))];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data[static_cast<Eigen::Index>(flat_index(shape, {i, j, k}))];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data[static_cast<Eigen::Index>(flat_index(shape, {i, j, k}))];
}

Eigen::Map<const RowMat> Tensor::mat(std::size_t rows, std::size_t cols) const {
  if (rows * cols != size())
    throw ShapeError("Tensor::mat: cannot view " + shape_str(shape) + " as (" +
                     std::to_string(rows) + "," + std::to_string(cols) + ")");
  return Eigen::Map<const RowMat>(data.data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(cols));
}

// ---------------------------------------------------------------------------
// Tape

static void ensure_finite(OpKind kind, const Tensor& t) {
  if (!t.data.allFinite())
    throw DomainError(std::string(op_name(kind)) + ": produced non-finite values");
}

Tensor Tape::leaf(Tensor value, bool frozen) {
  ensure_finite(OpKind::leaf, value);
  TapeRecord rec;
  rec.kind = OpKind::leaf;
  rec.value = value;
  rec.frozen = frozen;
  value.node = push(std::move(rec));
  return value;
}

NodeId Tape::push(TapeRecord rec) {
  // DAG invariant: operand ids must precede the new record
  const NodeId id = next_id();
  for (const Operand& o : rec.operands)
    if (o.node >= id) throw DomainError("tape: operand id does not precede record");
  records_.push_back(std::move(rec));
  return id;
}

const TapeRecord& Tape::at(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(records_.size()))
    throw DomainError("tape: node id " + std::to_string(id) + " out of range");
  return records_[static_cast<std::size_t>(id)];
}

std::vector<NodeId> Tape::leaves() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (records_[i].kind == OpKind::leaf) out.push_back(static_cast<NodeId>(i));
  return out;
}

const Tensor& GradientMap::at(NodeId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end())
    throw DomainError("GradientMap: no gradient for node " + std::to_string(id));
  return it->second;
}

// ---------------------------------------------------------------------------
// Forward ops

namespace ops {
namespace {

Operand as_operand(const Tensor& t) {
  Operand o;
  if (t.traced()) {
    o.node = t.node;
  } else {
    o.constant = t;
  }
  return o;
}

bool any_traced(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->traced()) return true;
  return false;
}

Tensor finish(Tape* tape, OpKind kind, std::vector<Operand> operands, Tensor value,
              OpArgs args, bool traced_inputs) {
  ensure_finite(kind, value);
  value.node = kNoNode;
  if (tape == nullptr || !traced_inputs) return value;
  TapeRecord rec;
  rec.kind = kind;
  rec.operands = std::move(operands);
  rec.value = value;
  rec.args = std::move(args);
  value.node = tape->push(std::move(rec));
  return value;
}

void check_same_shape(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

// rows/cols split with normalization over the trailing axis
std::pair<std::size_t, std::size_t> row_split(OpKind kind, const Tensor& t) {
  if (t.rank() < 1)
    throw ShapeError(std::string(op_name(kind)) + ": needs rank >= 1, got " + shape_str(t.shape));
  const std::size_t cols = t.shape.back();
  return {t.size() / cols, cols};
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(OpKind::add, a, b);
  Tensor out(a.shape, a.data + b.data);
  return finish(tape, OpKind::add, {as_operand(a), as_operand(b)}, std::move(out), {},
                any_traced({&a, &b}));
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(OpKind::sub, a, b);
  Tensor out(a.shape, a.data - b.data);
  return finish(tape, OpKind::sub, {as_operand(a), as_operand(b)}, std::move(out), {},
                any_traced({&a, &b}));
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(OpKind::mul, a, b);
  Tensor out(a.shape, a.data.cwiseProduct(b.data));
  return finish(tape, OpKind::mul, {as_operand(a), as_operand(b)}, std::move(out), {},
                any_traced({&a, &b}));
}

Tensor scalar_mul(Tape* tape, const Tensor& a, double c) {
  Tensor out(a.shape, a.data * c);
  OpArgs args;
  args.a = c;
  return finish(tape, OpKind::scalar_mul, {as_operand(a)}, std::move(out), std::move(args),
                any_traced({&a}));
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  RowMat c = a.mat(m, k) * b.mat(k, n);
  Tensor out({m, n}, Eigen::Map<Eigen::VectorXd>(c.data(), c.size()));
  return finish(tape, OpKind::matmul, {as_operand(a), as_operand(b)}, std::move(out), {},
                any_traced({&a, &b}));
}

Tensor transpose(Tape* tape, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: needs rank 2, got " + shape_str(a.shape));
  const std::size_t r = a.shape[0], c = a.shape[1];
  RowMat t = a.mat(r, c).transpose();
  Tensor out({c, r}, Eigen::Map<Eigen::VectorXd>(t.data(), t.size()));
  return finish(tape, OpKind::transpose, {as_operand(a)}, std::move(out), {}, any_traced({&a}));
}

Tensor reshape(Tape* tape, const Tensor& a, Shape target) {
  if (shape_size(target) != a.size())
    throw ShapeError("reshape: " + shape_str(a.shape) + " -> " + shape_str(target) +
                     " changes element count");
  Tensor out(target, a.data);
  return finish(tape, OpKind::reshape, {as_operand(a)}, std::move(out), {}, any_traced({&a}));
}

Tensor relu(Tape* tape, const Tensor& a) {
  Tensor out(a.shape, a.data.cwiseMax(0.0));
  return finish(tape, OpKind::relu, {as_operand(a)}, std::move(out), {}, any_traced({&a}));
}

Tensor mean_pool(Tape* tape, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank())
    throw ShapeError("mean_pool: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a.shape));
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape[i]);
  std::size_t outer = 1, inner = 1;
  const std::size_t n = a.shape[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape[i];
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j)
      out.data.segment(static_cast<Eigen::Index>(o * inner), static_cast<Eigen::Index>(inner)) +=
          a.data.segment(static_cast<Eigen::Index>((o * n + j) * inner),
                         static_cast<Eigen::Index>(inner));
  out.data /= static_cast<double>(n);
  OpArgs args;
  args.axis = axis;
  return finish(tape, OpKind::mean_pool, {as_operand(a)}, std::move(out), std::move(args),
                any_traced({&a}));
}

Tensor sum(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::scalar(a.data.sum());
  return finish(tape, OpKind::sum, {as_operand(a)}, std::move(out), {}, any_traced({&a}));
}

static constexpr double kLayerNormEps = 1e-5;

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  auto [rows, cols] = row_split(OpKind::layer_norm, x);
  if (gamma.shape != Shape{cols} || beta.shape != Shape{cols})
    throw ShapeError("layer_norm: gamma/beta must have shape (" + std::to_string(cols) +
                     "), got " + shape_str(gamma.shape) + " and " + shape_str(beta.shape));
  Tensor out = Tensor::zeros(x.shape);
  auto X = x.mat(rows, cols);
  Eigen::Map<RowMat> Y(out.data.data(), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
  const Eigen::VectorXd mu = X.rowwise().mean();
  RowMat xc = X.colwise() - mu;
  const Eigen::VectorXd inv =
      (xc.array().square().rowwise().mean() + kLayerNormEps).rsqrt();
  Y = (((xc.array().colwise() * inv.array()).rowwise() * gamma.data.transpose().array())
           .rowwise() +
       beta.data.transpose().array())
          .matrix();
  return finish(tape, OpKind::layer_norm, {as_operand(x), as_operand(gamma), as_operand(beta)},
                std::move(out), {}, any_traced({&x, &gamma, &beta}));
}

static void softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& x, Eigen::RowVectorXd& s) {
  const double m = x.maxCoeff();
  s = (x.array() - m).exp();
  s /= s.sum();
}

Tensor softmax(Tape* tape, const Tensor& a) {
  auto [rows, cols] = row_split(OpKind::softmax, a);
  Tensor out = Tensor::zeros(a.shape);
  auto X = a.mat(rows, cols);
  Eigen::Map<RowMat> Y(out.data.data(), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
  const Eigen::VectorXd m = X.rowwise().maxCoeff();
  Y = (X.colwise() - m).array().exp().matrix();
  const Eigen::VectorXd norm = Y.rowwise().sum();
  Y = (Y.array().colwise() / norm.array()).matrix();
  return finish(tape, OpKind::softmax, {as_operand(a)}, std::move(out), {}, any_traced({&a}));
}

static double cross_entropy_row(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::size_t idx) {
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  return lse - x[static_cast<Eigen::Index>(idx)];
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, std::size_t class_index) {
  if (logits.rank() != 1)
    throw ShapeError("cross_entropy: logits must be rank 1, got " + shape_str(logits.shape));
  if (class_index >= logits.size())
    throw DomainError("cross_entropy: class index " + std::to_string(class_index) +
                      " out of range for " + std::to_string(logits.size()) + " logits");
  Tensor out = Tensor::scalar(cross_entropy_row(logits.data.transpose(), class_index));
  OpArgs args;
  args.index = class_index;
  return finish(tape, OpKind::cross_entropy, {as_operand(logits)}, std::move(out),
                std::move(args), any_traced({&logits}));
}

Tensor cross_entropy_rows(Tape* tape, const Tensor& logits,
                          const std::vector<std::size_t>& classes) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy_rows: logits must be rank 2, got " + shape_str(logits.shape));
  const std::size_t rows = logits.shape[0], cols = logits.shape[1];
  if (classes.size() != rows)
    throw ShapeError("cross_entropy_rows: " + std::to_string(classes.size()) +
                     " class indices for " + std::to_string(rows) + " rows");
  for (std::size_t c : classes)
    if (c >= cols)
      throw DomainError("cross_entropy_rows: class index " + std::to_string(c) +
                        " out of range for " + std::to_string(cols) + " logits");
  Tensor out = Tensor::zeros({rows});
  auto X = logits.mat(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    out.data[static_cast<Eigen::Index>(r)] =
        cross_entropy_row(X.row(static_cast<Eigen::Index>(r)), classes[r]);
  OpArgs args;
  args.classes = classes;
  return finish(tape, OpKind::cross_entropy_rows, {as_operand(logits)}, std::move(out),
                std::move(args), any_traced({&logits}));
}

Tensor l2_normalize(Tape* tape, const Tensor& a) {
  auto [rows, cols] = row_split(OpKind::l2_normalize, a);
  Tensor out = Tensor::zeros(a.shape);
  auto X = a.mat(rows, cols);
  Eigen::Map<RowMat> Y(out.data.data(), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
  const Eigen::VectorXd n = X.rowwise().norm();
  if (n.minCoeff() < 1e-12) throw DomainError("l2_normalize: row norm below 1e-12");
  Y = (X.array().colwise() / n.array()).matrix();
  return finish(tape, OpKind::l2_normalize, {as_operand(a)}, std::move(out), {},
                any_traced({&a}));
}

Tensor cosine_similarity(Tape* tape, const Tensor& u, const Tensor& v) {
  check_same_shape(OpKind::cosine_similarity, u, v);
  const double nu = u.data.norm(), nv = v.data.norm();
  if (nu < 1e-12 || nv < 1e-12)
    throw DomainError("cosine_similarity: operand norm below 1e-12");
  Tensor out = Tensor::scalar(u.data.dot(v.data) / (nu * nv));
  return finish(tape, OpKind::cosine_similarity, {as_operand(u), as_operand(v)}, std::move(out),
                {}, any_traced({&u, &v}));
}

Tensor clamp(Tape* tape, const Tensor& a, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lo > hi");
  Tensor out(a.shape, a.data.cwiseMax(lo).cwiseMin(hi));
  OpArgs args;
  args.a = lo;
  args.b = hi;
  return finish(tape, OpKind::clamp, {as_operand(a)}, std::move(out), std::move(args),
                any_traced({&a}));
}

Tensor add_rows(Tape* tape, const Tensor& a, const Tensor& bias) {
  if (a.rank() != 2 || bias.shape != Shape{a.shape[1]})
    throw ShapeError("add_rows: shapes " + shape_str(a.shape) + " vs " + shape_str(bias.shape));
  const std::size_t rows = a.shape[0], cols = a.shape[1];
  Tensor out = Tensor::zeros(a.shape);
  Eigen::Map<RowMat> Y(out.data.data(), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
  Y = a.mat(rows, cols).rowwise() + bias.data.transpose();
  return finish(tape, OpKind::add_rows, {as_operand(a), as_operand(bias)}, std::move(out), {},
                any_traced({&a, &bias}));
}

Tensor patchify(Tape* tape, const Tensor& image, std::size_t patch) {
  Shape s = image.shape;
  std::size_t batch = 1;
  if (s.size() == 4) {
    batch = s[0];
    s.erase(s.begin());
  }
  if (s.size() != 3)
    throw ShapeError("patchify: needs (C,H,W) or (B,C,H,W), got " + shape_str(image.shape));
  const std::size_t C = s[0], H = s[1], W = s[2];
  if (patch == 0 || H % patch != 0 || W % patch != 0)
    throw ShapeError("patchify: patch " + std::to_string(patch) + " does not divide " +
                     shape_str(image.shape));
  const std::size_t gy = H / patch, gx = W / patch;
  const std::size_t per = gy * gx;
  const std::size_t dim = C * patch * patch;
  Tensor out = Tensor::zeros({batch * per, dim});
  const double* src = image.data.data();
  double* dst = out.data.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t by = 0; by < gy; ++by)
      for (std::size_t bx = 0; bx < gx; ++bx) {
        double* row = dst + ((b * per) + by * gx + bx) * dim;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < patch; ++dy) {
            const double* line = src + ((b * C + c) * H + (by * patch + dy)) * W + bx * patch;
            std::copy(line, line + patch, row + (c * patch + dy) * patch);
          }
      }
  OpArgs args;
  args.index = patch;
  return finish(tape, OpKind::patchify, {as_operand(image)}, std::move(out), std::move(args),
                any_traced({&image}));
}

namespace {

// index/weight table of a 1-d half-pixel-centre bilinear resample
void bilinear_axis(std::size_t in, std::size_t out, std::vector<std::size_t>& i0,
                   std::vector<std::size_t>& i1, std::vector<double>& w) {
  i0.resize(out);
  i1.resize(out);
  w.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    const double limit = static_cast<double>(in - 1);
    if (src > limit) src = limit;
    const std::size_t lo = static_cast<std::size_t>(src);
    i0[i] = lo;
    i1[i] = std::min(lo + 1, in - 1);
    w[i] = src - static_cast<double>(lo);
  }
}

}  // namespace

Tensor bilinear_resize(Tape* tape, const Tensor& image, std::size_t h2, std::size_t w2) {
  if (image.rank() != 3)
    throw ShapeError("bilinear: needs (C,H,W), got " + shape_str(image.shape));
  if (h2 == 0 || w2 == 0) throw ShapeError("bilinear: zero output size");
  const std::size_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
  std::vector<std::size_t> y0, y1, x0, x1;
  std::vector<double> wy, wx;
  bilinear_axis(H, h2, y0, y1, wy);
  bilinear_axis(W, w2, x0, x1, wx);
  Tensor out = Tensor::zeros({C, h2, w2});
  const double* src = image.data.data();
  double* dst = out.data.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = src + c * H * W;
    for (std::size_t y = 0; y < h2; ++y) {
      const double* r0 = plane + y0[y] * W;
      const double* r1 = plane + y1[y] * W;
      const double fy = wy[y];
      double* orow = dst + (c * h2 + y) * w2;
      for (std::size_t x = 0; x < w2; ++x) {
        const double fx = wx[x];
        const double top = r0[x0[x]] * (1.0 - fx) + r0[x1[x]] * fx;
        const double bot = r1[x0[x]] * (1.0 - fx) + r1[x1[x]] * fx;
        orow[x] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  OpArgs args;
  args.h2 = h2;
  args.w2 = w2;
  return finish(tape, OpKind::bilinear, {as_operand(image)}, std::move(out), std::move(args),
                any_traced({&image}));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Reverse sweep

namespace {

class BackwardPass {
 public:
  BackwardPass(const Tape& tape, NodeId root, std::span<const NodeId> wanted)
      : tape_(tape), adj_(tape.size()), has_adj_(tape.size(), 0), needed_(tape.size(), 0) {
    if (root < 0 || root >= static_cast<NodeId>(tape.size()))
      throw DomainError("backward: root node out of range");
    const Tensor& rv = tape.value(root);
    if (rv.size() != 1)
      throw DomainError("backward: root must be a scalar, got shape " + shape_str(rv.shape));
    for (NodeId id : wanted) {
      if (id < 0 || id >= static_cast<NodeId>(tape.size()))
        throw DomainError("backward: queried node out of range");
      needed_[static_cast<std::size_t>(id)] = 1;
    }
    // a node is needed if it is queried or leads to a queried node
    for (std::size_t i = 0; i < tape.size(); ++i) {
      const TapeRecord& rec = tape.at(static_cast<NodeId>(i));
      if (needed_[i]) continue;
      for (const Operand& o : rec.operands)
        if (o.node >= 0 && needed_[static_cast<std::size_t>(o.node)]) {
          needed_[i] = 1;
          break;
        }
    }
    seed(root);
    for (NodeId id = root; id >= 0; --id) visit(id);

    for (NodeId id : wanted) {
      const std::size_t i = static_cast<std::size_t>(id);
      if (has_adj_[i])
        result_.set(id, Tensor(tape.value(id).shape, std::move(adj_[i])));
      else
        result_.set(id, Tensor::zeros(tape.value(id).shape));
    }
  }

  GradientMap take() { return std::move(result_); }

 private:
  void seed(NodeId root) {
    const std::size_t i = static_cast<std::size_t>(root);
    adj_[i] = Eigen::VectorXd::Ones(1);
    has_adj_[i] = 1;
  }

  bool want(const Operand& o) const {
    return o.node >= 0 && needed_[static_cast<std::size_t>(o.node)];
  }

  const Tensor& val(const Operand& o) const {
    return o.node >= 0 ? tape_.value(o.node) : o.constant;
  }

  void acc(NodeId id, const Eigen::VectorXd& g) {
    const std::size_t i = static_cast<std::size_t>(id);
    if (has_adj_[i]) {
      adj_[i] += g;
    } else {
      adj_[i] = g;
      has_adj_[i] = 1;
    }
  }

  void visit(NodeId id) {
    const std::size_t i = static_cast<std::size_t>(id);
    if (!has_adj_[i] || !needed_[i]) return;
    const TapeRecord& rec = tape_.at(id);
    if (rec.kind == OpKind::leaf) return;
    const Eigen::VectorXd& g = adj_[i];
    switch (rec.kind) {
      case OpKind::add: {
        if (want(rec.operands[0])) acc(rec.operands[0].node, g);
        if (want(rec.operands[1])) acc(rec.operands[1].node, g);
        break;
      }
      case OpKind::sub: {
        if (want(rec.operands[0])) acc(rec.operands[0].node, g);
        if (want(rec.operands[1])) acc(rec.operands[1].node, -g);
        break;
      }
      case OpKind::mul: {
        if (want(rec.operands[0])) acc(rec.operands[0].node, g.cwiseProduct(val(rec.operands[1]).data));
        if (want(rec.operands[1])) acc(rec.operands[1].node, g.cwiseProduct(val(rec.operands[0]).data));
        break;
      }
      case OpKind::scalar_mul: {
        if (want(rec.operands[0])) acc(rec.operands[0].node, g * rec.args.a);
        break;
      }
      case OpKind::matmul: {
        const Tensor& a = val(rec.operands[0]);
        const Tensor& b = val(rec.operands[1]);
        const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
        Eigen::Map<const RowMat> G(g.data(), static_cast<Eigen::Index>(m),
                                   static_cast<Eigen::Index>(n));
        if (want(rec.operands[0])) {
          RowMat da = G * b.mat(k, n).transpose();
          acc(rec.operands[0].node, Eigen::Map<Eigen::VectorXd>(da.data(), da.size()));
        }
        if (want(rec.operands[1])) {
          RowMat db = a.mat(m, k).transpose() * G;
          acc(rec.operands[1].node, Eigen::Map<Eigen::VectorXd>(db.data(), db.size()));
        }
        break;
      }
      case OpKind::transpose: {
        if (want(rec.operands[0])) {
          const Shape& os = rec.value.shape;  // (c,r)
          Eigen::Map<const RowMat> G(g.data(), static_cast<Eigen::Index>(os[0]),
                                     static_cast<Eigen::Index>(os[1]));
          RowMat da = G.transpose();
          acc(rec.operands[0].node, Eigen::Map<Eigen::VectorXd>(da.data(), da.size()));
        }
        break;
      }
      case OpKind::reshape: {
        if (want(rec.operands[0])) acc(rec.operands[0].node, g);
        break;
      }
      case OpKind::relu: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          Eigen::VectorXd dx =
              g.cwiseProduct((x.data.array() > 0.0).cast<double>().matrix());
          acc(rec.operands[0].node, dx);
        }
        break;
      }
      case OpKind::mean_pool: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          const std::size_t axis = rec.args.axis;
          std::size_t outer = 1, inner = 1;
          const std::size_t n = x.shape[axis];
          for (std::size_t d = 0; d < axis; ++d) outer *= x.shape[d];
          for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape[d];
          Eigen::VectorXd dx(x.data.size());
          const double s = 1.0 / static_cast<double>(n);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < n; ++j)
              dx.segment(static_cast<Eigen::Index>((o * n + j) * inner),
                         static_cast<Eigen::Index>(inner)) =
                  g.segment(static_cast<Eigen::Index>(o * inner),
                            static_cast<Eigen::Index>(inner)) *
                  s;
          acc(rec.operands[0].node, dx);
        }
        break;
      }
      case OpKind::sum: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          acc(rec.operands[0].node, Eigen::VectorXd::Constant(x.data.size(), g[0]));
        }
        break;
      }
      case OpKind::layer_norm: {
        const Tensor& x = val(rec.operands[0]);
        const Tensor& gamma = val(rec.operands[1]);
        const std::size_t cols = x.shape.back();
        const std::size_t rows = x.size() / cols;
        Eigen::Map<const RowMat> X(x.data.data(), static_cast<Eigen::Index>(rows),
                                   static_cast<Eigen::Index>(cols));
        Eigen::Map<const RowMat> G(g.data(), static_cast<Eigen::Index>(rows),
                                   static_cast<Eigen::Index>(cols));
        const bool wx = want(rec.operands[0]);
        const bool wg = want(rec.operands[1]);
        const bool wb = want(rec.operands[2]);
        const double D = static_cast<double>(cols);
        const Eigen::VectorXd mu = X.rowwise().mean();
        RowMat xhat = X.colwise() - mu;
        const Eigen::VectorXd inv =
            (xhat.array().square().rowwise().mean() + ops::kLayerNormEps).rsqrt();
        xhat = (xhat.array().colwise() * inv.array()).matrix();
        if (wg)
          acc(rec.operands[1].node, G.cwiseProduct(xhat).colwise().sum().transpose());
        if (wb) acc(rec.operands[2].node, G.colwise().sum().transpose());
        if (wx) {
          RowMat dxhat = (G.array().rowwise() * gamma.data.transpose().array()).matrix();
          const Eigen::VectorXd s1 = dxhat.rowwise().sum() / D;
          const Eigen::VectorXd s2 = dxhat.cwiseProduct(xhat).rowwise().sum() / D;
          RowMat dX =
              ((((dxhat.colwise() - s1) - (xhat.array().colwise() * s2.array()).matrix())
                    .array()
                    .colwise() *
                inv.array()))
                  .matrix();
          acc(rec.operands[0].node, Eigen::Map<Eigen::VectorXd>(dX.data(), dX.size()));
        }
        break;
      }
      case OpKind::softmax: {
        if (want(rec.operands[0])) {
          const std::size_t cols = rec.value.shape.back();
          const std::size_t rows = rec.value.size() / cols;
          Eigen::Map<const RowMat> S(rec.value.data.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          Eigen::Map<const RowMat> G(g.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          const Eigen::VectorXd dot = G.cwiseProduct(S).rowwise().sum();
          RowMat dX = S.cwiseProduct(G.colwise() - dot);
          acc(rec.operands[0].node, Eigen::Map<Eigen::VectorXd>(dX.data(), dX.size()));
        }
        break;
      }
      case OpKind::cross_entropy: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          Eigen::RowVectorXd s;
          ops::softmax_row(x.data.transpose(), s);
          s[static_cast<Eigen::Index>(rec.args.index)] -= 1.0;
          acc(rec.operands[0].node, (s * g[0]).transpose());
        }
        break;
      }
      case OpKind::cross_entropy_rows: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          const std::size_t cols = x.shape[1], rows = x.shape[0];
          Eigen::Map<const RowMat> X(x.data.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          const Eigen::VectorXd m = X.rowwise().maxCoeff();
          RowMat dX = (X.colwise() - m).array().exp().matrix();
          const Eigen::VectorXd norm = dX.rowwise().sum();
          dX = (dX.array().colwise() / norm.array()).matrix();
          for (std::size_t r = 0; r < rows; ++r)
            dX(static_cast<Eigen::Index>(r),
               static_cast<Eigen::Index>(rec.args.classes[r])) -= 1.0;
          dX = (dX.array().colwise() * g.array()).matrix();
          acc(rec.operands[0].node, Eigen::Map<Eigen::VectorXd>(dX.data(), dX.size()));
        }
        break;
      }
      case OpKind::l2_normalize: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          const std::size_t cols = x.shape.back();
          const std::size_t rows = x.size() / cols;
          Eigen::Map<const RowMat> X(x.data.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          Eigen::Map<const RowMat> Y(rec.value.data.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          Eigen::Map<const RowMat> G(g.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          const Eigen::VectorXd n = X.rowwise().norm();
          const Eigen::VectorXd dot = G.cwiseProduct(Y).rowwise().sum();
          RowMat dX = ((G - (Y.array().colwise() * dot.array()).matrix()).array().colwise() /
                       n.array())
                          .matrix();
          acc(rec.operands[0].node, Eigen::Map<Eigen::VectorXd>(dX.data(), dX.size()));
        }
        break;
      }
      case OpKind::cosine_similarity: {
        const Tensor& u = val(rec.operands[0]);
        const Tensor& v = val(rec.operands[1]);
        const double nu = u.data.norm(), nv = v.data.norm();
        const double c = rec.value.data[0];
        const double gs = g[0];
        if (want(rec.operands[0]))
          acc(rec.operands[0].node,
              (v.data / (nu * nv) - u.data * (c / (nu * nu))) * gs);
        if (want(rec.operands[1]))
          acc(rec.operands[1].node,
              (u.data / (nu * nv) - v.data * (c / (nv * nv))) * gs);
        break;
      }
      case OpKind::clamp: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          Eigen::VectorXd mask =
              ((x.data.array() >= rec.args.a) && (x.data.array() <= rec.args.b))
                  .cast<double>()
                  .matrix();
          acc(rec.operands[0].node, g.cwiseProduct(mask));
        }
        break;
      }
      case OpKind::add_rows: {
        if (want(rec.operands[0])) acc(rec.operands[0].node, g);
        if (want(rec.operands[1])) {
          const Tensor& a = val(rec.operands[0]);
          const std::size_t rows = a.shape[0], cols = a.shape[1];
          Eigen::Map<const RowMat> G(g.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
          acc(rec.operands[1].node, G.colwise().sum().transpose());
        }
        break;
      }
      case OpKind::patchify: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          Shape s = x.shape;
          std::size_t batch = 1;
          if (s.size() == 4) {
            batch = s[0];
            s.erase(s.begin());
          }
          const std::size_t C = s[0], H = s[1], W = s[2];
          const std::size_t p = rec.args.index;
          const std::size_t gy = H / p, gx = W / p, per = gy * gx, dim = C * p * p;
          Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.data.size());
          const double* grow = g.data();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t by = 0; by < gy; ++by)
              for (std::size_t bx = 0; bx < gx; ++bx) {
                const double* row = grow + ((b * per) + by * gx + bx) * dim;
                for (std::size_t c = 0; c < C; ++c)
                  for (std::size_t dy = 0; dy < p; ++dy) {
                    double* line =
                        dx.data() + ((b * C + c) * H + (by * p + dy)) * W + bx * p;
                    const double* prow = row + (c * p + dy) * p;
                    for (std::size_t dxi = 0; dxi < p; ++dxi) line[dxi] += prow[dxi];
                  }
              }
          acc(rec.operands[0].node, dx);
        }
        break;
      }
      case OpKind::bilinear: {
        if (want(rec.operands[0])) {
          const Tensor& x = val(rec.operands[0]);
          const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
          const std::size_t h2 = rec.args.h2, w2 = rec.args.w2;
          std::vector<std::size_t> y0, y1, x0, x1;
          std::vector<double> wy, wx;
          ops::bilinear_axis(H, h2, y0, y1, wy);
          ops::bilinear_axis(W, w2, x0, x1, wx);
          Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.data.size());
          const double* gp = g.data();
          for (std::size_t c = 0; c < C; ++c) {
            double* plane = dx.data() + c * H * W;
            for (std::size_t y = 0; y < h2; ++y) {
              const double fy = wy[y];
              double* r0 = plane + y0[y] * W;
              double* r1 = plane + y1[y] * W;
              const double* grow = gp + (c * h2 + y) * w2;
              for (std::size_t xx = 0; xx < w2; ++xx) {
                const double fx = wx[xx];
                const double gv = grow[xx];
                r0[x0[xx]] += gv * (1.0 - fy) * (1.0 - fx);
                r0[x1[xx]] += gv * (1.0 - fy) * fx;
                r1[x0[xx]] += gv * fy * (1.0 - fx);
                r1[x1[xx]] += gv * fy * fx;
              }
            }
          }
          acc(rec.operands[0].node, dx);
        }
        break;
      }
      case OpKind::leaf:
        break;
    }
  }

  const Tape& tape_;
  std::vector<Eigen::VectorXd> adj_;
  std::vector<char> has_adj_;
  std::vector<char> needed_;
  GradientMap result_;
};

}  // namespace

GradientMap backward(const Tape& tape, NodeId root, std::span<const NodeId> wanted) {
  return BackwardPass(tape, root, wanted).take();
}

GradientMap backward(const Tape& tape, NodeId root) {
  std::vector<NodeId> leaves = tape.leaves();
  return backward(tape, root, leaves);
}

// ---------------------------------------------------------------------------
// Finite differences and Adam

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h >= 1e-7 && h <= 1e-3))
    throw DomainError("finite_diff_check: h must lie in [1e-7, 1e-3]");
  Tape tape;
  Tensor xl = tape.leaf(x);
  Tensor y = f(&tape, xl);
  if (y.size() != 1)
    throw DomainError("finite_diff_check: f must return a scalar, got shape " +
                      shape_str(y.shape));
  Tensor analytic;
  if (y.traced()) {
    const NodeId want[] = {xl.node};
    analytic = backward(tape, y.node, want).at(xl.node);
  } else {
    analytic = Tensor::zeros(x.shape);  // f ignored its argument
  }
  Tensor probe = x;
  probe.node = kNoNode;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < probe.data.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double fp = f(nullptr, probe).value();
    probe.data[i] = orig - h;
    const double fm = f(nullptr, probe).value();
    probe.data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.data[i];
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  if (!(lr > 0.0)) throw DomainError("adam_step: lr must be positive");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape));
      state.v.push_back(Tensor::zeros(p->shape));
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                     " moments for " + std::to_string(params.size()) + " params");
  state.step += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (p.shape != g.shape || state.m[i].shape != p.shape)
      throw ShapeError("adam_step: shape mismatch " + shape_str(p.shape) + " vs " +
                       shape_str(g.shape));
    state.m[i].data = beta1 * state.m[i].data + (1.0 - beta1) * g.data;
    state.v[i].data = beta2 * state.v[i].data + (1.0 - beta2) * g.data.cwiseProduct(g.data);
    p.data -= lr * (state.m[i].data / c1)
                  .cwiseQuotient(((state.v[i].data / c2).cwiseSqrt().array() + eps).matrix());
  }
}

}  // namespace redstore
