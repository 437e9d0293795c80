#include "hamh/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace hamh::nn {

namespace {

thread_local Tape* g_current_tape = nullptr;

bool tape_active() { return g_current_tape != nullptr; }

bool track(const Tensor& a) { return tape_active() && a.requires_grad(); }
bool track(const Tensor& a, const Tensor& b) {
  return tape_active() && (a.requires_grad() || b.requires_grad());
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " vs " +
                              b.shape_str());
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a) {
  throw std::invalid_argument(op + ": invalid input shape " + a.shape_str());
}

using NodePtr = std::shared_ptr<Tensor::Node>;

// Marks the output as gradient-tracked and appends the backward closure.
void record(Tensor& out, std::function<void()> fn) {
  out.set_requires_grad(true);
  Tape::current()->record(std::move(fn));
}

}  // namespace

// --------------------------------------------------------------------------
// Tensor
// --------------------------------------------------------------------------

Tensor Tensor::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return from(std::move(m), 2);
}

Tensor Tensor::row(std::vector<double> values) {
  Mat m(1, static_cast<Index>(values.size()));
  for (Index i = 0; i < m.cols(); ++i) m(0, i) = values[static_cast<std::size_t>(i)];
  return from(std::move(m), 1);
}

Tensor Tensor::from_matrix(Mat m) { return from(std::move(m), 2); }

Tensor Tensor::from(Mat m, int rank) {
  if (rank == 1 && m.rows() != 1)
    throw std::invalid_argument("Tensor: rank-1 tensor must have a single row");
  auto node = std::make_shared<Node>();
  node->value = std::move(m);
  node->rank = rank;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Index rows, Index cols) { return from(Mat::Zero(rows, cols), 2); }

Tensor Tensor::param(Mat m, std::string name, int rank) {
  Tensor t = from(std::move(m), rank);
  t.set_requires_grad(true);
  t.set_name(std::move(name));
  return t;
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on && node_->grad.size() != node_->value.size())
    node_->grad = Mat::Zero(node_->value.rows(), node_->value.cols());
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.setZero();
}

std::vector<Index> Tensor::shape() const {
  if (node_->rank == 1) return {node_->value.cols()};
  return {node_->value.rows(), node_->value.cols()};
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  const auto s = shape();
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ')';
  return os.str();
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar " + shape_str());
  return node_->value(0, 0);
}

Tensor Tensor::detach() const {
  Tensor t = from(node_->value, node_->rank);
  return t;
}

// --------------------------------------------------------------------------
// Tape
// --------------------------------------------------------------------------

Tape::Tape() : prev_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward_op) { ops_.push_back(std::move(backward_op)); }

void Tape::clear() { ops_.clear(); }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + loss.shape_str());
  if (loss.requires_grad()) loss.node()->grad.array() += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  clear();
}

void backward(const Tensor& loss) {
  if (Tape::current() == nullptr) throw std::logic_error("backward: no active tape");
  Tape::current()->backward(loss);
}

// --------------------------------------------------------------------------
// Primitives
// --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Tensor out = Tensor::from(a.value() * b.value(), 2);
  if (track(a, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on] {
      if (an->requires_grad) an->grad.noalias() += on->grad * bn->value.transpose();
      if (bn->requires_grad) bn->grad.noalias() += an->value.transpose() * on->grad;
    });
  }
  return out;
}

namespace {

enum class Broadcast { kNone, kBias };

Broadcast binary_mode(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kBias;
  shape_error(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = binary_mode("add", a, b);
  Mat v = a.value();
  if (mode == Broadcast::kNone)
    v += b.value();
  else
    v.rowwise() += b.value().row(0);
  Tensor out = Tensor::from(std::move(v), std::max(a.rank(), b.rank()));
  if (track(a, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on, mode] {
      if (an->requires_grad) an->grad += on->grad;
      if (bn->requires_grad) {
        if (mode == Broadcast::kNone)
          bn->grad += on->grad;
        else
          bn->grad.row(0) += on->grad.colwise().sum();
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  Tensor out = Tensor::from(a.value() - b.value(), std::max(a.rank(), b.rank()));
  if (track(a, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on] {
      if (an->requires_grad) an->grad += on->grad;
      if (bn->requires_grad) bn->grad -= on->grad;
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = binary_mode("mul", a, b);
  Mat v(a.rows(), a.cols());
  if (mode == Broadcast::kNone)
    v = a.value().cwiseProduct(b.value());
  else
    v = a.value().array().rowwise() * b.value().row(0).array();
  Tensor out = Tensor::from(std::move(v), std::max(a.rank(), b.rank()));
  if (track(a, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on, mode] {
      if (mode == Broadcast::kNone) {
        if (an->requires_grad) an->grad += on->grad.cwiseProduct(bn->value);
        if (bn->requires_grad) bn->grad += on->grad.cwiseProduct(an->value);
      } else {
        if (an->requires_grad)
          an->grad.array() += on->grad.array().rowwise() * bn->value.row(0).array();
        if (bn->requires_grad)
          bn->grad.row(0) += on->grad.cwiseProduct(an->value).colwise().sum();
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_error("concat", a, b);
  Mat v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.value();
  v.rightCols(b.cols()) = b.value();
  Tensor out = Tensor::from(std::move(v), std::max(a.rank(), b.rank()));
  if (track(a, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const Index ac = a.cols(), bc = b.cols();
    record(out, [an, bn, on, ac, bc] {
      if (an->requires_grad) an->grad += on->grad.leftCols(ac);
      if (bn->requires_grad) bn->grad += on->grad.rightCols(bc);
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& pieces) {
  if (pieces.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Index rows = 0;
  const Index cols = pieces.front().cols();
  for (const Tensor& p : pieces) {
    if (p.cols() != cols) shape_error("concat_rows", pieces.front(), p);
    rows += p.rows();
  }
  Mat v(rows, cols);
  Index at = 0;
  bool any_grad = false;
  for (const Tensor& p : pieces) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  Tensor out = Tensor::from(std::move(v), 2);
  if (tape_active() && any_grad) {
    std::vector<NodePtr> ins;
    ins.reserve(pieces.size());
    for (const Tensor& p : pieces) ins.push_back(p.node());
    NodePtr on = out.node();
    record(out, [ins, on] {
      Index at = 0;
      for (const NodePtr& in : ins) {
        if (in->requires_grad) in->grad += on->grad.middleRows(at, in->value.rows());
        at += in->value.rows();
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows())
    throw std::invalid_argument("slice_rows: range out of bounds for " + x.shape_str());
  Tensor out = Tensor::from(x.value().middleRows(start, count), 2);
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on, start, count] {
      if (xn->requires_grad) xn->grad.middleRows(start, count) += on->grad;
    });
  }
  return out;
}

namespace {

// Shared scaffolding for elementwise unary ops. dfn receives (input value,
// output value) and returns the local derivative.
template <typename FwdFn, typename DFn>
Tensor unary_elementwise(const Tensor& x, FwdFn fwd, DFn dfn) {
  Tensor out = Tensor::from(fwd(x.value()), x.rank());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on, dfn] {
      if (xn->requires_grad)
        xn->grad.array() += on->grad.array() * dfn(xn->value, on->value).array();
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](const Mat& v) { return v.cwiseMax(0.0).eval(); },
      [](const Mat& v, const Mat&) { return (v.array() > 0.0).cast<double>().matrix().eval(); });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  return unary_elementwise(
      x,
      [negative_slope](const Mat& v) {
        return (v.array() > 0.0).select(v, negative_slope * v).eval();
      },
      [negative_slope](const Mat& v, const Mat&) {
        return (v.array() > 0.0).select(Mat::Ones(v.rows(), v.cols()),
                                        Mat::Constant(v.rows(), v.cols(), negative_slope))
            .eval();
      });
}

Tensor elu(const Tensor& x) {
  return unary_elementwise(
      x,
      [](const Mat& v) { return (v.array() > 0.0).select(v, v.array().exp() - 1.0).eval(); },
      [](const Mat& v, const Mat& y) {
        // For v <= 0 the derivative is exp(v) = y + 1.
        return (v.array() > 0.0)
            .select(Mat::Ones(v.rows(), v.cols()), (y.array() + 1.0).matrix())
            .eval();
      });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](const Mat& v) { return v.array().tanh().matrix().eval(); },
      [](const Mat&, const Mat& y) { return (1.0 - y.array().square()).matrix().eval(); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x,
      [](const Mat& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix().eval(); },
      [](const Mat&, const Mat& y) { return (y.array() * (1.0 - y.array())).matrix().eval(); });
}

Tensor log(const Tensor& x) {
  return unary_elementwise(
      x, [](const Mat& v) { return v.array().log().matrix().eval(); },
      [](const Mat& v, const Mat&) { return v.array().inverse().matrix().eval(); });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(
      x, [](const Mat& v) { return v.array().exp().matrix().eval(); },
      [](const Mat&, const Mat& y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary_elementwise(
      x, [](const Mat& v) { return v.array().square().matrix().eval(); },
      [](const Mat& v, const Mat&) { return (2.0 * v.array()).matrix().eval(); });
}

Tensor xlogx(const Tensor& x) {
  return unary_elementwise(
      x,
      [](const Mat& v) {
        return (v.array() > 0.0).select((v.array() * v.array().log()).matrix(),
                                        Mat::Zero(v.rows(), v.cols()))
            .eval();
      },
      [](const Mat& v, const Mat&) {
        // d(x ln x)/dx = ln x + 1. At x = 0 the true one-sided derivative
        // diverges; a large finite value keeps downstream softmax backward
        // finite (it multiplies this entry by an exact zero).
        constexpr double kFloor = 1e-300;
        return (v.array().max(kFloor).log() + 1.0).matrix().eval();
      });
}

Tensor affine(const Tensor& x, double a, double b) {
  Tensor out = Tensor::from(((a * x.value().array()) + b).matrix(), x.rank());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on, a] {
      if (xn->requires_grad) xn->grad += a * on->grad;
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double a) { return affine(x, a, 0.0); }

Tensor softmax_lastdim(const Tensor& x) {
  Mat y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = x.value().row(r).maxCoeff();
    // Scalar std::exp keeps IEEE underflow-to-zero semantics; Eigen's packet
    // exp clamps the argument and returns denormals for saturated logits.
    double denom = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      y(r, c) = std::exp(x.value()(r, c) - mx);
      denom += y(r, c);
    }
    y.row(r) /= denom;
  }
  Tensor out = Tensor::from(std::move(y), x.rank());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on] {
      if (!xn->requires_grad) return;
      for (Index r = 0; r < on->value.rows(); ++r) {
        const double dot = on->grad.row(r).cwiseProduct(on->value.row(r)).sum();
        xn->grad.row(r).array() +=
            (on->grad.row(r).array() - dot) * on->value.row(r).array();
      }
    });
  }
  return out;
}

Tensor masked_softmax_lastdim(const Tensor& x, const Mat& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw std::invalid_argument("masked_softmax_lastdim: mask shape mismatch for " + x.shape_str());
  Mat y = Mat::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) mx = std::max(mx, x.value()(r, c));
    if (!std::isfinite(mx))
      throw std::invalid_argument("masked_softmax_lastdim: fully masked row");
    double denom = 0.0;
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) {
        y(r, c) = std::exp(x.value()(r, c) - mx);
        denom += y(r, c);
      }
    y.row(r) /= denom;
  }
  Tensor out = Tensor::from(std::move(y), x.rank());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on] {
      if (!xn->requires_grad) return;
      // Masked outputs are exactly zero, so the plain softmax backward
      // already routes zero gradient to masked logits.
      for (Index r = 0; r < on->value.rows(); ++r) {
        const double dot = on->grad.row(r).cwiseProduct(on->value.row(r)).sum();
        xn->grad.row(r).array() +=
            (on->grad.row(r).array() - dot) * on->value.row(r).array();
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(x.value().sum());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on] {
      if (xn->requires_grad) xn->grad.array() += on->grad(0, 0);
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) shape_error("mean", x);
  Tensor out = Tensor::scalar(x.value().mean());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    const double inv = 1.0 / static_cast<double>(x.size());
    record(out, [xn, on, inv] {
      if (xn->requires_grad) xn->grad.array() += on->grad(0, 0) * inv;
    });
  }
  return out;
}

Tensor sum_lastdim(const Tensor& x) {
  Tensor out = Tensor::from(x.value().rowwise().sum(), 2);
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on] {
      if (xn->requires_grad) xn->grad.array().colwise() += on->grad.col(0).array();
    });
  }
  return out;
}

Tensor gather_lastdim(const Tensor& x, const std::vector<int>& index) {
  if (static_cast<Index>(index.size()) != x.rows())
    throw std::invalid_argument("gather_lastdim: need one index per row of " + x.shape_str());
  Mat v(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c < 0 || c >= x.cols())
      throw std::out_of_range("gather_lastdim: index out of range");
    v(r, 0) = x.value()(r, c);
  }
  Tensor out = Tensor::from(std::move(v), 2);
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on, index] {
      if (!xn->requires_grad) return;
      for (Index r = 0; r < on->value.rows(); ++r)
        xn->grad(r, index[static_cast<std::size_t>(r)]) += on->grad(r, 0);
    });
  }
  return out;
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("minimum", a, b);
  Tensor out = Tensor::from(a.value().cwiseMin(b.value()), std::max(a.rank(), b.rank()));
  if (track(a, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on] {
      Mat take_a = (an->value.array() <= bn->value.array()).cast<double>();
      if (an->requires_grad) an->grad += on->grad.cwiseProduct(take_a);
      if (bn->requires_grad)
        bn->grad.array() += on->grad.array() * (1.0 - take_a.array());
    });
  }
  return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Tensor out = Tensor::from(x.value().cwiseMax(lo).cwiseMin(hi), x.rank());
  if (track(x)) {
    NodePtr xn = x.node(), on = out.node();
    record(out, [xn, on, lo, hi] {
      if (xn->requires_grad)
        xn->grad.array() += on->grad.array() *
                            ((xn->value.array() > lo) && (xn->value.array() < hi)).cast<double>();
    });
  }
  return out;
}

Tensor pairwise_sum_blocks(const Tensor& s, const Tensor& r, Index n) {
  if (s.cols() != 1 || r.cols() != 1 || s.rows() != r.rows() || n <= 0 || s.rows() % n != 0)
    shape_error("pairwise_sum_blocks", s, r);
  const Index groups = s.rows() / n;
  Mat v(s.rows(), n);
  for (Index g = 0; g < groups; ++g)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        v(g * n + i, j) = s.value()(g * n + i, 0) + r.value()(g * n + j, 0);
  Tensor out = Tensor::from(std::move(v), 2);
  if (track(s, r)) {
    NodePtr sn = s.node(), rn = r.node(), on = out.node();
    record(out, [sn, rn, on, groups, n] {
      for (Index g = 0; g < groups; ++g)
        for (Index i = 0; i < n; ++i) {
          if (sn->requires_grad) sn->grad(g * n + i, 0) += on->grad.row(g * n + i).sum();
          if (rn->requires_grad)
            for (Index j = 0; j < n; ++j) rn->grad(g * n + j, 0) += on->grad(g * n + i, j);
        }
    });
  }
  return out;
}

Tensor block_matmul(const Tensor& a, const Tensor& h, Index n) {
  if (a.cols() != n || a.rows() != h.rows() || n <= 0 || a.rows() % n != 0)
    shape_error("block_matmul", a, h);
  const Index groups = a.rows() / n;
  Mat v(h.rows(), h.cols());
  for (Index g = 0; g < groups; ++g)
    v.middleRows(g * n, n).noalias() =
        a.value().middleRows(g * n, n) * h.value().middleRows(g * n, n);
  Tensor out = Tensor::from(std::move(v), 2);
  if (track(a, h)) {
    NodePtr an = a.node(), hn = h.node(), on = out.node();
    record(out, [an, hn, on, groups, n] {
      for (Index g = 0; g < groups; ++g) {
        if (an->requires_grad)
          an->grad.middleRows(g * n, n).noalias() +=
              on->grad.middleRows(g * n, n) * hn->value.middleRows(g * n, n).transpose();
        if (hn->requires_grad)
          hn->grad.middleRows(g * n, n).noalias() +=
              an->value.middleRows(g * n, n).transpose() * on->grad.middleRows(g * n, n);
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Dispatcher
// --------------------------------------------------------------------------

const char* op_name(Op op) {
  switch (op) {
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kConcat: return "concat";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftmaxLastDim: return "softmax_lastdim";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSquare: return "square";
  }
  return "?";
}

Tensor primitive_forward(Op op, const std::vector<Tensor>& inputs) {
  const auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw std::invalid_argument(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
  };
  switch (op) {
    case Op::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
    case Op::kAdd: need(2); return add(inputs[0], inputs[1]);
    case Op::kMul: need(2); return mul(inputs[0], inputs[1]);
    case Op::kConcat: need(2); return concat(inputs[0], inputs[1]);
    case Op::kRelu: need(1); return relu(inputs[0]);
    case Op::kTanh: need(1); return tanh(inputs[0]);
    case Op::kSigmoid: need(1); return sigmoid(inputs[0]);
    case Op::kSoftmaxLastDim: need(1); return softmax_lastdim(inputs[0]);
    case Op::kLog: need(1); return log(inputs[0]);
    case Op::kSum: need(1); return sum(inputs[0]);
    case Op::kMean: need(1); return mean(inputs[0]);
    case Op::kSquare: need(1); return square(inputs[0]);
  }
  throw std::logic_error("primitive_forward: unknown op");
}

}  // namespace hamh::nn
