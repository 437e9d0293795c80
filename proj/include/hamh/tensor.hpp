#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hamh::nn {

// All numeric work is double precision, row-major.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Dense tensor participating in reverse-mode autodiff. Rank is 1 or 2;
// rank-1 tensors are stored as a single row. `Tensor` is a cheap handle:
// copies share the underlying node, so gradients accumulate across fan-out.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);
  static Tensor from_matrix(Mat m);
  static Tensor from(Mat m, int rank);
  static Tensor zeros(Index rows, Index cols);
  // Learnable parameter: requires_grad with a zero gradient accumulator.
  static Tensor param(Mat m, std::string name, int rank = 2);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  Mat& value() { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Mat& grad() { return node_->grad; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  int rank() const { return node_->rank; }
  std::vector<Index> shape() const;
  std::string shape_str() const;

  const std::string& name() const { return node_->name; }
  void set_name(std::string name) { node_->name = std::move(name); }

  // Scalar extraction (1x1 tensors only).
  double item() const;

  // Value copy detached from the tape; never requires grad.
  Tensor detach() const;

  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    int rank = 2;
    std::string name;
  };
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// Ordered record of executed primitives for one backward pass. Constructing
// a Tape makes it current for the thread; ops append their backward closures
// while it is active. Replaying in reverse creation order is a reverse
// topological traversal of the eagerly built graph.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::function<void()> backward_op);
  std::size_t size() const { return ops_.size(); }
  void clear();

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  // gradients into every reachable tensor. Consumes the tape.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> ops_;
  Tape* prev_ = nullptr;
};

// Convenience wrapper over Tape::current()->backward(loss).
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitive operations. Forward always runs; a tape node is appended only
// when a tape is active and some input requires gradients.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Same-shape elementwise add, or trailing-dimension bias broadcast (b has one
// row and a.cols() columns).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Same-shape elementwise product, or trailing-dimension broadcast as in add.
Tensor mul(const Tensor& a, const Tensor& b);
// Concatenation along the trailing dimension (rows must match).
Tensor concat(const Tensor& a, const Tensor& b);
// Stack pieces vertically (column counts must match).
Tensor concat_rows(const std::vector<Tensor>& pieces);
Tensor slice_rows(const Tensor& x, Index start, Index count);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope);
Tensor elu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
// x*ln(x) elementwise with the 0*ln(0) = 0 convention; entries <= 0 map to 0.
Tensor xlogx(const Tensor& x);
// a*x + b with scalar constants.
Tensor affine(const Tensor& x, double a, double b);
Tensor scale(const Tensor& x, double a);

// Row-wise softmax with max-subtraction stabilization.
Tensor softmax_lastdim(const Tensor& x);
// Row-wise softmax restricted to entries where mask != 0; masked outputs are
// exactly zero. Every row must have at least one unmasked entry.
Tensor masked_softmax_lastdim(const Tensor& x, const Mat& mask);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Row sums: (r x c) -> (r x 1).
Tensor sum_lastdim(const Tensor& x);

// Per-row element pick: out(r, 0) = x(r, index[r]).
Tensor gather_lastdim(const Tensor& x, const std::vector<int>& index);
// Elementwise minimum; ties route the gradient to a.
Tensor minimum(const Tensor& a, const Tensor& b);
// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
Tensor clamp(const Tensor& x, double lo, double hi);

// Grouped attention helpers operating on row blocks of size n (rows are laid
// out as consecutive groups, e.g. timesteps of an n-node graph).
//   pairwise_sum_blocks: out((g,i), j) = s(g*n+i, 0) + r(g*n+j, 0)
//   block_matmul:        out((g,i), :) = sum_j a((g,i), j) * h((g,j), :)
Tensor pairwise_sum_blocks(const Tensor& s, const Tensor& r, Index n);
Tensor block_matmul(const Tensor& a, const Tensor& h, Index n);

// Dispatcher over the named primitive set; unary ops take one input,
// binary ops two. Used by generic property tests.
enum class Op {
  kMatmul,
  kAdd,
  kMul,
  kConcat,
  kRelu,
  kTanh,
  kSigmoid,
  kSoftmaxLastDim,
  kLog,
  kSum,
  kMean,
  kSquare,
};
Tensor primitive_forward(Op op, const std::vector<Tensor>& inputs);
const char* op_name(Op op);

}  // namespace hamh::nn
