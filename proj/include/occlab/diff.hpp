#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace occlab::diff {

using Mat = Eigen::MatrixXd;

// One node in the reverse-mode computation graph. `value` holds the forward
// result (rows = batch, cols = channels); `grad` accumulates additively during
// backward. `pull` propagates this node's grad into its parents.
struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> pull;
  uint64_t visit_token = 0;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using NodePtr = std::shared_ptr<Node>;

// Handle over a graph node. Copies share the node.
class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : node_(std::move(n)) {}

  static Value constant(Mat m);
  static Value param(Mat m);  // leaf with requires_grad

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const;  // value of a 1x1 node

 private:
  NodePtr node_;
};

// Escape hatch for modules that define their own differentiable operation
// (compositing does). `pull` receives the result node with grad filled in.
Value make_op(Mat value, std::vector<Value> parents, std::function<void(Node&)> pull);

// out = x * W + b, b broadcast over rows (b is 1 x C).
Value linear(const Value& x, const Value& weight, const Value& bias);
Value matmul(const Value& a, const Value& b);

// Per-row normalization to zero mean / unit variance, then gain * xhat + shift
// (gain and shift are 1 x C).
Value layer_norm(const Value& x, const Value& gain, const Value& shift, double eps = 1e-6);

// Row-wise softmax, stabilized by max subtraction.
Value softmax(const Value& x);

Value relu(const Value& x);
Value sigmoid(const Value& x);
Value softplus(const Value& x);
Value exp(const Value& x);

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);  // elementwise, same shape
Value div(const Value& a, const Value& b);  // elementwise, same shape
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);

// Forwards the value, blocks gradient flow.
Value detach(const Value& x);

Value sum(const Value& x);        // 1x1
Value mean(const Value& x);       // 1x1
Value mean_rows(const Value& x);  // 1xC column means
Value row_sum(const Value& x);    // Rx1 per-row sums

// Column slice [j0, j0+count).
Value cols(const Value& x, int j0, int count);
Value concat_cols(const Value& a, const Value& b);

// Row selection; backward scatter-adds into the source.
Value gather_rows(const Value& x, const std::vector<int>& idx);
// Places x's rows at idx within a (total_rows x C) zero matrix; backward gathers.
Value scatter_rows(const Value& x, const std::vector<int>& idx, int total_rows);
// Multiplies row i of x by s(i, 0); s is R x 1.
Value rowwise_scale(const Value& x, const Value& s);

// Reverse-mode sweep from a 1x1 loss node. Each reachable node is visited
// exactly once in reverse topological order; parameter grads accumulate, so
// call ParamStore::zero_grads between steps.
void backward(const Value& loss);

}  // namespace occlab::diff
