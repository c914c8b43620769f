#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

namespace dea::ad {

namespace detail {
struct Node;
}

// Reverse-mode autodiff over dense matrices. Values are computed eagerly;
// backward() walks the recorded graph once. Scalars are 1x1 matrices.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Eigen::MatrixXd value);
  static Tensor leaf(Eigen::MatrixXd value);  // participates in gradients

  bool defined() const { return node_ != nullptr; }
  const Eigen::MatrixXd& value() const;
  Eigen::MatrixXd& mutable_value();  // optimizer updates on leaves
  Eigen::MatrixXd grad() const;      // zeros when untouched
  bool requires_grad() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> shared_node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Runs reverse accumulation from a 1x1 loss node.
void backward(const Tensor& loss);

double item(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor hadamard_const(const Tensor& a, const Eigen::MatrixXd& m);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor silu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp01(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor vcat(const std::vector<Tensor>& parts);
Tensor hcat(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, long c0, long n);
// x (R x C) plus a 1 x C row broadcast over all rows
Tensor row_broadcast_add(const Tensor& x, const Tensor& row);
// spatial 2x2 mean pooling over row-major (side x side) tokens
Tensor avg_pool2x2_tokens(const Tensor& x, long side);
// nearest-neighbor 2x upsampling, inverse layout of avg_pool2x2_tokens
Tensor unpool2x2_tokens(const Tensor& x, long side);
// folds each factor x factor patch of row-major (side x side) tokens into one
// row of factor^2 * C channels, patch scanned row-major
Tensor space_to_depth_tokens(const Tensor& x, long side, long factor);
// inverse of space_to_depth_tokens; side is the input (folded) grid side
Tensor depth_to_space_tokens(const Tensor& x, long side, long factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::MatrixXd> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace dea::ad
