#include "dea/ad.hpp"

#include <cmath>
#include <functional>
#include <unordered_set>
#include <utility>

#include "dea/error.hpp"

namespace dea::ad {

namespace detail {

struct Node {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void accumulate(const Eigen::MatrixXd& g) {
    if (!requires_grad) return;
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }

  void accumulate_block(long r0, long c0, const Eigen::MatrixXd& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
    grad.block(r0, c0, g.rows(), g.cols()) += g;
  }
};

}  // namespace detail

using detail::Node;

namespace {

Tensor make_node(Eigen::MatrixXd value, std::vector<Tensor> parents,
                 std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    n->parents.push_back(p.shared_node());
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Tensor(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    raise(Errc::shape_mismatch, std::string(op) + ": operand shapes differ");
}

}  // namespace

Tensor Tensor::constant(Eigen::MatrixXd value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

Tensor Tensor::leaf(Eigen::MatrixXd value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

const Eigen::MatrixXd& Tensor::value() const {
  if (!node_) raise(Errc::shape_mismatch, "undefined tensor");
  return node_->value;
}

Eigen::MatrixXd& Tensor::mutable_value() {
  if (!node_) raise(Errc::shape_mismatch, "undefined tensor");
  return node_->value;
}

Eigen::MatrixXd Tensor::grad() const {
  if (!node_) raise(Errc::shape_mismatch, "undefined tensor");
  if (node_->grad.size() == 0)
    return Eigen::MatrixXd::Zero(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    raise(Errc::shape_mismatch, "backward expects a 1x1 loss");
  if (!loss.requires_grad()) return;

  // iterative post-order topological sort over the grad-requiring subgraph
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad = Eigen::MatrixXd::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

double item(const Tensor& t) {
  if (t.rows() != 1 || t.cols() != 1)
    raise(Errc::shape_mismatch, "item expects a 1x1 tensor");
  return t.value()(0, 0);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_node(a.value() + b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_node(a.value() - b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

Tensor neg(const Tensor& a) {
  return make_node(-a.value(), {a},
                   [](Node& self) { self.parents[0]->accumulate(-self.grad); });
}

Tensor scale(const Tensor& a, double c) {
  return make_node(c * a.value(), {a}, [c](Node& self) {
    self.parents[0]->accumulate(c * self.grad);
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_node((a.value().array() + c).matrix(), {a},
                   [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  return make_node(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(self.parents[1]->value));
    self.parents[1]->accumulate(self.grad.cwiseProduct(self.parents[0]->value));
  });
}

Tensor hadamard_const(const Tensor& a, const Eigen::MatrixXd& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    raise(Errc::shape_mismatch, "hadamard_const: shapes differ");
  return make_node(a.value().cwiseProduct(m), {a}, [m](Node& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(m));
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) raise(Errc::shape_mismatch, "matmul: inner dims differ");
  return make_node(a.value() * b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad * self.parents[1]->value.transpose());
    self.parents[1]->accumulate(self.parents[0]->value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) raise(Errc::shape_mismatch, "matmul_nt: inner dims differ");
  return make_node(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad * self.parents[1]->value);
    self.parents[1]->accumulate(self.grad.transpose() * self.parents[0]->value);
  });
}

Tensor transpose(const Tensor& a) {
  return make_node(a.value().transpose(), {a}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

Tensor softmax_rows(const Tensor& a) {
  Eigen::MatrixXd y = a.value();
  for (long r = 0; r < y.rows(); ++r) {
    Eigen::RowVectorXd row = y.row(r);
    double m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    y.row(r) = row / row.sum();
  }
  return make_node(std::move(y), {a}, [](Node& self) {
    const Eigen::MatrixXd& y = self.value;
    const Eigen::MatrixXd& g = self.grad;
    Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum().matrix();
    Eigen::MatrixXd da =
        (y.array() * (g.array().colwise() - dot.array())).matrix();
    self.parents[0]->accumulate(da);
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  const long C = x.cols();
  if (gain.rows() != 1 || gain.cols() != C || bias.rows() != 1 || bias.cols() != C)
    raise(Errc::shape_mismatch, "layer_norm_rows: gain/bias must be 1 x cols");
  Eigen::VectorXd mu = x.value().rowwise().mean();
  Eigen::MatrixXd centered = (x.value().array().colwise() - mu.array()).matrix();
  Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Eigen::MatrixXd xhat = (centered.array().colwise() * inv_std.array()).matrix();
  Eigen::MatrixXd y =
      ((xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
       bias.value().row(0).array())
          .matrix();
  return make_node(std::move(y), {x, gain, bias}, [xhat, inv_std](Node& self) {
    const Eigen::MatrixXd& g = self.grad;
    const long C = g.cols();
    const Eigen::MatrixXd& gn = self.parents[1]->value;
    Eigen::MatrixXd dxhat = (g.array().rowwise() * gn.row(0).array()).matrix();
    Eigen::VectorXd s1 = dxhat.rowwise().sum();
    Eigen::VectorXd s2 = (dxhat.array() * xhat.array()).rowwise().sum().matrix();
    Eigen::MatrixXd dx =
        (((double(C) * dxhat.array()).colwise() - s1.array()) -
         (xhat.array().colwise() * s2.array()))
            .matrix();
    dx = (dx.array().colwise() * (inv_std.array() / double(C))).matrix();
    self.parents[0]->accumulate(dx);
    self.parents[1]->accumulate(
        (g.array() * xhat.array()).colwise().sum().matrix());
    self.parents[2]->accumulate(g.colwise().sum());
  });
}

Tensor silu(const Tensor& a) {
  Eigen::MatrixXd sig = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Eigen::MatrixXd y = a.value().cwiseProduct(sig);
  return make_node(std::move(y), {a}, [sig](Node& self) {
    const Eigen::MatrixXd& x = self.parents[0]->value;
    Eigen::MatrixXd d =
        (sig.array() * (1.0 + x.array() * (1.0 - sig.array()))).matrix();
    self.parents[0]->accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor square(const Tensor& a) {
  return make_node(a.value().array().square().matrix(), {a}, [](Node& self) {
    self.parents[0]->accumulate(
        2.0 * self.grad.cwiseProduct(self.parents[0]->value));
  });
}

Tensor clamp01(const Tensor& a) {
  Eigen::MatrixXd y = a.value().array().max(0.0).min(1.0).matrix();
  return make_node(std::move(y), {a}, [](Node& self) {
    const Eigen::MatrixXd& x = self.parents[0]->value;
    Eigen::ArrayXXd pass =
        ((x.array() > 0.0) && (x.array() < 1.0)).cast<double>();
    self.parents[0]->accumulate((self.grad.array() * pass).matrix());
  });
}

Tensor sum(const Tensor& a) {
  Eigen::MatrixXd y(1, 1);
  y(0, 0) = a.value().sum();
  return make_node(std::move(y), {a}, [](Node& self) {
    self.parents[0]->accumulate(Eigen::MatrixXd::Constant(
        self.parents[0]->value.rows(), self.parents[0]->value.cols(),
        self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = double(a.rows() * a.cols());
  Eigen::MatrixXd y(1, 1);
  y(0, 0) = a.value().sum() / n;
  return make_node(std::move(y), {a}, [n](Node& self) {
    self.parents[0]->accumulate(Eigen::MatrixXd::Constant(
        self.parents[0]->value.rows(), self.parents[0]->value.cols(),
        self.grad(0, 0) / n));
  });
}

Tensor vcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) raise(Errc::shape_mismatch, "vcat: empty input");
  long rows = 0;
  const long cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) raise(Errc::shape_mismatch, "vcat: column mismatch");
    rows += p.rows();
  }
  Eigen::MatrixXd y(rows, cols);
  long r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_node(std::move(y), parts, [](Node& self) {
    long r = 0;
    for (auto& p : self.parents) {
      p->accumulate(self.grad.middleRows(r, p->value.rows()));
      r += p->value.rows();
    }
  });
}

Tensor hcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) raise(Errc::shape_mismatch, "hcat: empty input");
  long cols = 0;
  const long rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) raise(Errc::shape_mismatch, "hcat: row mismatch");
    cols += p.cols();
  }
  Eigen::MatrixXd y(rows, cols);
  long c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_node(std::move(y), parts, [](Node& self) {
    long c = 0;
    for (auto& p : self.parents) {
      p->accumulate(self.grad.middleCols(c, p->value.cols()));
      c += p->value.cols();
    }
  });
}

Tensor slice_cols(const Tensor& a, long c0, long n) {
  if (c0 < 0 || n <= 0 || c0 + n > a.cols())
    raise(Errc::shape_mismatch, "slice_cols: out of range");
  return make_node(a.value().middleCols(c0, n), {a}, [c0](Node& self) {
    self.parents[0]->accumulate_block(0, c0, self.grad);
  });
}

Tensor row_broadcast_add(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    raise(Errc::shape_mismatch, "row_broadcast_add: row must be 1 x cols");
  Eigen::MatrixXd y = x.value().rowwise() + row.value().row(0);
  return make_node(std::move(y), {x, row}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Tensor avg_pool2x2_tokens(const Tensor& x, long side) {
  if (x.rows() != side * side || side % 2 != 0)
    raise(Errc::shape_mismatch, "avg_pool2x2_tokens: bad token layout");
  const long half = side / 2, C = x.cols();
  Eigen::MatrixXd y(half * half, C);
  for (long r = 0; r < half; ++r)
    for (long c = 0; c < half; ++c)
      y.row(r * half + c) =
          0.25 * (x.value().row(2 * r * side + 2 * c) +
                  x.value().row(2 * r * side + 2 * c + 1) +
                  x.value().row((2 * r + 1) * side + 2 * c) +
                  x.value().row((2 * r + 1) * side + 2 * c + 1));
  return make_node(std::move(y), {x}, [side, half](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    if (p->grad.size() == 0)
      p->grad = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
    for (long r = 0; r < half; ++r)
      for (long c = 0; c < half; ++c) {
        Eigen::RowVectorXd g = 0.25 * self.grad.row(r * half + c);
        p->grad.row(2 * r * side + 2 * c) += g;
        p->grad.row(2 * r * side + 2 * c + 1) += g;
        p->grad.row((2 * r + 1) * side + 2 * c) += g;
        p->grad.row((2 * r + 1) * side + 2 * c + 1) += g;
      }
  });
}

Tensor unpool2x2_tokens(const Tensor& x, long side) {
  if (x.rows() != side * side)
    raise(Errc::shape_mismatch, "unpool2x2_tokens: bad token layout");
  const long out_side = side * 2;
  Eigen::MatrixXd y(out_side * out_side, x.cols());
  for (long r = 0; r < side; ++r)
    for (long c = 0; c < side; ++c) {
      y.row(2 * r * out_side + 2 * c) = x.value().row(r * side + c);
      y.row(2 * r * out_side + 2 * c + 1) = x.value().row(r * side + c);
      y.row((2 * r + 1) * out_side + 2 * c) = x.value().row(r * side + c);
      y.row((2 * r + 1) * out_side + 2 * c + 1) = x.value().row(r * side + c);
    }
  return make_node(std::move(y), {x}, [side, out_side](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    if (p->grad.size() == 0)
      p->grad = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
    for (long r = 0; r < side; ++r)
      for (long c = 0; c < side; ++c)
        p->grad.row(r * side + c) +=
            self.grad.row(2 * r * out_side + 2 * c) +
            self.grad.row(2 * r * out_side + 2 * c + 1) +
            self.grad.row((2 * r + 1) * out_side + 2 * c) +
            self.grad.row((2 * r + 1) * out_side + 2 * c + 1);
  });
}

Tensor space_to_depth_tokens(const Tensor& x, long side, long factor) {
  if (x.rows() != side * side || factor <= 0 || side % factor != 0)
    raise(Errc::shape_mismatch, "space_to_depth_tokens: bad token layout");
  const long d = side / factor, C = x.cols();
  Eigen::MatrixXd y(d * d, factor * factor * C);
  for (long r = 0; r < d; ++r)
    for (long c = 0; c < d; ++c)
      for (long pr = 0; pr < factor; ++pr)
        for (long pc = 0; pc < factor; ++pc)
          y.block(r * d + c, (pr * factor + pc) * C, 1, C) =
              x.value().row((r * factor + pr) * side + c * factor + pc);
  return make_node(std::move(y), {x}, [side, d, factor](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    if (p->grad.size() == 0)
      p->grad = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
    const long C = p->value.cols();
    for (long r = 0; r < d; ++r)
      for (long c = 0; c < d; ++c)
        for (long pr = 0; pr < factor; ++pr)
          for (long pc = 0; pc < factor; ++pc)
            p->grad.row((r * factor + pr) * side + c * factor + pc) +=
                self.grad.block(r * d + c, (pr * factor + pc) * C, 1, C);
  });
}

Tensor depth_to_space_tokens(const Tensor& x, long side, long factor) {
  const long C = x.cols() / (factor * factor);
  if (x.rows() != side * side || factor <= 0 || x.cols() != factor * factor * C)
    raise(Errc::shape_mismatch, "depth_to_space_tokens: bad token layout");
  const long out_side = side * factor;
  Eigen::MatrixXd y(out_side * out_side, C);
  for (long r = 0; r < side; ++r)
    for (long c = 0; c < side; ++c)
      for (long pr = 0; pr < factor; ++pr)
        for (long pc = 0; pc < factor; ++pc)
          y.row((r * factor + pr) * out_side + c * factor + pc) =
              x.value().block(r * side + c, (pr * factor + pc) * C, 1, C);
  return make_node(std::move(y), {x}, [side, out_side, factor, C](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    if (p->grad.size() == 0)
      p->grad = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
    for (long r = 0; r < side; ++r)
      for (long c = 0; c < side; ++c)
        for (long pr = 0; pr < factor; ++pr)
          for (long pc = 0; pc < factor; ++pc)
            p->grad.block(r * side + c, (pr * factor + pc) * C, 1, C) +=
                self.grad.row((r * factor + pr) * out_side + c * factor + pc);
  });
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Eigen::MatrixXd g = params_[i].grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Eigen::ArrayXXd mhat = m_[i].array() / bc1;
    Eigen::ArrayXXd vhat = v_[i].array() / bc2;
    params_[i].mutable_value().array() -= lr_ * mhat / (vhat.sqrt() + eps_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace dea::ad
