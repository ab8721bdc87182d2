#include "gmarl/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gmarl::ad {

namespace {

constexpr double kHalfLogTwoPi = 0.91893853320467274178;

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow on either side.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x))
                 : std::exp(x) / (1.0 + std::exp(x));
}

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(
        std::string(op) + ": shape mismatch, " + std::to_string(a.rows()) +
        "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
        "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::at(Var v) const {
  if (v.index < 0 || v.index >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("Tape: variable does not belong to this tape");
  }
  return nodes_[v.index];
}

Var Tape::leaf(const Eigen::MatrixXd& value) {
  Node node;
  node.op = Op::kLeaf;
  node.value = value;
  node.needs_grad = true;
  return push(std::move(node));
}

Var Tape::constant(const Eigen::MatrixXd& value) {
  Node node;
  node.op = Op::kConstant;
  node.value = value;
  node.needs_grad = false;
  return push(std::move(node));
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.cols() != nb.value.rows()) {
    throw std::invalid_argument(
        "matmul: inner dimensions disagree, " +
        std::to_string(na.value.cols()) + " vs " +
        std::to_string(nb.value.rows()));
  }
  Node node;
  node.op = Op::kMatmul;
  node.a = a.index;
  node.b = b.index;
  node.value = na.value * nb.value;
  node.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(node));
}

Var Tape::add(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  require_same_shape(na.value, nb.value, "add");
  Node node;
  node.op = Op::kAdd;
  node.a = a.index;
  node.b = b.index;
  node.value = na.value + nb.value;
  node.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(node));
}

Var Tape::scale(Var a, double factor) {
  const Node& na = at(a);
  Node node;
  node.op = Op::kScale;
  node.a = a.index;
  node.factor = factor;
  node.value = factor * na.value;
  node.needs_grad = na.needs_grad;
  return push(std::move(node));
}

Var Tape::relu(Var a) {
  const Node& na = at(a);
  Node node;
  node.op = Op::kRelu;
  node.a = a.index;
  node.value = na.value.cwiseMax(0.0);
  node.needs_grad = na.needs_grad;
  return push(std::move(node));
}

Var Tape::tanh(Var a) {
  const Node& na = at(a);
  Node node;
  node.op = Op::kTanh;
  node.a = a.index;
  node.value = na.value.array().tanh();
  node.needs_grad = na.needs_grad;
  return push(std::move(node));
}

Var Tape::softplus(Var a) {
  const Node& na = at(a);
  Node node;
  node.op = Op::kSoftplus;
  node.a = a.index;
  node.value = na.value.unaryExpr(&softplus_scalar);
  node.needs_grad = na.needs_grad;
  return push(std::move(node));
}

Var Tape::concat_rows(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.cols() != nb.value.cols()) {
    throw std::invalid_argument("concat_rows: column counts disagree");
  }
  Node node;
  node.op = Op::kConcatRows;
  node.a = a.index;
  node.b = b.index;
  node.value.resize(na.value.rows() + nb.value.rows(), na.value.cols());
  node.value.topRows(na.value.rows()) = na.value;
  node.value.bottomRows(nb.value.rows()) = nb.value;
  node.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(node));
}

Var Tape::sum(Var a) {
  const Node& na = at(a);
  Node node;
  node.op = Op::kSum;
  node.a = a.index;
  node.value = Eigen::MatrixXd::Constant(1, 1, na.value.sum());
  node.needs_grad = na.needs_grad;
  return push(std::move(node));
}

Var Tape::mean(Var a) {
  const Node& na = at(a);
  if (na.value.size() == 0) {
    throw std::invalid_argument("mean: empty tensor");
  }
  Node node;
  node.op = Op::kMean;
  node.a = a.index;
  node.value = Eigen::MatrixXd::Constant(1, 1, na.value.mean());
  node.needs_grad = na.needs_grad;
  return push(std::move(node));
}

Var Tape::gaussian_log_prob(Var x, Var mean, Var log_std) {
  const Node& nx = at(x);
  const Node& nm = at(mean);
  const Node& ns = at(log_std);
  require_same_shape(nx.value, nm.value, "gaussian_log_prob");
  require_same_shape(nx.value, ns.value, "gaussian_log_prob");
  Node node;
  node.op = Op::kGaussianLogProb;
  node.a = x.index;
  node.b = mean.index;
  node.c = log_std.index;
  const Eigen::ArrayXXd diff = (nx.value - nm.value).array();
  const Eigen::ArrayXXd inv_var = (-2.0 * ns.value.array()).exp();
  const double total = (-kHalfLogTwoPi - ns.value.array() -
                        0.5 * diff.square() * inv_var)
                           .sum();
  node.value = Eigen::MatrixXd::Constant(1, 1, total);
  node.needs_grad = nx.needs_grad || nm.needs_grad || ns.needs_grad;
  return push(std::move(node));
}

const Eigen::MatrixXd& Tape::value(Var v) const { return at(v).value; }

const Eigen::MatrixXd& Tape::gradient(Var v) const {
  const Node& node = at(v);
  if (grads_.empty()) {
    throw std::logic_error("Tape::gradient: backward has not run");
  }
  if (!node.needs_grad) {
    throw std::logic_error("Tape::gradient: node does not require gradients");
  }
  return grads_[v.index];
}

void Tape::backward(Var output) {
  const Node& out = at(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got " +
                                std::to_string(out.value.rows()) + "x" +
                                std::to_string(out.value.cols()));
  }
  if (!grads_.empty()) {
    throw std::logic_error("backward: tape already differentiated");
  }

  grads_.resize(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].needs_grad) {
      grads_[i] = Eigen::MatrixXd::Zero(nodes_[i].value.rows(),
                                        nodes_[i].value.cols());
    }
  }
  if (!out.needs_grad) return;  // nothing on the tape is differentiable
  grads_[output.index](0, 0) = 1.0;

  for (int i = output.index; i >= 0; --i) {
    const Node& node = nodes_[i];
    if (!node.needs_grad) continue;
    const Eigen::MatrixXd& g = grads_[i];
    auto grad_of = [&](int input) -> Eigen::MatrixXd& {
      return grads_[input];
    };
    auto wants = [&](int input) {
      return input >= 0 && nodes_[input].needs_grad;
    };
    switch (node.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kMatmul:
        if (wants(node.a)) {
          grad_of(node.a).noalias() += g * nodes_[node.b].value.transpose();
        }
        if (wants(node.b)) {
          grad_of(node.b).noalias() += nodes_[node.a].value.transpose() * g;
        }
        break;
      case Op::kAdd:
        if (wants(node.a)) grad_of(node.a) += g;
        if (wants(node.b)) grad_of(node.b) += g;
        break;
      case Op::kScale:
        if (wants(node.a)) grad_of(node.a) += node.factor * g;
        break;
      case Op::kRelu:
        if (wants(node.a)) {
          // Subgradient 0 at the kink.
          grad_of(node.a).array() +=
              (nodes_[node.a].value.array() > 0.0).cast<double>() * g.array();
        }
        break;
      case Op::kTanh:
        if (wants(node.a)) {
          grad_of(node.a).array() +=
              (1.0 - node.value.array().square()) * g.array();
        }
        break;
      case Op::kSoftplus:
        if (wants(node.a)) {
          grad_of(node.a).array() +=
              nodes_[node.a].value.unaryExpr(&sigmoid_scalar).array() *
              g.array();
        }
        break;
      case Op::kConcatRows:
        if (wants(node.a)) {
          grad_of(node.a) += g.topRows(nodes_[node.a].value.rows());
        }
        if (wants(node.b)) {
          grad_of(node.b) += g.bottomRows(nodes_[node.b].value.rows());
        }
        break;
      case Op::kSum:
        if (wants(node.a)) {
          grad_of(node.a).array() += g(0, 0);
        }
        break;
      case Op::kMean:
        if (wants(node.a)) {
          grad_of(node.a).array() += g(0, 0) / nodes_[node.a].value.size();
        }
        break;
      case Op::kGaussianLogProb: {
        const double gs = g(0, 0);
        const Eigen::ArrayXXd diff =
            (nodes_[node.a].value - nodes_[node.b].value).array();
        const Eigen::ArrayXXd inv_var =
            (-2.0 * nodes_[node.c].value.array()).exp();
        if (wants(node.a)) {
          grad_of(node.a).array() += -diff * inv_var * gs;
        }
        if (wants(node.b)) {
          grad_of(node.b).array() += diff * inv_var * gs;
        }
        if (wants(node.c)) {
          grad_of(node.c).array() += (diff.square() * inv_var - 1.0) * gs;
        }
        break;
      }
    }
  }
}

}  // namespace gmarl::ad
