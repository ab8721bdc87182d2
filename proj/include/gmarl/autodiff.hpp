#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gmarl::ad {

// Handle into a Tape; cheap to copy, meaningless across tapes.
struct Var {
  int index = -1;
};

// Reverse-mode differentiation over a linear record of primitive operations.
// Values are dense matrices (column vectors are n-by-1, scalars 1-by-1).
// A tape is built single-threaded, differentiated once via backward(), and
// then read out; distinct tapes are fully independent.
class Tape {
 public:
  // Differentiable input; its gradient is available after backward().
  Var leaf(const Eigen::MatrixXd& value);
  // Non-differentiable input (data, sampled actions, targets).
  Var constant(const Eigen::MatrixXd& value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var tanh(Var a);
  Var softplus(Var a);
  // Stacks a on top of b (column counts must agree).
  Var concat_rows(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);
  // Sum over entries of the elementwise Gaussian log-density
  // -1/2 log(2 pi) - log_std - 1/2 (x - mean)^2 exp(-2 log_std).
  Var gaussian_log_prob(Var x, Var mean, Var log_std);

  const Eigen::MatrixXd& value(Var v) const;
  // Zero until backward() has run; shaped like the node's value.
  const Eigen::MatrixXd& gradient(Var v) const;

  // Accumulates exact adjoints for every node reachable from `output`,
  // which must be scalar. May be called once per tape.
  void backward(Var output);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    kLeaf,
    kConstant,
    kMatmul,
    kAdd,
    kScale,
    kRelu,
    kTanh,
    kSoftplus,
    kConcatRows,
    kSum,
    kMean,
    kGaussianLogProb,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int c = -1;
    double factor = 0.0;
    Eigen::MatrixXd value;
    bool needs_grad = false;
  };

  Var push(Node node);
  const Node& at(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Eigen::MatrixXd> grads_;
};

}  // namespace gmarl::ad
