#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmarl/adjacency.hpp"
#include "gmarl/autodiff.hpp"
#include "gmarl/filter.hpp"
#include "gmarl/rng.hpp"

namespace gmarl {

// Dense perceptron with tanh hidden layers and a linear output layer.
struct Mlp {
  struct Layer {
    Eigen::MatrixXd weight;
    Eigen::MatrixXd bias;  // column vector
  };
  std::vector<Layer> layers;

  int input_size() const {
    return static_cast<int>(layers.front().weight.cols());
  }
  int output_size() const {
    return static_cast<int>(layers.back().weight.rows());
  }
};

// All trainable state of the tap-update policy. The parameter count is fixed
// by the filter order and embedding widths, never by the graph size, which is
// what lets one trained policy run on graphs of any size.
struct PolicyParameters {
  Eigen::MatrixXd context_w0;   // width x 1, weights on the node's own signal
  Eigen::MatrixXd context_w1;   // width x 1, weights on the shifted signal
  Mlp aggregation;              // per-agent message network
  Mlp update;                   // embedding network after aggregation
  Eigen::MatrixXd head_weight;  // 1 x embed
  Eigen::MatrixXd head_bias;    // 1 x 1
  Eigen::MatrixXd log_spread;   // (K+1) x 1, per-agent action log-stddev

  int order() const { return static_cast<int>(log_spread.rows()) - 1; }
  int context_width() const { return static_cast<int>(context_w1.rows()); }

  // Visits every tensor in a fixed order with a stable name; the same order
  // is used for lifting onto tapes, serialization, and optimizer state.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("context_w0", self.context_w0);
    fn("context_w1", self.context_w1);
    for (size_t i = 0; i < self.aggregation.layers.size(); ++i) {
      const std::string tag = "aggregation." + std::to_string(i);
      fn(tag + ".weight", self.aggregation.layers[i].weight);
      fn(tag + ".bias", self.aggregation.layers[i].bias);
    }
    for (size_t i = 0; i < self.update.layers.size(); ++i) {
      const std::string tag = "update." + std::to_string(i);
      fn(tag + ".weight", self.update.layers[i].weight);
      fn(tag + ".bias", self.update.layers[i].bias);
    }
    fn("head_weight", self.head_weight);
    fn("head_bias", self.head_bias);
    fn("log_spread", self.log_spread);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    visit(*this, fn);
  }

  // Throws std::invalid_argument on inconsistent shapes or non-finite values.
  void validate() const;
};

// Fresh policy for the given filter order: 32-wide context layer, message and
// update perceptrons with (32, 64, 32) units, weights uniform in
// [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero, action spread 0.05.
PolicyParameters make_policy(int order, Rng& rng);

PolicyParameters zeros_like(const PolicyParameters& shape);

// Tensors in visit order; lets optimizers walk two parameter sets in step.
std::vector<Eigen::MatrixXd*> tensor_list(PolicyParameters& params);
std::vector<const Eigen::MatrixXd*> tensor_list(const PolicyParameters& params);

// Communication topology over the K+1 agents (one agent per filter tap).
struct AgentGraph {
  std::vector<std::vector<int>> neighbors;

  int count() const { return static_cast<int>(neighbors.size()); }
  static AgentGraph complete(int count);
};

// Normalized one-hop signal arriving at the incoming node: entry N_t of
// (A/rho) * padded. This scalar is the only graph-dependent input the policy
// needs, which keeps its cost independent of the graph size.
double context_input(const AdjacencyMatrix& adj, const PaddedSignal& padded,
                     double rho = -1.0);

// Incoming-node row of the context layer ReLU(x W0 + (A/rho) x W1).
Eigen::VectorXd context_features(const AdjacencyMatrix& adj,
                                 const PaddedSignal& padded,
                                 const PolicyParameters& params,
                                 double rho = -1.0);

struct ActionSample {
  Eigen::VectorXd action;  // tap changes, length K+1
  double log_prob = 0.0;   // joint Gaussian log-density of the sample
};

// Samples tap changes from the policy. `deterministic` returns the action
// means (log_prob still reports the density of that point). Pass the
// spectral radius when already known; negative recomputes it.
ActionSample policy_forward(const FilterTaps& taps, const AdjacencyMatrix& adj,
                            const PaddedSignal& padded,
                            const PolicyParameters& params, Rng& rng,
                            bool deterministic = false, double rho = -1.0);

// h_t = h_{t-1} + c_t.
FilterTaps apply_action(const FilterTaps& taps, const Eigen::VectorXd& action);

// Parameters lifted onto a tape as differentiable leaves, for training.
struct LiftedMlp {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};
struct LiftedPolicy {
  ad::Var context_w0, context_w1;
  LiftedMlp aggregation, update;
  ad::Var head_weight, head_bias, log_spread;

  // Gradients arranged like the parameters; call after tape.backward().
  PolicyParameters read_gradients(const ad::Tape& tape) const;
};

LiftedPolicy lift_policy(ad::Tape& tape, const PolicyParameters& params);

// Action means for every agent as a (K+1) x 1 variable.
ad::Var policy_mean(ad::Tape& tape, const LiftedPolicy& lifted,
                    const AgentGraph& agents, const FilterTaps& taps,
                    double context_signal);

// Joint log-density of a recorded action under the lifted parameters.
ad::Var policy_log_prob(ad::Tape& tape, const LiftedPolicy& lifted,
                        const AgentGraph& agents, const FilterTaps& taps,
                        double context_signal, const Eigen::VectorXd& action);

// Versioned text checkpoints; save -> load -> save is byte-identical.
void save_policy(const PolicyParameters& params, std::ostream& out);
PolicyParameters load_policy(std::istream& in);
void save_policy_file(const PolicyParameters& params, const std::string& path);
PolicyParameters load_policy_file(const std::string& path);

}  // namespace gmarl
