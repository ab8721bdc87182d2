#include "gmarl/policy.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gmarl/serialize.hpp"

namespace gmarl {

namespace {

constexpr int kContextWidth = 32;
constexpr double kInitialSpread = 0.01;
constexpr double kHalfLogTwoPi = 0.91893853320467274178;

Eigen::MatrixXd random_weight(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Eigen::MatrixXd w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
  }
  return w;
}

Mlp make_mlp(int input, const std::vector<int>& units, Rng& rng) {
  Mlp mlp;
  int in = input;
  for (int out : units) {
    Mlp::Layer layer;
    layer.weight = random_weight(out, in, rng);
    layer.bias = Eigen::MatrixXd::Zero(out, 1);
    mlp.layers.push_back(std::move(layer));
    in = out;
  }
  return mlp;
}

void validate_mlp(const Mlp& mlp, const std::string& name, int expected_input) {
  if (mlp.layers.empty()) {
    throw std::invalid_argument(name + ": no layers");
  }
  int in = expected_input;
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    const Mlp::Layer& layer = mlp.layers[i];
    if (layer.weight.cols() != in) {
      throw std::invalid_argument(name + " layer " + std::to_string(i) +
                                  ": expected input " + std::to_string(in) +
                                  ", weight has " +
                                  std::to_string(layer.weight.cols()));
    }
    if (layer.bias.rows() != layer.weight.rows() || layer.bias.cols() != 1) {
      throw std::invalid_argument(name + " layer " + std::to_string(i) +
                                  ": bias shape mismatch");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw std::invalid_argument(name + " layer " + std::to_string(i) +
                                  ": non-finite values");
    }
    in = static_cast<int>(layer.weight.rows());
  }
}

ad::Var apply_lifted_mlp(ad::Tape& tape, const LiftedMlp& mlp, ad::Var input) {
  ad::Var h = input;
  for (size_t i = 0; i < mlp.weights.size(); ++i) {
    h = tape.add(tape.matmul(mlp.weights[i], h), mlp.biases[i]);
    if (i + 1 < mlp.weights.size()) h = tape.tanh(h);
  }
  return h;
}

}  // namespace

void PolicyParameters::validate() const {
  if (context_w0.cols() != 1 || context_w1.cols() != 1 ||
      context_w0.rows() != context_w1.rows() || context_w0.rows() < 1) {
    throw std::invalid_argument("policy: context weights must be equal-length "
                                "columns");
  }
  if (!context_w0.allFinite() || !context_w1.allFinite()) {
    throw std::invalid_argument("policy: non-finite context weights");
  }
  const int width = context_width();
  validate_mlp(aggregation, "policy aggregation", 1 + width);
  validate_mlp(update, "policy update", 1 + width + aggregation.output_size());
  if (head_weight.rows() != 1 ||
      head_weight.cols() != update.output_size() || head_bias.rows() != 1 ||
      head_bias.cols() != 1) {
    throw std::invalid_argument("policy: head shape mismatch");
  }
  if (log_spread.cols() != 1 || log_spread.rows() < 2) {
    throw std::invalid_argument(
        "policy: log_spread must be a column with at least two entries");
  }
  if (!head_weight.allFinite() || !head_bias.allFinite() ||
      !log_spread.allFinite()) {
    throw std::invalid_argument("policy: non-finite head or spread values");
  }
}

PolicyParameters make_policy(int order, Rng& rng) {
  if (order < 1) {
    throw std::invalid_argument("make_policy: order must be >= 1");
  }
  const std::vector<int> units = {32, 64, 32};
  PolicyParameters params;
  params.context_w0 = random_weight(kContextWidth, 1, rng);
  params.context_w1 = random_weight(kContextWidth, 1, rng);
  params.aggregation = make_mlp(1 + kContextWidth, units, rng);
  params.update =
      make_mlp(1 + kContextWidth + params.aggregation.output_size(), units,
               rng);
  // The head starts at zero so the initial policy emits zero-mean actions and
  // behaves exactly like its tap initialization; exploration noise alone
  // drives the first gradient signal.
  params.head_weight = Eigen::MatrixXd::Zero(1, params.update.output_size());
  params.head_bias = Eigen::MatrixXd::Zero(1, 1);
  params.log_spread = Eigen::MatrixXd::Constant(order + 1, 1,
                                                std::log(kInitialSpread));
  return params;
}

PolicyParameters zeros_like(const PolicyParameters& shape) {
  PolicyParameters zeros = shape;
  zeros.for_each_tensor(
      [](const std::string&, Eigen::MatrixXd& tensor) { tensor.setZero(); });
  return zeros;
}

std::vector<Eigen::MatrixXd*> tensor_list(PolicyParameters& params) {
  std::vector<Eigen::MatrixXd*> list;
  params.for_each_tensor([&list](const std::string&, Eigen::MatrixXd& tensor) {
    list.push_back(&tensor);
  });
  return list;
}

std::vector<const Eigen::MatrixXd*> tensor_list(
    const PolicyParameters& params) {
  std::vector<const Eigen::MatrixXd*> list;
  params.for_each_tensor(
      [&list](const std::string&, const Eigen::MatrixXd& tensor) {
        list.push_back(&tensor);
      });
  return list;
}

AgentGraph AgentGraph::complete(int count) {
  if (count < 1) {
    throw std::invalid_argument("AgentGraph: need at least one agent");
  }
  AgentGraph graph;
  graph.neighbors.resize(count);
  for (int k = 0; k < count; ++k) {
    for (int j = 0; j < count; ++j) {
      if (j != k) graph.neighbors[k].push_back(j);
    }
  }
  return graph;
}

double context_input(const AdjacencyMatrix& adj, const PaddedSignal& padded,
                     double rho) {
  const int n = adj.n();
  if (padded.values.size() != n) {
    throw std::invalid_argument("context_input: signal length mismatch");
  }
  if (rho < 0.0) rho = spectral_radius(adj);
  const double shifted = adj.entries.row(n - 1).dot(padded.values);
  return rho > 0.0 ? shifted / rho : 0.0;
}

Eigen::VectorXd context_features(const AdjacencyMatrix& adj,
                                 const PaddedSignal& padded,
                                 const PolicyParameters& params, double rho) {
  const double shifted = context_input(adj, padded, rho);
  const double own = padded.values[adj.n() - 1];
  return (own * params.context_w0 + shifted * params.context_w1)
      .col(0)
      .cwiseMax(0.0);
}

LiftedPolicy lift_policy(ad::Tape& tape, const PolicyParameters& params) {
  LiftedPolicy lifted;
  lifted.context_w0 = tape.leaf(params.context_w0);
  lifted.context_w1 = tape.leaf(params.context_w1);
  for (const Mlp::Layer& layer : params.aggregation.layers) {
    lifted.aggregation.weights.push_back(tape.leaf(layer.weight));
    lifted.aggregation.biases.push_back(tape.leaf(layer.bias));
  }
  for (const Mlp::Layer& layer : params.update.layers) {
    lifted.update.weights.push_back(tape.leaf(layer.weight));
    lifted.update.biases.push_back(tape.leaf(layer.bias));
  }
  lifted.head_weight = tape.leaf(params.head_weight);
  lifted.head_bias = tape.leaf(params.head_bias);
  lifted.log_spread = tape.leaf(params.log_spread);
  return lifted;
}

PolicyParameters LiftedPolicy::read_gradients(const ad::Tape& tape) const {
  PolicyParameters grads;
  grads.context_w0 = tape.gradient(context_w0);
  grads.context_w1 = tape.gradient(context_w1);
  for (size_t i = 0; i < aggregation.weights.size(); ++i) {
    grads.aggregation.layers.push_back({tape.gradient(aggregation.weights[i]),
                                        tape.gradient(aggregation.biases[i])});
  }
  for (size_t i = 0; i < update.weights.size(); ++i) {
    grads.update.layers.push_back(
        {tape.gradient(update.weights[i]), tape.gradient(update.biases[i])});
  }
  grads.head_weight = tape.gradient(head_weight);
  grads.head_bias = tape.gradient(head_bias);
  grads.log_spread = tape.gradient(log_spread);
  return grads;
}

ad::Var policy_mean(ad::Tape& tape, const LiftedPolicy& lifted,
                    const AgentGraph& agents, const FilterTaps& taps,
                    double context_signal) {
  const int count = agents.count();
  if (count != taps.order() + 1) {
    throw std::invalid_argument("policy_mean: agent count " +
                                std::to_string(count) + " does not match " +
                                std::to_string(taps.order() + 1) + " taps");
  }

  // Incoming-node row of the context layer. The node's own signal entry is
  // structurally zero at decision time, so the W0 column drops out of this
  // row and only the shifted-signal weights W1 remain.
  const ad::Var context =
      tape.relu(tape.scale(lifted.context_w1, context_signal));

  std::vector<ad::Var> agent_state(count);
  std::vector<ad::Var> message(count);
  for (int k = 0; k < count; ++k) {
    const ad::Var tap =
        tape.constant(Eigen::MatrixXd::Constant(1, 1, taps.taps[k]));
    agent_state[k] = tape.concat_rows(tap, context);
    message[k] = apply_lifted_mlp(tape, lifted.aggregation, agent_state[k]);
  }

  ad::Var means;
  for (int k = 0; k < count; ++k) {
    const std::vector<int>& neighborhood = agents.neighbors[k];
    ad::Var aggregated;
    if (neighborhood.empty()) {
      aggregated = tape.constant(
          Eigen::MatrixXd::Zero(tape.value(message[k]).rows(), 1));
    } else {
      aggregated = message[neighborhood[0]];
      for (size_t i = 1; i < neighborhood.size(); ++i) {
        aggregated = tape.add(aggregated, message[neighborhood[i]]);
      }
      aggregated = tape.scale(aggregated, 1.0 / neighborhood.size());
    }
    const ad::Var embedding = apply_lifted_mlp(
        tape, lifted.update, tape.concat_rows(agent_state[k], aggregated));
    const ad::Var mean_k =
        tape.add(tape.matmul(lifted.head_weight, embedding), lifted.head_bias);
    means = (k == 0) ? mean_k : tape.concat_rows(means, mean_k);
  }
  return means;
}

ad::Var policy_log_prob(ad::Tape& tape, const LiftedPolicy& lifted,
                        const AgentGraph& agents, const FilterTaps& taps,
                        double context_signal, const Eigen::VectorXd& action) {
  if (action.size() != agents.count()) {
    throw std::invalid_argument("policy_log_prob: action length mismatch");
  }
  const ad::Var means =
      policy_mean(tape, lifted, agents, taps, context_signal);
  return tape.gaussian_log_prob(tape.constant(action), means,
                                lifted.log_spread);
}

ActionSample policy_forward(const FilterTaps& taps, const AdjacencyMatrix& adj,
                            const PaddedSignal& padded,
                            const PolicyParameters& params, Rng& rng,
                            bool deterministic, double rho) {
  if (taps.order() != params.order()) {
    throw std::invalid_argument("policy_forward: filter order " +
                                std::to_string(taps.order()) +
                                " does not match policy order " +
                                std::to_string(params.order()));
  }
  const double signal = context_input(adj, padded, rho);

  ad::Tape tape;
  const LiftedPolicy lifted = lift_policy(tape, params);
  const AgentGraph agents = AgentGraph::complete(params.order() + 1);
  const Eigen::VectorXd means =
      tape.value(policy_mean(tape, lifted, agents, taps, signal)).col(0);

  ActionSample sample;
  sample.action.resize(means.size());
  sample.log_prob = 0.0;
  for (int k = 0; k < means.size(); ++k) {
    const double log_sd = params.log_spread(k, 0);
    const double sd = std::exp(log_sd);
    const double value =
        deterministic ? means[k] : means[k] + sd * rng.normal();
    sample.action[k] = value;
    const double standardized = (value - means[k]) / sd;
    sample.log_prob +=
        -kHalfLogTwoPi - log_sd - 0.5 * standardized * standardized;
  }
  return sample;
}

FilterTaps apply_action(const FilterTaps& taps, const Eigen::VectorXd& action) {
  if (action.size() != taps.taps.size()) {
    throw std::invalid_argument("apply_action: length mismatch, " +
                                std::to_string(taps.taps.size()) + " taps vs " +
                                std::to_string(action.size()) + " changes");
  }
  return FilterTaps{taps.taps + action};
}

void save_policy(const PolicyParameters& params, std::ostream& out) {
  out << "gmarl-policy v1\n";
  params.for_each_tensor(
      [&out](const std::string& name, const Eigen::MatrixXd& tensor) {
        out << "tensor " << name << ' ' << tensor.rows() << ' '
            << tensor.cols() << '\n';
        for (int i = 0; i < tensor.rows(); ++i) {
          for (int j = 0; j < tensor.cols(); ++j) {
            if (j > 0) out << ' ';
            out << format_g17(tensor(i, j));
          }
          out << '\n';
        }
      });
  out << "end\n";
}

namespace {

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

std::vector<NamedTensor> read_tensors(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "gmarl-policy v1") {
    throw std::runtime_error("load_policy: missing or unknown header");
  }
  std::vector<NamedTensor> tensors;
  while (std::getline(in, line)) {
    if (line == "end") return tensors;
    std::istringstream header(line);
    std::string keyword, name;
    int rows = 0, cols = 0;
    if (!(header >> keyword >> name >> rows >> cols) || keyword != "tensor" ||
        rows < 1 || cols < 1) {
      throw std::runtime_error("load_policy: bad tensor header: " + line);
    }
    NamedTensor tensor;
    tensor.name = name;
    tensor.value.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) {
        throw std::runtime_error("load_policy: truncated tensor " + name);
      }
      std::istringstream row(line);
      for (int j = 0; j < cols; ++j) {
        if (!(row >> tensor.value(i, j))) {
          throw std::runtime_error("load_policy: bad value in tensor " + name);
        }
      }
    }
    tensors.push_back(std::move(tensor));
  }
  throw std::runtime_error("load_policy: missing end marker");
}

}  // namespace

PolicyParameters load_policy(std::istream& in) {
  const std::vector<NamedTensor> tensors = read_tensors(in);
  size_t cursor = 0;
  auto take = [&](const std::string& name) -> const Eigen::MatrixXd& {
    if (cursor >= tensors.size() || tensors[cursor].name != name) {
      throw std::runtime_error(
          "load_policy: expected tensor '" + name + "', found '" +
          (cursor < tensors.size() ? tensors[cursor].name : "<eof>") + "'");
    }
    return tensors[cursor++].value;
  };
  auto has = [&](const std::string& name) {
    return cursor < tensors.size() && tensors[cursor].name == name;
  };

  PolicyParameters params;
  params.context_w0 = take("context_w0");
  params.context_w1 = take("context_w1");
  for (int i = 0; has("aggregation." + std::to_string(i) + ".weight"); ++i) {
    const std::string tag = "aggregation." + std::to_string(i);
    Mlp::Layer layer;
    layer.weight = take(tag + ".weight");
    layer.bias = take(tag + ".bias");
    params.aggregation.layers.push_back(std::move(layer));
  }
  for (int i = 0; has("update." + std::to_string(i) + ".weight"); ++i) {
    const std::string tag = "update." + std::to_string(i);
    Mlp::Layer layer;
    layer.weight = take(tag + ".weight");
    layer.bias = take(tag + ".bias");
    params.update.layers.push_back(std::move(layer));
  }
  params.head_weight = take("head_weight");
  params.head_bias = take("head_bias");
  params.log_spread = take("log_spread");
  if (cursor != tensors.size()) {
    throw std::runtime_error("load_policy: unexpected tensor '" +
                             tensors[cursor].name + "'");
  }
  params.validate();
  return params;
}

void save_policy_file(const PolicyParameters& params,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_policy_file: cannot open " + path +
                             " for writing");
  }
  save_policy(params, out);
  if (!out) {
    throw std::runtime_error("save_policy_file: write to " + path + " failed");
  }
}

PolicyParameters load_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_policy_file: cannot open " + path +
                             "; run training first or check the path");
  }
  return load_policy(in);
}

}  // namespace gmarl
