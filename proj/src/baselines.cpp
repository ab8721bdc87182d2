#include "gmarl/baselines.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gmarl/autodiff.hpp"

namespace gmarl {

std::vector<RegressionInstance> regression_instances(
    const RecordedSequence& sequence, int order) {
  if (order < 1) {
    throw std::invalid_argument("regression_instances: order must be >= 1");
  }
  std::vector<RegressionInstance> instances;
  instances.reserve(sequence.steps.size());
  ExpandingGraphState state = sequence.initial;
  SpectralCache cache;
  for (const RecordedStep& step : sequence.steps) {
    RegressionInstance instance;
    instance.features =
        prediction_features(state.adj, step.attachment, state.signal, order);
    instance.truth = step.ground_truth;

    AdjacencyMatrix expanded = expand_adjacency(state.adj, step.attachment);
    const double rho = spectral_radius(expanded, &cache);
    // First feature is the raw one-hop signal a.x; normalize it the same way
    // the policy's context layer does.
    instance.context = rho > 0.0 ? instance.features[0] / rho : 0.0;
    instances.push_back(std::move(instance));

    state.adj = std::move(expanded);
    state.signal = step.signal;
    state.step += 1;
  }
  return instances;
}

FilterTaps batch_fit(const std::vector<RegressionInstance>& instances,
                     int order, double ridge) {
  if (order < 1) {
    throw std::invalid_argument("batch_fit: order must be >= 1");
  }
  if (static_cast<int>(instances.size()) < order) {
    throw std::invalid_argument(
        "batch_fit: need at least " + std::to_string(order) +
        " steps, have " + std::to_string(instances.size()));
  }
  if (ridge < 0.0) {
    throw std::invalid_argument("batch_fit: ridge must be nonnegative");
  }

  const int rows = static_cast<int>(instances.size());
  Eigen::MatrixXd design(rows, order);
  Eigen::VectorXd target(rows);
  for (int t = 0; t < rows; ++t) {
    if (instances[t].features.size() != order) {
      throw std::invalid_argument(
          "batch_fit: feature length mismatch at row " + std::to_string(t));
    }
    design.row(t) = instances[t].features.transpose();
    target[t] = instances[t].truth;
  }

  Eigen::VectorXd solution(order);
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < order) {
      throw std::runtime_error(
          "batch_fit: design matrix is rank-deficient (rank " +
          std::to_string(qr.rank()) + " of " + std::to_string(order) +
          "); retry with ridge > 0");
    }
    solution = qr.solve(target);
  } else {
    const Eigen::MatrixXd normal =
        design.transpose() * design +
        ridge * Eigen::MatrixXd::Identity(order, order);
    solution = Eigen::LDLT<Eigen::MatrixXd>(normal).solve(design.transpose() *
                                                          target);
  }

  FilterTaps taps{Eigen::VectorXd::Zero(order + 1)};
  taps.taps.tail(order) = solution;
  return taps;
}

FilterTaps online_filter_step(const FilterTaps& taps,
                              const RegressionInstance& instance,
                              double step_size) {
  const int order = taps.order();
  if (instance.features.size() != order) {
    throw std::invalid_argument("online_filter_step: feature length " +
                                std::to_string(instance.features.size()) +
                                " does not match order " +
                                std::to_string(order));
  }
  const double prediction = taps.taps.tail(order).dot(instance.features);
  const double residual = prediction - instance.truth;
  FilterTaps next = taps;
  next.taps.tail(order) -= step_size * 2.0 * residual * instance.features;
  return next;
}

OnlineGnnParams make_online_gnn(Rng& rng) {
  constexpr int kWidth = 32;
  auto uniform_fan = [&rng](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    return w;
  };
  OnlineGnnParams params;
  params.context_w0 = uniform_fan(kWidth, 1);
  params.context_w1 = uniform_fan(kWidth, 1);
  params.readout_embedding = uniform_fan(1, kWidth);
  params.readout_signal = uniform_fan(1, 1);
  return params;
}

double online_gnn_predict(const OnlineGnnParams& params, double context) {
  const Eigen::VectorXd embedding =
      (context * params.context_w1).col(0).cwiseMax(0.0);
  return params.readout_embedding.row(0).dot(embedding) +
         params.readout_signal(0, 0) * context;
}

OnlineGnnParams online_gnn_step(const OnlineGnnParams& params,
                                const RegressionInstance& instance,
                                double step_size) {
  ad::Tape tape;
  const ad::Var w1 = tape.leaf(params.context_w1);
  const ad::Var readout_embedding = tape.leaf(params.readout_embedding);
  const ad::Var readout_signal = tape.leaf(params.readout_signal);

  // The incoming node's own entry is structurally zero, so W0 never reaches
  // the prediction (same situation as the policy's context layer); it is
  // carried but not updated.
  const ad::Var embedding = tape.relu(tape.scale(w1, instance.context));
  const ad::Var prediction =
      tape.add(tape.matmul(readout_embedding, embedding),
               tape.scale(readout_signal, instance.context));
  const ad::Var residual =
      tape.add(prediction,
               tape.constant(Eigen::MatrixXd::Constant(1, 1, -instance.truth)));
  const ad::Var loss = tape.matmul(residual, residual);
  tape.backward(loss);

  auto checked = [](const Eigen::MatrixXd& grad, const char* name) {
    if (!grad.allFinite()) {
      throw std::runtime_error(
          std::string("online_gnn_step: non-finite gradient in ") + name);
    }
    return grad;
  };

  OnlineGnnParams next = params;
  next.context_w1 -= step_size * checked(tape.gradient(w1), "context_w1");
  next.readout_embedding -=
      step_size * checked(tape.gradient(readout_embedding),
                          "readout_embedding");
  next.readout_signal -=
      step_size * checked(tape.gradient(readout_signal), "readout_signal");
  return next;
}

OnlineGnnParams pretrain_online_gnn(
    OnlineGnnParams params, const std::vector<RegressionInstance>& instances,
    int passes, double step_size) {
  for (int pass = 0; pass < passes; ++pass) {
    for (const RegressionInstance& instance : instances) {
      params = online_gnn_step(params, instance, step_size);
    }
  }
  return params;
}

std::vector<double> eval_fixed_taps(
    const std::vector<RegressionInstance>& instances, const FilterTaps& taps) {
  std::vector<double> losses;
  losses.reserve(instances.size());
  const int order = taps.order();
  for (const RegressionInstance& instance : instances) {
    const double prediction = taps.taps.tail(order).dot(instance.features);
    losses.push_back(prediction_loss(prediction, instance.truth));
  }
  return losses;
}

std::vector<double> eval_online_filter(
    const std::vector<RegressionInstance>& instances, FilterTaps taps,
    double step_size) {
  std::vector<double> losses;
  losses.reserve(instances.size());
  const int order = taps.order();
  for (const RegressionInstance& instance : instances) {
    const double prediction = taps.taps.tail(order).dot(instance.features);
    losses.push_back(prediction_loss(prediction, instance.truth));
    taps = online_filter_step(taps, instance, step_size);
  }
  return losses;
}

std::vector<double> eval_online_gnn(
    const std::vector<RegressionInstance>& instances, OnlineGnnParams params,
    double step_size) {
  std::vector<double> losses;
  losses.reserve(instances.size());
  for (const RegressionInstance& instance : instances) {
    const double prediction = online_gnn_predict(params, instance.context);
    losses.push_back(prediction_loss(prediction, instance.truth));
    params = online_gnn_step(params, instance, step_size);
  }
  return losses;
}

}  // namespace gmarl
