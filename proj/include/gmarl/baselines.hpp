#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gmarl/filter.hpp"
#include "gmarl/graph_env.hpp"
#include "gmarl/rng.hpp"

namespace gmarl {

// One prediction task extracted from an expansion step: the per-order
// features the filter prediction is linear in, the normalized one-hop signal
// the context layer consumes, and the incoming node's observed value.
struct RegressionInstance {
  Eigen::VectorXd features;  // length K
  double context = 0.0;      // attachment-aggregated signal, scaled by 1/rho
  double truth = 0.0;
};

// Walks a recorded episode and extracts one instance per step.
std::vector<RegressionInstance> regression_instances(
    const RecordedSequence& sequence, int order);

// Closed-form least squares over a whole sequence; the returned taps keep
// h_0 = 0 since that tap never reaches the prediction. Throws
// std::runtime_error when the design matrix is rank-deficient and ridge is
// zero; retry with ridge > 0.
FilterTaps batch_fit(const std::vector<RegressionInstance>& instances,
                     int order, double ridge = 0.0);

// One gradient step on the instantaneous squared loss of a single instance.
FilterTaps online_filter_step(const FilterTaps& taps,
                              const RegressionInstance& instance,
                              double step_size);

// Context layer identical to the policy's, with a linear readout over the
// incoming node's embedding and the aggregated neighbor signal.
struct OnlineGnnParams {
  Eigen::MatrixXd context_w0;        // width x 1
  Eigen::MatrixXd context_w1;        // width x 1
  Eigen::MatrixXd readout_embedding; // 1 x width
  Eigen::MatrixXd readout_signal;    // 1 x 1
};

OnlineGnnParams make_online_gnn(Rng& rng);

double online_gnn_predict(const OnlineGnnParams& params, double context);

OnlineGnnParams online_gnn_step(const OnlineGnnParams& params,
                                const RegressionInstance& instance,
                                double step_size);

// Repeated passes of online steps over a training sequence; how the online
// GNN gets its warm start before evaluation.
OnlineGnnParams pretrain_online_gnn(OnlineGnnParams params,
                                    const std::vector<RegressionInstance>&
                                        instances,
                                    int passes, double step_size);

// Per-step squared errors on an evaluation sequence. The online variants
// predict first, then update on the revealed truth.
std::vector<double> eval_fixed_taps(
    const std::vector<RegressionInstance>& instances, const FilterTaps& taps);
std::vector<double> eval_online_filter(
    const std::vector<RegressionInstance>& instances, FilterTaps taps,
    double step_size);
std::vector<double> eval_online_gnn(
    const std::vector<RegressionInstance>& instances, OnlineGnnParams params,
    double step_size);

}  // namespace gmarl
