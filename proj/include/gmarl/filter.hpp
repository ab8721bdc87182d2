#pragma once

#include <Eigen/Dense>

#include "gmarl/adjacency.hpp"

namespace gmarl {

// Polynomial filter coefficients h_0..h_K over powers of the adjacency.
struct FilterTaps {
  Eigen::VectorXd taps;

  int order() const { return static_cast<int>(taps.size()) - 1; }
};

// Graph signal extended with a structural zero for the incoming node.
struct PaddedSignal {
  Eigen::VectorXd values;

  static PaddedSignal pad(const Eigen::VectorXd& existing);
};

// y = sum_k h_k A^k x, evaluated by repeated shifts (never dense powers).
Eigen::VectorXd apply_filter(const AdjacencyMatrix& adj,
                             const PaddedSignal& padded,
                             const FilterTaps& taps);

// Per-order prediction features for a node joining with attachment a:
// entry k-1 holds the incoming-node component of A_expanded^k applied to the
// padded signal, for k = 1..order. The prediction is linear in these.
Eigen::VectorXd prediction_features(const AdjacencyMatrix& adj_prev,
                                    const AttachmentVector& a,
                                    const Eigen::VectorXd& x_prev,
                                    int order);

// Filter output at the incoming node, before the node's signal is observed.
// Matches the last entry of apply_filter on the expanded graph exactly; h_0
// never contributes because the padded entry is zero.
double predict_incoming(const AdjacencyMatrix& adj_prev,
                        const AttachmentVector& a,
                        const Eigen::VectorXd& x_prev,
                        const FilterTaps& taps);

double prediction_loss(double prediction, double truth);

// Counts adjacency applications inside apply_filter, for cost assertions.
long shift_operation_count();
void reset_shift_operation_count();

}  // namespace gmarl
