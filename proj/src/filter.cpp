#include "gmarl/filter.hpp"

#include <atomic>
#include <stdexcept>

namespace gmarl {

namespace {
std::atomic<long> g_shift_ops{0};
}  // namespace

long shift_operation_count() { return g_shift_ops.load(); }
void reset_shift_operation_count() { g_shift_ops.store(0); }

PaddedSignal PaddedSignal::pad(const Eigen::VectorXd& existing) {
  PaddedSignal padded;
  padded.values.resize(existing.size() + 1);
  padded.values.head(existing.size()) = existing;
  padded.values[existing.size()] = 0.0;
  return padded;
}

Eigen::VectorXd apply_filter(const AdjacencyMatrix& adj,
                             const PaddedSignal& padded,
                             const FilterTaps& taps) {
  const int n = adj.n();
  if (padded.values.size() != n) {
    throw std::invalid_argument("apply_filter: signal length " +
                                std::to_string(padded.values.size()) +
                                " does not match graph size " +
                                std::to_string(n));
  }
  if (taps.order() < 1) {
    throw std::invalid_argument("apply_filter: need at least two taps");
  }

  Eigen::VectorXd out = taps.taps[0] * padded.values;
  Eigen::VectorXd shifted = padded.values;
  for (int k = 1; k <= taps.order(); ++k) {
    shifted = adj.entries * shifted;
    g_shift_ops.fetch_add(1, std::memory_order_relaxed);
    out += taps.taps[k] * shifted;
  }
  return out;
}

Eigen::VectorXd prediction_features(const AdjacencyMatrix& adj_prev,
                                    const AttachmentVector& a,
                                    const Eigen::VectorXd& x_prev,
                                    int order) {
  const int n = adj_prev.n();
  if (a.size() != n || x_prev.size() != n) {
    throw std::invalid_argument(
        "prediction_features: attachment/signal length does not match graph "
        "size " +
        std::to_string(n));
  }
  if (order < 1) {
    throw std::invalid_argument("prediction_features: order must be >= 1");
  }

  // Track the incoming-node entry of repeated shifts on the expanded graph
  // without forming it. Splitting A_expanded^k x_padded into its existing
  // block u_k and incoming entry s_k gives the recurrence
  //   s_k = a.u_{k-1},  u_k = A u_{k-1} + s_{k-1} a,
  // starting from u_0 = x_prev, s_0 = 0. The s_{k-1} a term is what walks
  // that bounce off the incoming node contribute from order three onward.
  Eigen::VectorXd features(order);
  Eigen::VectorXd u = x_prev;
  double s = 0.0;
  for (int k = 1; k <= order; ++k) {
    const double s_next = a.weights.dot(u);
    u = adj_prev.entries * u + s * a.weights;
    s = s_next;
    features[k - 1] = s;
  }
  return features;
}

double predict_incoming(const AdjacencyMatrix& adj_prev,
                        const AttachmentVector& a,
                        const Eigen::VectorXd& x_prev,
                        const FilterTaps& taps) {
  const Eigen::VectorXd features =
      prediction_features(adj_prev, a, x_prev, taps.order());
  return taps.taps.tail(taps.order()).dot(features);
}

double prediction_loss(double prediction, double truth) {
  const double diff = prediction - truth;
  return diff * diff;
}

}  // namespace gmarl
