#pragma once

#include <Eigen/Dense>

namespace gmarl {

// Weighted undirected topology: symmetric, zero diagonal, nonnegative.
struct AdjacencyMatrix {
  Eigen::MatrixXd entries;

  int n() const { return static_cast<int>(entries.rows()); }

  static AdjacencyMatrix zero(int n) {
    return AdjacencyMatrix{Eigen::MatrixXd::Zero(n, n)};
  }

  // Throws std::invalid_argument if the structural invariants are violated.
  void validate() const;
};

// Edge weights linking an incoming node to the existing nodes; all-zero is
// legal (isolated incoming node).
struct AttachmentVector {
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(weights.size()); }
};

// Grows the topology by one node: the input becomes the leading principal
// block, the attachment vector the last column/row, zero at bottom-right.
AdjacencyMatrix expand_adjacency(const AdjacencyMatrix& adj,
                                 const AttachmentVector& attachment);

// Row sums (weighted degrees).
Eigen::VectorXd degree_vector(const AdjacencyMatrix& adj);

double max_degree(const AdjacencyMatrix& adj);

// Warm-start state for the power iteration; keeping the previous dominant
// eigenvector across one-node expansions cuts the iteration count sharply.
struct SpectralCache {
  Eigen::VectorXd eigenvector;
};

// Largest absolute eigenvalue via power iteration (nonnegative symmetric
// input, so this is the Perron value). 100-iteration cap, 1e-9 tolerance.
double spectral_radius(const AdjacencyMatrix& adj,
                       SpectralCache* cache = nullptr, int max_iterations = 100,
                       double tolerance = 1e-9);

}  // namespace gmarl
