#include "gmarl/adjacency.hpp"

#include <cmath>
#include <stdexcept>

namespace gmarl {

void AdjacencyMatrix::validate() const {
  if (entries.rows() != entries.cols())
    throw std::invalid_argument("adjacency: matrix not square");
  for (int i = 0; i < n(); ++i) {
    if (entries(i, i) != 0.0)
      throw std::invalid_argument("adjacency: nonzero diagonal");
    for (int j = i + 1; j < n(); ++j) {
      if (entries(i, j) != entries(j, i))
        throw std::invalid_argument("adjacency: not symmetric");
      if (entries(i, j) < 0.0)
        throw std::invalid_argument("adjacency: negative weight");
    }
  }
}

AdjacencyMatrix expand_adjacency(const AdjacencyMatrix& adj,
                                 const AttachmentVector& attachment) {
  const int n = adj.n();
  if (attachment.size() != n)
    throw std::invalid_argument(
        "expand_adjacency: attachment length does not match node count");
  if ((attachment.weights.array() < 0.0).any())
    throw std::invalid_argument("expand_adjacency: negative attachment weight");

  AdjacencyMatrix out;
  out.entries.resize(n + 1, n + 1);
  out.entries.topLeftCorner(n, n) = adj.entries;
  out.entries.col(n).head(n) = attachment.weights;
  out.entries.row(n).head(n) = attachment.weights.transpose();
  out.entries(n, n) = 0.0;
  return out;
}

Eigen::VectorXd degree_vector(const AdjacencyMatrix& adj) {
  return adj.entries.rowwise().sum();
}

double max_degree(const AdjacencyMatrix& adj) {
  if (adj.n() == 0) return 0.0;
  return degree_vector(adj).maxCoeff();
}

double spectral_radius(const AdjacencyMatrix& adj, SpectralCache* cache,
                       int max_iterations, double tolerance) {
  const int n = adj.n();
  if (n == 0) return 0.0;

  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
  if (cache != nullptr && cache->eigenvector.size() > 0 &&
      cache->eigenvector.size() <= n) {
    // Pad the previous eigenvector and blend with the uniform vector so the
    // start keeps nonzero overlap with every component's Perron vector.
    Eigen::VectorXd warm = Eigen::VectorXd::Constant(n, 1e-3);
    warm.head(cache->eigenvector.size()) = cache->eigenvector;
    warm = 0.9 * warm.normalized() + 0.1 * v;
    v = warm.normalized();
  }

  // Iterate on A + cI rather than A: for a bipartite graph the extreme
  // eigenvalues come in a +/- pair of equal magnitude and plain power
  // iteration stalls between them. The shift breaks the tie and leaves the
  // Rayleigh quotient of A itself untouched.
  const double shift = adj.entries.cwiseAbs().rowwise().sum().maxCoeff();
  if (shift == 0.0) {
    if (cache != nullptr) cache->eigenvector = v;
    return 0.0;
  }

  double rho = 0.0;
  Eigen::VectorXd w(n);
  for (int it = 0; it < max_iterations; ++it) {
    w.noalias() = adj.entries * v;
    const double next = v.dot(w);  // Rayleigh quotient at v
    w += shift * v;
    v = w / w.norm();
    const bool converged =
        std::abs(next - rho) <= tolerance * std::max(1.0, std::abs(next));
    rho = next;
    if (converged && it > 0) break;
  }
  if (cache != nullptr) cache->eigenvector = v;
  return rho;
}

}  // namespace gmarl
