#include "gmarl/filter.hpp"

#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "gmarl/rng.hpp"

using namespace gmarl;

namespace {

AdjacencyMatrix random_graph(int n, Rng& rng) {
  AdjacencyMatrix adj = AdjacencyMatrix::zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < 0.6) {
        const double w = rng.uniform(0.1, 2.0);
        adj.entries(i, j) = w;
        adj.entries(j, i) = w;
      }
    }
  }
  return adj;
}

Eigen::VectorXd random_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

AttachmentVector random_attachment(int n, Rng& rng) {
  AttachmentVector a{Eigen::VectorXd::Zero(n)};
  for (int i = 0; i < n; ++i) {
    if (rng.uniform() < 0.5) a.weights[i] = rng.uniform(0.1, 1.5);
  }
  return a;
}

// Independent oracle: explicit dense matrix powers.
Eigen::VectorXd filter_oracle(const AdjacencyMatrix& adj,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& taps) {
  Eigen::MatrixXd power =
      Eigen::MatrixXd::Identity(adj.n(), adj.n());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(adj.n());
  for (int k = 0; k < taps.size(); ++k) {
    out += taps[k] * (power * x);
    power = power * adj.entries;
  }
  return out;
}

}  // namespace

TEST_CASE("padding appends a structural zero") {
  Eigen::VectorXd x(2);
  x << 1.5, -2.0;
  const PaddedSignal padded = PaddedSignal::pad(x);
  REQUIRE(padded.values.size() == 3);
  CHECK(padded.values[0] == 1.5);
  CHECK(padded.values[1] == -2.0);
  CHECK(padded.values[2] == 0.0);
}

TEST_CASE("filter application") {
  AdjacencyMatrix three = AdjacencyMatrix::zero(3);
  three.entries(0, 1) = 1.0;
  three.entries(1, 0) = 1.0;
  Eigen::VectorXd padded(3);
  padded << 1, 2, 0;

  SUBCASE("identity tap passes the signal through") {
    FilterTaps taps{Eigen::Vector4d{1, 0, 0, 0}};
    CHECK(apply_filter(three, PaddedSignal{padded}, taps) == padded);
  }

  SUBCASE("pure one-hop tap shifts once") {
    FilterTaps taps{Eigen::Vector4d{0, 1, 0, 0}};
    Eigen::VectorXd expected(3);
    expected << 2, 1, 0;
    CHECK(apply_filter(three, PaddedSignal{padded}, taps) == expected);
  }

  SUBCASE("matches the dense matrix-power oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 60; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_index(5));
      const int order = 1 + static_cast<int>(rng.uniform_index(4));
      const AdjacencyMatrix adj = random_graph(n, rng);
      const Eigen::VectorXd x = random_vector(n, rng);
      const FilterTaps taps{random_vector(order + 1, rng)};
      const Eigen::VectorXd got = apply_filter(adj, PaddedSignal{x}, taps);
      const Eigen::VectorXd want = filter_oracle(adj, x, taps.taps);
      REQUIRE(got.size() == want.size());
      for (int i = 0; i < got.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
      }
    }
  }

  SUBCASE("linear in the signal") {
    Rng rng(29);
    const AdjacencyMatrix adj = random_graph(5, rng);
    const Eigen::VectorXd x = random_vector(5, rng);
    const FilterTaps taps{random_vector(4, rng)};
    const double alpha = -2.75;
    const Eigen::VectorXd direct =
        apply_filter(adj, PaddedSignal{alpha * x}, taps);
    const Eigen::VectorXd scaled =
        alpha * apply_filter(adj, PaddedSignal{x}, taps);
    for (int i = 0; i < direct.size(); ++i) {
      CHECK(direct[i] == doctest::Approx(scaled[i]).epsilon(1e-12));
    }
  }

  SUBCASE("rejects mismatched dimensions") {
    FilterTaps taps{Eigen::Vector4d{1, 0, 0, 0}};
    Eigen::VectorXd wrong(2);
    wrong << 1, 2;
    CHECK_THROWS_AS(apply_filter(three, PaddedSignal{wrong}, taps),
                    std::invalid_argument);
  }
}

TEST_CASE("incoming-node prediction") {
  SUBCASE("isolated node predicts zero") {
    Rng rng(31);
    const AdjacencyMatrix adj = random_graph(4, rng);
    const Eigen::VectorXd x = random_vector(4, rng);
    const AttachmentVector a{Eigen::VectorXd::Zero(4)};
    const FilterTaps taps{random_vector(4, rng)};
    CHECK(predict_incoming(adj, a, x, taps) == 0.0);
  }

  SUBCASE("zeroth tap never contributes") {
    Rng rng(37);
    const AdjacencyMatrix adj = random_graph(5, rng);
    const Eigen::VectorXd x = random_vector(5, rng);
    const AttachmentVector a = random_attachment(5, rng);
    FilterTaps taps{Eigen::VectorXd::Zero(4)};
    taps.taps[0] = 42.0;
    CHECK(predict_incoming(adj, a, x, taps) == 0.0);

    FilterTaps full{random_vector(4, rng)};
    FilterTaps perturbed = full;
    perturbed.taps[0] += rng.normal() * 10.0;
    CHECK(predict_incoming(adj, a, x, full) ==
          predict_incoming(adj, a, x, perturbed));
  }

  SUBCASE("hand oracle on the two-node edge") {
    AdjacencyMatrix edge = AdjacencyMatrix::zero(2);
    edge.entries << 0, 1, 1, 0;
    Eigen::VectorXd x(2);
    x << 1, 2;
    AttachmentVector a{Eigen::VectorXd::Zero(2)};
    a.weights[0] = 1.0;
    const FilterTaps taps{Eigen::Vector4d{0, 1, 0, 0}};
    CHECK(predict_incoming(edge, a, x, taps) == doctest::Approx(1.0));
  }

  SUBCASE("equals the expanded-graph filter output at the new node") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_index(7));
      const int order = 1 + static_cast<int>(rng.uniform_index(4));
      const AdjacencyMatrix adj = random_graph(n, rng);
      const Eigen::VectorXd x = random_vector(n, rng);
      const AttachmentVector a = random_attachment(n, rng);
      const FilterTaps taps{random_vector(order + 1, rng)};

      const double direct = predict_incoming(adj, a, x, taps);
      const AdjacencyMatrix grown = expand_adjacency(adj, a);
      const Eigen::VectorXd full =
          apply_filter(grown, PaddedSignal::pad(x), taps);
      CHECK(direct == doctest::Approx(full[n]).epsilon(1e-10));
    }
  }

  SUBCASE("rejects mismatched dimensions") {
    Rng rng(43);
    const AdjacencyMatrix adj = random_graph(4, rng);
    const FilterTaps taps{random_vector(4, rng)};
    CHECK_THROWS_AS(predict_incoming(adj, AttachmentVector{Eigen::VectorXd::Zero(3)},
                                     random_vector(4, rng), taps),
                    std::invalid_argument);
    CHECK_THROWS_AS(predict_incoming(adj, random_attachment(4, rng),
                                     random_vector(5, rng), taps),
                    std::invalid_argument);
  }
}

TEST_CASE("squared-error loss") {
  CHECK(prediction_loss(3.0, 3.0) == 0.0);
  CHECK(prediction_loss(0.0, 2.0) == 4.0);
  CHECK(prediction_loss(-1.0, 1.0) == 4.0);
}

TEST_CASE("filter cost is one shift per order") {
  Rng rng(47);
  const AdjacencyMatrix adj = random_graph(6, rng);
  const Eigen::VectorXd x = random_vector(6, rng);
  reset_shift_operation_count();
  apply_filter(adj, PaddedSignal{x}, FilterTaps{random_vector(4, rng)});
  CHECK(shift_operation_count() == 3);
  apply_filter(adj, PaddedSignal{x}, FilterTaps{random_vector(5, rng)});
  CHECK(shift_operation_count() == 7);
  reset_shift_operation_count();
  CHECK(shift_operation_count() == 0);
}
