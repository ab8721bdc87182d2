#include "gmarl/policy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "gmarl/graph_env.hpp"

using namespace gmarl;

namespace {

AdjacencyMatrix random_expanded_graph(int n, Rng& rng) {
  // Random graph whose last node joined with a couple of edges.
  AdjacencyMatrix adj = AdjacencyMatrix::zero(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    for (int j = i + 1; j < n - 1; ++j) {
      if (rng.uniform() < 0.5) {
        const double w = rng.uniform(0.2, 1.5);
        adj.entries(i, j) = w;
        adj.entries(j, i) = w;
      }
    }
  }
  AttachmentVector a{Eigen::VectorXd::Zero(n - 1)};
  a.weights[rng.uniform_index(n - 1)] = rng.uniform(0.5, 1.0);
  a.weights[rng.uniform_index(n - 1)] = rng.uniform(0.5, 1.0);
  return expand_adjacency(adj, a);
}

PaddedSignal random_padded(int n, Rng& rng) {
  Eigen::VectorXd existing(n - 1);
  for (int i = 0; i < n - 1; ++i) existing[i] = rng.normal();
  return PaddedSignal::pad(existing);
}

double eval_log_prob(const PolicyParameters& params, const FilterTaps& taps,
                     double signal, const Eigen::VectorXd& action) {
  ad::Tape tape;
  const LiftedPolicy lifted = lift_policy(tape, params);
  const AgentGraph agents = AgentGraph::complete(params.order() + 1);
  return tape.value(
      policy_log_prob(tape, lifted, agents, taps, signal, action))(0, 0);
}

PolicyParameters grad_log_prob(const PolicyParameters& params,
                               const FilterTaps& taps, double signal,
                               const Eigen::VectorXd& action) {
  ad::Tape tape;
  const LiftedPolicy lifted = lift_policy(tape, params);
  const AgentGraph agents = AgentGraph::complete(params.order() + 1);
  const ad::Var lp =
      policy_log_prob(tape, lifted, agents, taps, signal, action);
  tape.backward(lp);
  return lifted.read_gradients(tape);
}

}  // namespace

TEST_CASE("context features") {
  Rng rng(61);
  PolicyParameters params = make_policy(3, rng);

  SUBCASE("zero signal gives zero context") {
    const AdjacencyMatrix adj = random_expanded_graph(6, rng);
    const PaddedSignal padded{Eigen::VectorXd::Zero(6)};
    CHECK(context_features(adj, padded, params).isZero());
  }

  SUBCASE("isolated incoming node gives zero context") {
    AdjacencyMatrix adj = AdjacencyMatrix::zero(4);
    adj.entries(0, 1) = adj.entries(1, 0) = 1.0;
    adj.entries(1, 2) = adj.entries(2, 1) = 1.0;  // node 3 stays isolated
    Rng rng_sig(5);
    const PaddedSignal padded = random_padded(4, rng_sig);
    params.context_w0.setZero();
    CHECK(context_features(adj, padded, params).isZero());
  }

  SUBCASE("matches the full-matrix layer formula") {
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 4 + static_cast<int>(rng.uniform_index(5));
      const AdjacencyMatrix adj = random_expanded_graph(n, rng);
      const PaddedSignal padded = random_padded(n, rng);
      const double rho = spectral_radius(adj);

      // Oracle: run the layer on every node, then take the last row.
      const Eigen::MatrixXd shifted =
          adj.entries * padded.values / (rho > 0.0 ? rho : 1.0);
      const Eigen::MatrixXd full =
          (padded.values * params.context_w0.transpose() +
           shifted * params.context_w1.transpose())
              .cwiseMax(0.0);
      const Eigen::VectorXd got = context_features(adj, padded, params);
      const Eigen::VectorXd want = full.row(n - 1).transpose();
      for (int i = 0; i < got.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
      }
    }
  }

  SUBCASE("invariant under relabeling of existing nodes") {
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 5 + static_cast<int>(rng.uniform_index(4));
      const AdjacencyMatrix adj = random_expanded_graph(n, rng);
      const PaddedSignal padded = random_padded(n, rng);
      const Eigen::VectorXd base = context_features(adj, padded, params);

      std::vector<int> perm(n - 1);
      for (int i = 0; i < n - 1; ++i) perm[i] = i;
      rng.shuffle(perm);
      perm.push_back(n - 1);  // incoming node keeps its slot

      AdjacencyMatrix relabeled = AdjacencyMatrix::zero(n);
      PaddedSignal moved{Eigen::VectorXd::Zero(n)};
      for (int i = 0; i < n; ++i) {
        moved.values[perm[i]] = padded.values[i];
        for (int j = 0; j < n; ++j) {
          relabeled.entries(perm[i], perm[j]) = adj.entries(i, j);
        }
      }
      const Eigen::VectorXd after = context_features(relabeled, moved, params);
      for (int i = 0; i < base.size(); ++i) {
        CHECK(after[i] == doctest::Approx(base[i]).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("policy forward") {
  Rng rng(67);
  const PolicyParameters params = make_policy(3, rng);
  const FilterTaps taps{Eigen::Vector4d{0.2, -0.4, 0.1, 0.05}};
  const AdjacencyMatrix adj = random_expanded_graph(7, rng);
  const PaddedSignal padded = random_padded(7, rng);

  SUBCASE("deterministic mode returns the means, repeatably") {
    Rng rng_a(1), rng_b(2);
    const ActionSample first =
        policy_forward(taps, adj, padded, params, rng_a, true);
    const ActionSample second =
        policy_forward(taps, adj, padded, params, rng_b, true);
    CHECK(first.action == second.action);
    CHECK(first.log_prob == second.log_prob);

    // And it matches the lifted-tape mean computation.
    ad::Tape tape;
    const LiftedPolicy lifted = lift_policy(tape, params);
    const Eigen::VectorXd means =
        tape.value(policy_mean(tape, lifted, AgentGraph::complete(4), taps,
                               context_input(adj, padded)))
            .col(0);
    CHECK(first.action == means);
  }

  SUBCASE("agents with equal taps produce equal means") {
    const FilterTaps tied{Eigen::Vector4d{0.3, 0.7, 0.3, 0.3}};
    Rng rng_s(3);
    const ActionSample sample =
        policy_forward(tied, adj, padded, params, rng_s, true);
    CHECK(sample.action[0] == doctest::Approx(sample.action[2]).epsilon(1e-12));
    CHECK(sample.action[0] == doctest::Approx(sample.action[3]).epsilon(1e-12));
  }

  SUBCASE("sampled actions report their exact density") {
    Rng rng_mean(4);
    const ActionSample means =
        policy_forward(taps, adj, padded, params, rng_mean, true);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Rng rng_s(seed);
      const ActionSample sample =
          policy_forward(taps, adj, padded, params, rng_s);
      double oracle = 0.0;
      for (int k = 0; k < 4; ++k) {
        const double sd = std::exp(params.log_spread(k, 0));
        const double diff = sample.action[k] - means.action[k];
        oracle += std::log(std::exp(-0.5 * diff * diff / (sd * sd)) /
                           (sd * std::sqrt(2.0 * M_PI)));
      }
      CHECK(std::exp(sample.log_prob) ==
            doctest::Approx(std::exp(oracle)).epsilon(1e-10));
    }
  }

  SUBCASE("same seed reproduces the same sample") {
    Rng rng_a(9), rng_b(9);
    const ActionSample a = policy_forward(taps, adj, padded, params, rng_a);
    const ActionSample b = policy_forward(taps, adj, padded, params, rng_b);
    CHECK(a.action == b.action);
    CHECK(a.log_prob == b.log_prob);
  }

  SUBCASE("runs unchanged on graphs of any size") {
    Rng rng_s(11);
    AdjacencyMatrix tiny = AdjacencyMatrix::zero(1);
    const AdjacencyMatrix small =
        expand_adjacency(tiny, AttachmentVector{Eigen::VectorXd::Ones(1)});
    const PaddedSignal small_sig{Eigen::Vector2d{1.0, 0.0}};
    const ActionSample on_small =
        policy_forward(taps, small, small_sig, params, rng_s, true);
    CHECK(on_small.action.size() == 4);

    const AdjacencyMatrix large = random_expanded_graph(60, rng_s);
    const PaddedSignal large_sig = random_padded(60, rng_s);
    const ActionSample on_large =
        policy_forward(taps, large, large_sig, params, rng_s, true);
    CHECK(on_large.action.size() == 4);
  }

  SUBCASE("order mismatch is rejected") {
    const FilterTaps wrong{Eigen::Vector3d{1, 0, 0}};
    Rng rng_s(13);
    CHECK_THROWS_AS(policy_forward(wrong, adj, padded, params, rng_s),
                    std::invalid_argument);
  }
}

TEST_CASE("policy gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed * 31 + 7);
    PolicyParameters params = make_policy(3, rng);
    // The head ships zeroed; give it weight so gradients reach every layer.
    for (int j = 0; j < params.head_weight.cols(); ++j) {
      params.head_weight(0, j) = rng.uniform(-0.5, 0.5);
    }
    const FilterTaps taps{Eigen::Vector4d{0.1, 0.8, -0.3, 0.2}};
    const double signal = rng.uniform(0.3, 1.2);
    Eigen::VectorXd action(4);
    for (int k = 0; k < 4; ++k) action[k] = 0.1 * rng.normal();

    const PolicyParameters analytic =
        grad_log_prob(params, taps, signal, action);

    // The incoming node's own-signal weights cannot reach the output.
    CHECK(analytic.context_w0.isZero());

    std::vector<Eigen::MatrixXd*> tensors = tensor_list(params);
    std::vector<const Eigen::MatrixXd*> grads =
        tensor_list(const_cast<const PolicyParameters&>(analytic));
    const double step = 1e-5;
    for (size_t t = 0; t < tensors.size(); ++t) {
      Eigen::MatrixXd& tensor = *tensors[t];
      const int samples =
          std::min<int>(4, static_cast<int>(tensor.size()));
      for (int s = 0; s < samples; ++s) {
        const int i = static_cast<int>(rng.uniform_index(tensor.rows()));
        const int j = static_cast<int>(rng.uniform_index(tensor.cols()));
        const double saved = tensor(i, j);
        tensor(i, j) = saved + step;
        const double up = eval_log_prob(params, taps, signal, action);
        tensor(i, j) = saved - step;
        const double down = eval_log_prob(params, taps, signal, action);
        tensor(i, j) = saved;
        const double fd = (up - down) / (2.0 * step);
        CAPTURE(t);
        CAPTURE(i);
        CAPTURE(j);
        CHECK((*grads[t])(i, j) == doctest::Approx(fd).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("tap updates") {
  const FilterTaps base{Eigen::Vector4d{1, 0, 0, 0}};
  CHECK(apply_action(base, Eigen::Vector4d::Zero()).taps == base.taps);

  const Eigen::Vector4d change{0.5, -1.0, 2.0, 0.25};
  CHECK(apply_action(FilterTaps{Eigen::Vector4d::Zero()}, change).taps ==
        change);

  const Eigen::Vector4d first{0.1, 0.2, 0.3, 0.4};
  const Eigen::Vector4d second{-0.2, 0.1, 0.0, 1.0};
  const FilterTaps chained =
      apply_action(apply_action(base, first), second);
  const FilterTaps merged = apply_action(base, first + second);
  for (int k = 0; k < 4; ++k) {
    CHECK(chained.taps[k] == doctest::Approx(merged.taps[k]).epsilon(1e-15));
  }

  CHECK_THROWS_AS(apply_action(base, Eigen::Vector3d::Zero()),
                  std::invalid_argument);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  Rng rng(71);
  const PolicyParameters params = make_policy(3, rng);

  std::ostringstream first;
  save_policy(params, first);
  std::istringstream stored(first.str());
  const PolicyParameters loaded = load_policy(stored);
  std::ostringstream second;
  save_policy(loaded, second);
  CHECK(first.str() == second.str());

  // The loaded policy behaves identically.
  const FilterTaps taps{Eigen::Vector4d{0.2, 0.1, -0.1, 0.4}};
  const AdjacencyMatrix adj = random_expanded_graph(6, rng);
  const PaddedSignal padded = random_padded(6, rng);
  Rng rng_a(3), rng_b(3);
  const ActionSample a = policy_forward(taps, adj, padded, params, rng_a);
  const ActionSample b = policy_forward(taps, adj, padded, loaded, rng_b);
  CHECK(a.action == b.action);
  CHECK(a.log_prob == b.log_prob);

  SUBCASE("rejects damaged input") {
    std::istringstream bad_header("not-a-policy\n");
    CHECK_THROWS_AS(load_policy(bad_header), std::runtime_error);

    std::string truncated = first.str();
    truncated.resize(truncated.size() / 2);
    std::istringstream cut(truncated);
    CHECK_THROWS_AS(load_policy(cut), std::runtime_error);
  }
}
