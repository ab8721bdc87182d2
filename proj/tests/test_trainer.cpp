#include "gmarl/trainer.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "gmarl/autodiff.hpp"
#include "gmarl/baselines.hpp"
#include "gmarl/filter.hpp"
#include "gmarl/graph_env.hpp"
#include "gmarl/policy.hpp"
#include "gmarl/rng.hpp"

using namespace gmarl;

namespace {

EnvConfig synthetic_env(std::uint64_t seed) {
  Rng rng(seed);
  EnvConfig config;
  config.initial = initial_synthetic_state(5, rng);
  config.attachment.kind = AttachmentKind::UniformRandom;
  config.attachment.edges_per_node = 2;
  return config;
}

// Two isolated nodes, one scripted arrival, one scripted outcome: a one-step
// decision problem whose optimal first tap is 1.
EnvConfig bandit_env() {
  EnvConfig config;
  config.initial.adj = AdjacencyMatrix::zero(2);
  config.initial.signal = Eigen::Vector2d(10.0, 0.0);
  config.attachment.kind = AttachmentKind::Replay;
  config.attachment.replay_vectors = {
      AttachmentVector{Eigen::Vector2d(0.1, 0.0)}};
  ReplaySignal replay;
  Eigen::VectorXd after(3);
  after << 10.0, 0.0, 1.0;
  replay.signals = {after};
  config.signal_model = replay;
  return config;
}

PolicyParameters zero_action_policy(int order, std::uint64_t seed) {
  Rng rng(seed);
  PolicyParameters params = make_policy(order, rng);
  params.head_weight.setZero();
  params.head_bias.setZero();
  return params;
}

// Rewrites each recorded truth (and its copy inside the stored signal) to be
// exactly what the given taps predict, walking forward so later features see
// the modified signals.
RecordedSequence plant_truths(RecordedSequence seq, const FilterTaps& taps) {
  ExpandingGraphState state = seq.initial;
  const int order = taps.order();
  for (RecordedStep& step : seq.steps) {
    const Eigen::VectorXd features =
        prediction_features(state.adj, step.attachment, state.signal, order);
    const double truth = taps.taps.tail(order).dot(features);
    step.ground_truth = truth;
    step.signal[step.signal.size() - 1] = truth;
    state.adj = expand_adjacency(state.adj, step.attachment);
    state.signal = step.signal;
    state.step += 1;
  }
  return seq;
}

EpisodeTrace fabricated_trace(const std::vector<double>& losses) {
  EpisodeTrace trace;
  for (double loss : losses) {
    StepRecord step;
    step.loss = loss;
    trace.steps.push_back(step);
  }
  return trace;
}

bool same_parameters(const PolicyParameters& a, const PolicyParameters& b) {
  const auto lhs = tensor_list(a);
  const auto rhs = tensor_list(b);
  REQUIRE(lhs.size() == rhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i]->rows() != rhs[i]->rows()) return false;
    if (lhs[i]->cols() != rhs[i]->cols()) return false;
    if (!(*lhs[i] == *rhs[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("a one-step rollout records exactly one decision") {
  const EnvConfig env = synthetic_env(3);
  Rng policy_rng(4);
  const PolicyParameters params = make_policy(3, policy_rng);
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};

  Rng rng(5);
  const EpisodeTrace trace = rollout(env, params, taps, 1, rng);
  REQUIRE(trace.steps.size() == 1);
  CHECK(trace.initial.n() == env.initial.n());
  CHECK(trace.taps_init == taps.taps);

  const StepRecord& step = trace.steps[0];
  CHECK(step.action.action.size() == 4);
  CHECK(step.taps_before == taps.taps);
  CHECK(step.taps_after == (step.taps_before + step.action.action).eval());
  CHECK(step.loss >= 0.0);
  CHECK(step.loss ==
        (step.prediction - step.ground_truth) *
            (step.prediction - step.ground_truth));
}

TEST_CASE("rollouts are reproducible from the seed") {
  const EnvConfig env = synthetic_env(11);
  Rng policy_rng(12);
  const PolicyParameters params = make_policy(3, policy_rng);
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};

  Rng rng_a(77);
  Rng rng_b(77);
  const EpisodeTrace a = rollout(env, params, taps, 8, rng_a);
  const EpisodeTrace b = rollout(env, params, taps, 8, rng_b);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].action.action == b.steps[t].action.action);
    CHECK(a.steps[t].action.log_prob == b.steps[t].action.log_prob);
    CHECK(a.steps[t].prediction == b.steps[t].prediction);
    CHECK(a.steps[t].loss == b.steps[t].loss);
  }
}

TEST_CASE("a zero-action policy reproduces the fixed-taps baseline") {
  Rng rng(21);
  EnvConfig env = synthetic_env(22);
  const RecordedSequence seq = record_sequence(env, 12, rng);
  const auto instances = regression_instances(seq, 3);
  const FilterTaps fitted = batch_fit(instances, 3);

  const PolicyParameters frozen = zero_action_policy(3, 23);
  const std::vector<double> from_policy =
      eval_policy_on_sequence(seq, frozen, fitted);
  const std::vector<double> from_baseline = eval_fixed_taps(instances, fitted);
  REQUIRE(from_policy.size() == from_baseline.size());
  for (std::size_t t = 0; t < from_policy.size(); ++t) {
    CHECK(from_policy[t] == from_baseline[t]);
  }
}

TEST_CASE("returns follow the discounting arithmetic") {
  const EpisodeTrace trace = fabricated_trace({1.0, 2.0, 3.0});

  CHECK(discounted_return(trace, 1.0) == -6.0);
  CHECK(discounted_return(trace, 0.0) == -1.0);
  CHECK(discounted_return(trace, 0.5) == -(1.0 + 0.5 * 2.0 + 0.25 * 3.0));
  CHECK(reward_to_go(trace, 1.0, 1) == -5.0);
  CHECK(reward_to_go(trace, 0.5, 2) == -3.0);
  CHECK(reward_to_go(trace, 0.95, 0) == discounted_return(trace, 0.95));

  const EpisodeTrace quiet = fabricated_trace({0.0, 0.0});
  CHECK(discounted_return(quiet, 0.9) == 0.0);
  CHECK(discounted_return(fabricated_trace({}), 0.9) == 0.0);

  CHECK_THROWS_AS(reward_to_go(trace, 0.9, 3), std::invalid_argument);
  CHECK_THROWS_AS(reward_to_go(trace, 0.9, -1), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves the policy at its initialization") {
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};
  TrainConfig config;
  config.horizon = 3;
  config.episodes_per_epoch = 2;
  config.seed = 9;

  TrainConfig frozen = config;
  frozen.learning_rate = 0.0;
  frozen.epochs = 3;
  TrainConfig untouched = config;
  untouched.epochs = 0;

  const EnvSampler sampler = constant_env(synthetic_env(8));
  const TrainResult a = train(sampler, taps, frozen);
  const TrainResult b = train(sampler, taps, untouched);
  CHECK(same_parameters(a.policy, b.policy));
  CHECK(a.curve.size() == 3);
  CHECK(b.curve.empty());
}

TEST_CASE("the learning curve is indexed by epoch") {
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};
  TrainConfig config;
  config.horizon = 3;
  config.episodes_per_epoch = 2;
  config.epochs = 4;
  config.seed = 5;

  const TrainResult result = train(constant_env(synthetic_env(6)), taps, config);
  REQUIRE(result.curve.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(result.curve[e].epoch == e + 1);
    CHECK(result.curve[e].mean_rmse >= 0.0);
    CHECK(std::isfinite(result.curve[e].mean_reward));
  }
}

TEST_CASE("the worker count never changes the training result") {
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};
  TrainConfig config;
  config.horizon = 4;
  config.episodes_per_epoch = 6;
  config.epochs = 2;
  config.seed = 14;

  TrainConfig parallel = config;
  parallel.workers = 3;

  const EnvSampler sampler = constant_env(synthetic_env(15));
  const TrainResult serial_result = train(sampler, taps, config);
  const TrainResult parallel_result = train(sampler, taps, parallel);
  CHECK(same_parameters(serial_result.policy, parallel_result.policy));
  REQUIRE(serial_result.curve.size() == parallel_result.curve.size());
  for (std::size_t e = 0; e < serial_result.curve.size(); ++e) {
    CHECK(serial_result.curve[e].mean_reward ==
          parallel_result.curve[e].mean_reward);
  }
}

TEST_CASE("evaluation is deterministic and scores perfect taps at zero") {
  Rng rng(31);
  EnvConfig env = synthetic_env(32);
  const RecordedSequence raw = record_sequence(env, 10, rng);

  FilterTaps planted{Eigen::VectorXd::Zero(4)};
  planted.taps << 0.0, 0.8, -0.3, 0.2;
  const RecordedSequence seq = plant_truths(raw, planted);
  const EnvSampler sampler = constant_env(make_replay_config(seq));
  const PolicyParameters frozen = zero_action_policy(3, 33);

  const std::vector<double> rmse = evaluate(sampler, frozen, planted, 10, 3, 1);
  REQUIRE(rmse.size() == 10);
  for (double value : rmse) CHECK(value == 0.0);

  const std::vector<double> again = evaluate(sampler, frozen, planted, 10, 3, 1);
  CHECK(rmse == again);
}

TEST_CASE("evaluation horizons may exceed the training horizon") {
  Rng policy_rng(41);
  const PolicyParameters params = make_policy(3, policy_rng);
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};
  const std::vector<double> rmse =
      evaluate(constant_env(synthetic_env(42)), params, taps, 60, 2, 7);
  CHECK(rmse.size() == 60);
  for (double value : rmse) CHECK(std::isfinite(value));
}

TEST_CASE("training solves the one-step bandit") {
  const FilterTaps taps{Eigen::VectorXd::Zero(4)};
  TrainConfig config;
  config.horizon = 1;
  config.learning_rate = 2e-3;
  config.episodes_per_epoch = 16;
  config.epochs = 2000;
  config.seed = 3;

  const TrainResult result = train(constant_env(bandit_env()), taps, config);

  Rng rng(99);
  const EpisodeTrace trace =
      rollout(bandit_env(), result.policy, taps, 1, rng, true);
  const double learned = trace.steps[0].taps_after[1];
  CAPTURE(learned);
  CHECK(std::abs(learned - 1.0) < 0.1);
  CHECK(result.curve.back().mean_reward > result.curve.front().mean_reward);
}

TEST_CASE("the score-weighted gradient estimator is unbiased") {
  const int dim = 4;
  Eigen::MatrixXd mu(dim, 1);
  mu << 0.3, 0.2, -0.1, 0.4;
  const double sigma = 0.5;
  const Eigen::MatrixXd log_std =
      Eigen::MatrixXd::Constant(dim, 1, std::log(sigma));

  // Reward of an action vector c, mirroring the bandit's loss surface.
  auto reward = [](const Eigen::VectorXd& c) {
    const double err = c[1] + 0.01 * c[3] - 1.0;
    return -err * err;
  };

  const int episodes = 10000;
  Rng rng(17);
  Eigen::VectorXd sum_mu = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sumsq_mu = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sum_ls = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sumsq_ls = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd score_sum_mu = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd score_sumsq_mu = Eigen::VectorXd::Zero(dim);

  for (int episode = 0; episode < episodes; ++episode) {
    Eigen::MatrixXd action(dim, 1);
    for (int i = 0; i < dim; ++i) {
      action(i, 0) = mu(i, 0) + sigma * rng.normal();
    }

    ad::Tape tape;
    const ad::Var mean_leaf = tape.leaf(mu);
    const ad::Var spread_leaf = tape.leaf(log_std);
    const ad::Var log_prob =
        tape.gaussian_log_prob(tape.constant(action), mean_leaf, spread_leaf);
    tape.backward(log_prob);

    const Eigen::VectorXd score_mu = tape.gradient(mean_leaf).col(0);
    const Eigen::VectorXd score_ls = tape.gradient(spread_leaf).col(0);
    const double r = reward(action.col(0));

    sum_mu += r * score_mu;
    sumsq_mu += (r * score_mu).cwiseAbs2();
    sum_ls += r * score_ls;
    sumsq_ls += (r * score_ls).cwiseAbs2();
    score_sum_mu += score_mu;
    score_sumsq_mu += score_mu.cwiseAbs2();
  }

  const double n = static_cast<double>(episodes);
  const double err_mean = mu(1, 0) + 0.01 * mu(3, 0) - 1.0;
  Eigen::VectorXd expected_mu = Eigen::VectorXd::Zero(dim);
  expected_mu[1] = -2.0 * err_mean;
  expected_mu[3] = -0.02 * err_mean;
  Eigen::VectorXd expected_ls = Eigen::VectorXd::Zero(dim);
  expected_ls[1] = -2.0 * sigma * sigma;
  expected_ls[3] = -2.0e-4 * sigma * sigma;

  auto check_within = [n](const Eigen::VectorXd& sum,
                          const Eigen::VectorXd& sumsq,
                          const Eigen::VectorXd& expected, const char* label) {
    for (int i = 0; i < sum.size(); ++i) {
      const double mean = sum[i] / n;
      const double var =
          std::max(0.0, (sumsq[i] - n * mean * mean) / (n - 1.0));
      const double stderr_mean = std::sqrt(var / n);
      CAPTURE(label);
      CAPTURE(i);
      CAPTURE(mean);
      CAPTURE(expected[i]);
      CHECK(std::abs(mean - expected[i]) < 3.0 * stderr_mean + 1e-12);
    }
  };
  check_within(sum_mu, sumsq_mu, expected_mu, "mean parameters");
  check_within(sum_ls, sumsq_ls, expected_ls, "spread parameters");

  // A constant baseline shifts the estimate by b times the mean score, which
  // must be statistically indistinguishable from zero.
  check_within(score_sum_mu, score_sumsq_mu, Eigen::VectorXd::Zero(dim),
               "bare scores");
}
