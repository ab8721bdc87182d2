#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gmarl/filter.hpp"
#include "gmarl/graph_env.hpp"
#include "gmarl/policy.hpp"
#include "gmarl/rng.hpp"

namespace gmarl {

// One decision step: the tap state around the action, the sampled action with
// its log-density, and the prediction outcome. `context` is the normalized
// one-hop signal the policy consumed, kept so the update can rebuild the
// action distribution on a fresh tape.
struct StepRecord {
  Eigen::VectorXd taps_before;
  Eigen::VectorXd taps_after;
  ActionSample action;
  double context = 0.0;
  double prediction = 0.0;
  double ground_truth = 0.0;
  double loss = 0.0;
  // Loss a noise-free twin of the same policy scores on the same step. Graph
  // growth and signals ignore the actions, so the twin rides identical draws
  // under mean actions and isolates what the exploration noise changed.
  double reference_loss = 0.0;
};

struct EpisodeTrace {
  ExpandingGraphState initial;
  Eigen::VectorXd taps_init;
  std::vector<StepRecord> steps;
};

// Plays one episode: each step expands the graph, lets the policy adjust the
// taps from the expanded topology and the padded signal, then scores the
// filter's prediction of the incoming node's value.
EpisodeTrace rollout(const EnvConfig& config, const PolicyParameters& params,
                     const FilterTaps& taps_init, int horizon, Rng& rng,
                     bool deterministic = false);

// Negated discounted loss of the whole episode: -sum over steps of
// discount^(t-1) * loss_t. Empty episodes score zero.
double discounted_return(const EpisodeTrace& trace, double discount);

// Same sum restarted at from_step (0-based), rediscounted so the first
// counted step carries weight one.
double reward_to_go(const EpisodeTrace& trace, double discount, int from_step);

struct TrainConfig {
  int horizon = 50;
  double discount = 0.95;
  double learning_rate = 5e-4;
  int episodes_per_epoch = 16;
  int epochs = 500;
  double baseline_momentum = 0.9;
  std::uint64_t seed = 0;
  double grad_clip_norm = 5.0;  // 0 disables clipping
  std::string optimizer = "adam";  // or "sgd"
  int workers = 1;  // parallel rollouts per epoch; the result is identical
  // Episodes scored with mean actions on draws that repeat every epoch, so
  // the resulting curve moves only when the policy does. 0 disables it.
  int validation_episodes = 16;
  // Exploration schedule: between these epoch fractions the spread ceiling
  // decays log-linearly from its initial value to the floor. The step size
  // then ramps to zero over a window of the same length, so the run ends at
  // a stationary policy tuned near the mean-action trajectories it is
  // judged on. end <= start disables the schedule.
  double spread_anneal_start = 0.3;
  double spread_anneal_end = 0.5;
};

// Produces the environment for a given episode index. Synthetic training
// repeats one graph; dataset-backed setups resample arrival orders.
using EnvSampler = std::function<EnvConfig(std::uint64_t episode)>;

EnvSampler constant_env(EnvConfig config);

struct LearningCurvePoint {
  int epoch = 0;  // 1-based
  double mean_reward = 0.0;  // sampled training episodes entering the epoch
  double mean_rmse = 0.0;
  // Mean-action reward on the fixed validation draws, measured before the
  // epoch's update; free of sampling noise, it exposes the actual trend.
  double eval_reward = 0.0;
};

struct TrainResult {
  PolicyParameters policy;
  std::vector<LearningCurvePoint> curve;
};

// Policy-gradient training: per epoch, sample episodes and weight each
// step's log-density by how much its reward-to-go beats a noise-free twin
// of the current policy on the same draws, centered by a per-timestep
// moving average and normalized across the epoch, then take one ascent step
// on the mean objective.
TrainResult train(const EnvSampler& sampler, const FilterTaps& taps_init,
                  const TrainConfig& config);

// Per-step RMSE across runs, acting with deterministic (mean) actions.
// RMSE_t = sqrt(mean over runs of the squared error at step t).
std::vector<double> evaluate(const EnvSampler& sampler,
                             const PolicyParameters& params,
                             const FilterTaps& taps_init, int horizon,
                             int runs, std::uint64_t seed);

// Per-step squared losses of a deterministic policy replaying one recorded
// episode; lets the policy be scored on the same draws as the baselines.
std::vector<double> eval_policy_on_sequence(const RecordedSequence& sequence,
                                            const PolicyParameters& params,
                                            const FilterTaps& taps_init);

}  // namespace gmarl
