#include "gmarl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <utility>

#include "gmarl/autodiff.hpp"

namespace gmarl {

namespace {

void validate_config(const TrainConfig& config) {
  if (config.horizon < 1) {
    throw std::invalid_argument("train: horizon must be >= 1");
  }
  if (config.discount < 0.0 || config.discount > 1.0) {
    throw std::invalid_argument("train: discount must lie in [0, 1]");
  }
  if (config.learning_rate < 0.0) {
    throw std::invalid_argument("train: learning rate must be nonnegative");
  }
  if (config.episodes_per_epoch < 1) {
    throw std::invalid_argument("train: episodes_per_epoch must be >= 1");
  }
  if (config.epochs < 0) {
    throw std::invalid_argument("train: epochs must be nonnegative");
  }
  if (config.baseline_momentum < 0.0 || config.baseline_momentum >= 1.0) {
    throw std::invalid_argument("train: baseline_momentum must lie in [0, 1)");
  }
  if (config.grad_clip_norm < 0.0) {
    throw std::invalid_argument("train: grad_clip_norm must be nonnegative");
  }
  if (config.optimizer != "adam" && config.optimizer != "sgd") {
    throw std::invalid_argument("train: optimizer must be \"adam\" or \"sgd\"");
  }
  if (config.workers < 1) {
    throw std::invalid_argument("train: workers must be >= 1");
  }
  if (config.validation_episodes < 0) {
    throw std::invalid_argument("train: validation_episodes must be >= 0");
  }
  if (config.spread_anneal_start < 0.0 || config.spread_anneal_end > 1.0) {
    throw std::invalid_argument(
        "train: spread anneal fractions must lie in [0, 1]");
  }
}

std::vector<double> rewards_to_go(const EpisodeTrace& trace, double discount,
                                  bool reference = false) {
  std::vector<double> rtg(trace.steps.size(), 0.0);
  double acc = 0.0;
  for (int t = static_cast<int>(trace.steps.size()) - 1; t >= 0; --t) {
    const StepRecord& step = trace.steps[static_cast<std::size_t>(t)];
    acc = -(reference ? step.reference_loss : step.loss) + discount * acc;
    rtg[static_cast<std::size_t>(t)] = acc;
  }
  return rtg;
}

}  // namespace

EpisodeTrace rollout(const EnvConfig& config, const PolicyParameters& params,
                     const FilterTaps& taps_init, int horizon, Rng& rng,
                     bool deterministic) {
  if (horizon < 0) {
    throw std::invalid_argument("rollout: horizon must be nonnegative");
  }
  if (taps_init.order() != params.order()) {
    throw std::invalid_argument(
        "rollout: taps order " + std::to_string(taps_init.order()) +
        " does not match policy order " + std::to_string(params.order()));
  }

  EpisodeTrace trace;
  trace.initial = config.initial;
  trace.taps_init = taps_init.taps;
  trace.steps.reserve(static_cast<std::size_t>(horizon));

  ExpandingGraphState state = config.initial;
  FilterTaps taps = taps_init;
  FilterTaps taps_ref = taps_init;
  SpectralCache cache;
  for (int t = 0; t < horizon; ++t) {
    StepResult result =
        env_step(state, config.attachment, config.signal_model, rng, &cache);
    const PaddedSignal padded = PaddedSignal::pad(state.signal);

    StepRecord record;
    record.taps_before = taps.taps;
    record.context = context_input(result.state.adj, padded, result.rho);
    record.action = policy_forward(taps, result.state.adj, padded, params, rng,
                                   deterministic, result.rho);
    const FilterTaps updated = apply_action(taps, record.action.action);
    record.taps_after = updated.taps;
    const Eigen::VectorXd features = prediction_features(
        state.adj, result.attachment, state.signal, updated.order());
    record.prediction = updated.taps.tail(updated.order()).dot(features);
    record.ground_truth = result.ground_truth;
    record.loss = prediction_loss(record.prediction, record.ground_truth);

    // A mean-action twin follows its own taps through the same graph and
    // signal draws. Deterministic replays coincide with it by construction.
    const FilterTaps updated_ref =
        deterministic
            ? updated
            : apply_action(taps_ref,
                           policy_forward(taps_ref, result.state.adj, padded,
                                          params, rng, true, result.rho)
                               .action);
    record.reference_loss = prediction_loss(
        updated_ref.taps.tail(updated_ref.order()).dot(features),
        record.ground_truth);
    trace.steps.push_back(std::move(record));

    taps = updated;
    taps_ref = updated_ref;
    state = std::move(result.state);
  }
  return trace;
}

double reward_to_go(const EpisodeTrace& trace, double discount,
                    int from_step) {
  const int length = static_cast<int>(trace.steps.size());
  if (from_step < 0 || from_step >= length) {
    throw std::invalid_argument(
        "reward_to_go: step " + std::to_string(from_step) +
        " outside episode of length " + std::to_string(length));
  }
  double total = 0.0;
  double weight = 1.0;
  for (int t = from_step; t < length; ++t) {
    total += weight * trace.steps[t].loss;
    weight *= discount;
  }
  return -total;
}

double discounted_return(const EpisodeTrace& trace, double discount) {
  return trace.steps.empty() ? 0.0 : reward_to_go(trace, discount, 0);
}

EnvSampler constant_env(EnvConfig config) {
  return [config = std::move(config)](std::uint64_t) { return config; };
}

TrainResult train(const EnvSampler& sampler, const FilterTaps& taps_init,
                  const TrainConfig& config) {
  validate_config(config);
  if (!sampler) {
    throw std::invalid_argument("train: missing environment sampler");
  }

  Rng root(config.seed);
  Rng init_rng = root.child(0);
  PolicyParameters params = make_policy(taps_init.order(), init_rng);
  const AgentGraph agents = AgentGraph::complete(taps_init.order() + 1);

  PolicyParameters first_moment = zeros_like(params);
  PolicyParameters second_moment = zeros_like(params);
  long update_count = 0;
  const double spread_floor = std::log(1e-3);
  const double spread_start =
      std::max(spread_floor, params.log_spread.maxCoeff());
  const double anneal_from =
      config.spread_anneal_start * static_cast<double>(config.epochs);
  const double anneal_until =
      config.spread_anneal_end * static_cast<double>(config.epochs);
  // Once exploration is pinned at the floor, the advantage normalization
  // keeps rescaling whatever signal is left to unit size, so full-rate
  // updates would walk the policy around its optimum forever. After the
  // anneal the step ramps linearly to zero over a window of the same length,
  // and the parameters then hold still for the rest of the run.
  const double freeze_at = anneal_until + (anneal_until - anneal_from);
  // Per-timestep baseline: reward-to-go shrinks sharply with t, so a single
  // scalar would leave every late step with a systematically positive weight
  // and amplify pure exploration noise into parameter drift.
  std::vector<double> baseline(static_cast<std::size_t>(config.horizon), 0.0);
  bool baseline_ready = false;

  TrainResult result;
  result.curve.reserve(static_cast<std::size_t>(config.epochs));

  // Validation draws repeat every epoch, so the eval curve moves only when
  // the policy does. Env indices and stream ids sit far above anything the
  // per-episode training counters can reach.
  constexpr std::uint64_t kValidationBase = std::uint64_t{1} << 48;
  std::vector<EnvConfig> val_envs;
  val_envs.reserve(static_cast<std::size_t>(config.validation_episodes));
  for (int v = 0; v < config.validation_episodes; ++v) {
    val_envs.push_back(sampler(kValidationBase + static_cast<std::uint64_t>(v)));
  }

  std::uint64_t episode_index = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<EnvConfig> envs;
    std::vector<Rng> streams;
    envs.reserve(static_cast<std::size_t>(config.episodes_per_epoch));
    streams.reserve(static_cast<std::size_t>(config.episodes_per_epoch));
    for (int e = 0; e < config.episodes_per_epoch; ++e) {
      envs.push_back(sampler(episode_index));
      streams.push_back(root.child(1 + episode_index));
      ++episode_index;
    }

    // Rollouts only read the parameters and own their random streams, so the
    // worker count never changes the result.
    std::vector<EpisodeTrace> traces(
        static_cast<std::size_t>(config.episodes_per_epoch));
    auto work = [&](int start) {
      for (int e = start; e < config.episodes_per_epoch;
           e += std::max(1, config.workers)) {
        traces[static_cast<std::size_t>(e)] = rollout(
            envs[static_cast<std::size_t>(e)], params, taps_init,
            config.horizon, streams[static_cast<std::size_t>(e)], false);
      }
    };
    if (config.workers <= 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      const int spawn = std::min(config.workers, config.episodes_per_epoch);
      pool.reserve(static_cast<std::size_t>(spawn));
      for (int w = 0; w < spawn; ++w) pool.emplace_back(work, w);
      for (std::thread& worker : pool) worker.join();
    }

    // Score the pre-update policy with mean actions on the fixed validation
    // draws; like the rollouts above, the episodes are independent.
    std::vector<double> val_returns(val_envs.size(), 0.0);
    auto val_work = [&](int start) {
      for (std::size_t v = static_cast<std::size_t>(start);
           v < val_envs.size();
           v += static_cast<std::size_t>(std::max(1, config.workers))) {
        Rng val_rng = root.child(kValidationBase + static_cast<std::uint64_t>(v));
        const EpisodeTrace trace = rollout(val_envs[v], params, taps_init,
                                           config.horizon, val_rng, true);
        val_returns[v] = discounted_return(trace, config.discount);
      }
    };
    if (!val_envs.empty()) {
      if (config.workers <= 1) {
        val_work(0);
      } else {
        std::vector<std::thread> pool;
        const int spawn =
            std::min(config.workers, static_cast<int>(val_envs.size()));
        pool.reserve(static_cast<std::size_t>(spawn));
        for (int w = 0; w < spawn; ++w) pool.emplace_back(val_work, w);
        for (std::thread& worker : pool) worker.join();
      }
    }

    std::vector<std::vector<double>> rtg(traces.size());
    double reward_sum = 0.0;
    double loss_sum = 0.0;
    long loss_count = 0;
    std::vector<double> epoch_mean_rtg(
        static_cast<std::size_t>(config.horizon), 0.0);
    for (std::size_t e = 0; e < traces.size(); ++e) {
      rtg[e] = rewards_to_go(traces[e], config.discount);
      if (!rtg[e].empty()) reward_sum += rtg[e][0];
      for (const StepRecord& step : traces[e].steps) {
        loss_sum += step.loss;
        ++loss_count;
      }
      // The noise-free twin rode the same graph and signal draws, so its
      // reward-to-go strips both the environment luck and the mean policy's
      // own score out of each step's credit; what is left is the effect of
      // the sampled exploration noise. That same signal reaches the spread
      // parameters, which can then anneal once noise stops paying.
      const std::vector<double> reference =
          rewards_to_go(traces[e], config.discount, true);
      for (std::size_t t = 0; t < rtg[e].size(); ++t) {
        rtg[e][t] -= reference[t];
        epoch_mean_rtg[t] += rtg[e][t];
      }
    }
    for (double& value : epoch_mean_rtg) {
      value /= static_cast<double>(traces.size());
    }

    // The baseline an update sees is built from earlier epochs only, so it
    // stays independent of the episodes it is subtracted from; the first
    // epoch has no history and uses its own means.
    const std::vector<double>& current_baseline =
        baseline_ready ? baseline : epoch_mean_rtg;

    LearningCurvePoint point;
    point.epoch = epoch + 1;
    point.mean_reward = reward_sum / static_cast<double>(traces.size());
    point.mean_rmse = std::sqrt(
        loss_sum / static_cast<double>(std::max<long>(1, loss_count)));
    if (!val_returns.empty()) {
      double val_sum = 0.0;
      for (double value : val_returns) val_sum += value;
      point.eval_reward = val_sum / static_cast<double>(val_returns.size());
    }
    result.curve.push_back(point);

    // Advantage normalization bounds the step weights at unit scale. Losses
    // can explode by orders of magnitude when the means wander; without this
    // an unlucky epoch dominates the update and feeds back on itself.
    std::vector<std::vector<double>> advantage(rtg.size());
    double adv_sum = 0.0;
    double adv_sq = 0.0;
    long adv_count = 0;
    for (std::size_t e = 0; e < rtg.size(); ++e) {
      advantage[e].resize(rtg[e].size());
      for (std::size_t t = 0; t < rtg[e].size(); ++t) {
        const double value = rtg[e][t] - current_baseline[t];
        advantage[e][t] = value;
        adv_sum += value;
        adv_sq += value * value;
        ++adv_count;
      }
    }
    if (adv_count > 0) {
      const double mean = adv_sum / static_cast<double>(adv_count);
      const double variance =
          std::max(0.0, adv_sq / static_cast<double>(adv_count) - mean * mean);
      const double sd = std::sqrt(variance);
      for (auto& column : advantage) {
        for (double& value : column) {
          value = (value - mean) / (sd + 1e-8);
        }
      }
    }

    ad::Tape tape;
    const LiftedPolicy lifted = lift_policy(tape, params);
    const double scale = 1.0 / static_cast<double>(traces.size());
    ad::Var objective;
    bool has_objective = false;
    for (std::size_t e = 0; e < traces.size(); ++e) {
      for (std::size_t t = 0; t < traces[e].steps.size(); ++t) {
        const StepRecord& step = traces[e].steps[t];
        const double weight = advantage[e][t] * scale;
        const FilterTaps taps_before{step.taps_before};
        const ad::Var log_prob = policy_log_prob(
            tape, lifted, agents, taps_before, step.context,
            step.action.action);
        const ad::Var term = tape.scale(log_prob, weight);
        objective = has_objective ? tape.add(objective, term) : term;
        has_objective = true;
      }
    }
    if (has_objective) {
      tape.backward(objective);
      PolicyParameters grads = lifted.read_gradients(tape);

      double norm_sq = 0.0;
      grads.for_each_tensor(
          [&](const std::string& name, const Eigen::MatrixXd& grad) {
            if (!grad.allFinite()) {
              throw std::runtime_error("train: non-finite gradient in " +
                                       name + " at epoch " +
                                       std::to_string(epoch + 1));
            }
            norm_sq += grad.squaredNorm();
          });
      const double norm = std::sqrt(norm_sq);
      if (config.grad_clip_norm > 0.0 && norm > config.grad_clip_norm) {
        const double shrink = config.grad_clip_norm / norm;
        grads.for_each_tensor(
            [&](const std::string&, Eigen::MatrixXd& grad) {
              grad *= shrink;
            });
      }

      ++update_count;
      double step_size = config.learning_rate;
      if (anneal_until > anneal_from &&
          static_cast<double>(epoch + 1) > anneal_until) {
        const double ramp = (freeze_at - static_cast<double>(epoch + 1)) /
                            (freeze_at - anneal_until);
        step_size *= std::clamp(ramp, 0.0, 1.0);
      }
      auto target = tensor_list(params);
      auto gradient = tensor_list(grads);
      auto moment1 = tensor_list(first_moment);
      auto moment2 = tensor_list(second_moment);
      if (config.optimizer == "adam") {
        const double beta1 = 0.9;
        const double beta2 = 0.999;
        const double eps = 1e-8;
        const double bias1 =
            1.0 - std::pow(beta1, static_cast<double>(update_count));
        const double bias2 =
            1.0 - std::pow(beta2, static_cast<double>(update_count));
        for (std::size_t i = 0; i < target.size(); ++i) {
          const Eigen::MatrixXd& grad = *gradient[i];
          Eigen::MatrixXd& m = *moment1[i];
          Eigen::MatrixXd& v = *moment2[i];
          m = beta1 * m + (1.0 - beta1) * grad;
          v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
          *target[i] += step_size *
                        ((m / bias1).array() / ((v / bias2).array().sqrt() + eps))
                            .matrix();
        }
      } else {
        for (std::size_t i = 0; i < target.size(); ++i) {
          *target[i] += step_size * *gradient[i];
        }
      }

      // Keep the exploration spread inside the scheduled band. Without a
      // floor the spread collapses and the score terms 1/sigma^2 blow up on
      // the first unlucky sample; the moving ceiling is the anneal from the
      // config. A zero learning rate must leave every parameter untouched,
      // spread included, so the band only applies when updates can move.
      if (config.learning_rate > 0.0) {
        double progress = 0.0;
        if (anneal_until > anneal_from) {
          progress = std::clamp((static_cast<double>(epoch + 1) - anneal_from) /
                                    (anneal_until - anneal_from),
                                0.0, 1.0);
        }
        const double ceiling =
            progress > 0.0
                ? spread_start + progress * (spread_floor - spread_start)
                : std::log(1.0);
        params.log_spread =
            params.log_spread.cwiseMax(spread_floor).cwiseMin(ceiling);
      }
    }

    if (baseline_ready) {
      for (std::size_t t = 0; t < baseline.size(); ++t) {
        baseline[t] = config.baseline_momentum * baseline[t] +
                      (1.0 - config.baseline_momentum) * epoch_mean_rtg[t];
      }
    } else {
      baseline = epoch_mean_rtg;
      baseline_ready = true;
    }
  }

  result.policy = std::move(params);
  return result;
}

std::vector<double> evaluate(const EnvSampler& sampler,
                             const PolicyParameters& params,
                             const FilterTaps& taps_init, int horizon,
                             int runs, std::uint64_t seed) {
  if (horizon < 1) {
    throw std::invalid_argument("evaluate: horizon must be >= 1");
  }
  if (runs < 1) {
    throw std::invalid_argument("evaluate: runs must be >= 1");
  }
  if (!sampler) {
    throw std::invalid_argument("evaluate: missing environment sampler");
  }

  std::vector<double> sums(static_cast<std::size_t>(horizon), 0.0);
  Rng root(seed);
  for (int run = 0; run < runs; ++run) {
    Rng run_rng = root.child(static_cast<std::uint64_t>(run));
    const EnvConfig env = sampler(static_cast<std::uint64_t>(run));
    const EpisodeTrace trace =
        rollout(env, params, taps_init, horizon, run_rng, true);
    for (int t = 0; t < horizon; ++t) {
      sums[static_cast<std::size_t>(t)] +=
          trace.steps[static_cast<std::size_t>(t)].loss;
    }
  }
  std::vector<double> rmse(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    rmse[static_cast<std::size_t>(t)] = std::sqrt(
        sums[static_cast<std::size_t>(t)] / static_cast<double>(runs));
  }
  return rmse;
}

std::vector<double> eval_policy_on_sequence(const RecordedSequence& sequence,
                                            const PolicyParameters& params,
                                            const FilterTaps& taps_init) {
  const EnvConfig config = make_replay_config(sequence);
  Rng rng(0);  // replay with deterministic actions draws nothing
  const EpisodeTrace trace =
      rollout(config, params, taps_init,
              static_cast<int>(sequence.steps.size()), rng, true);
  std::vector<double> losses;
  losses.reserve(trace.steps.size());
  for (const StepRecord& step : trace.steps) losses.push_back(step.loss);
  return losses;
}

}  // namespace gmarl
