#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <variant>
#include <vector>

#include "gmarl/adjacency.hpp"
#include "gmarl/rng.hpp"

namespace gmarl {

enum class AttachmentKind { UniformRandom, Preferential, Replay };

// Stochastic model for how each incoming node wires into the graph.
struct AttachmentSpec {
  AttachmentKind kind = AttachmentKind::UniformRandom;
  int edges_per_node = 2;
  std::vector<AttachmentVector> replay_vectors;
};

enum class ShiftNormalization { SpectralRadius, MaxDegree };

// Signal transition: one normalized shift of the padded previous signal
// plus i.i.d. Gaussian noise on every node.
struct SignalDynamics {
  double noise_variance = 0.25;
  ShiftNormalization shift_normalization = ShiftNormalization::SpectralRadius;
};

// Signal transition that replays prerecorded full signals; entry t holds the
// signal after step t and its last element is that step's ground truth. Used
// by dataset-backed environments and replay of recorded episodes.
struct ReplaySignal {
  std::vector<Eigen::VectorXd> signals;
};

using SignalModel = std::variant<SignalDynamics, ReplaySignal>;

struct ExpandingGraphState {
  AdjacencyMatrix adj;
  Eigen::VectorXd signal;
  int step = 0;

  int n() const { return adj.n(); }
  void validate() const;
};

// Everything needed to run episodes of one environment.
struct EnvConfig {
  ExpandingGraphState initial;
  AttachmentSpec attachment;
  SignalModel signal_model = SignalDynamics{};
};

struct StepResult {
  ExpandingGraphState state;
  AttachmentVector attachment;
  double ground_truth = 0.0;
  double rho = 0.0;  // spectral radius of the expanded adjacency
};

AttachmentVector sample_attachment(const ExpandingGraphState& state,
                                   const AttachmentSpec& spec, Rng& rng);

StepResult env_step(const ExpandingGraphState& state,
                    const AttachmentSpec& spec, const SignalModel& model,
                    Rng& rng, SpectralCache* cache = nullptr);

// Connected Erdos-Renyi graph (edge probability 1/2, unit weights) with a
// standard normal signal; the seed graph for synthetic experiments.
ExpandingGraphState initial_synthetic_state(int n0, Rng& rng);

// One recorded episode: enough to replay attachments, signals and truths
// bit-identically, so competing methods can be scored on identical draws.
struct RecordedStep {
  AttachmentVector attachment;
  Eigen::VectorXd signal;
  double ground_truth = 0.0;
};

struct RecordedSequence {
  ExpandingGraphState initial;
  std::vector<RecordedStep> steps;
};

RecordedSequence record_sequence(const EnvConfig& config, int horizon,
                                 Rng& rng);

// Wraps a recording as an environment that replays it exactly.
EnvConfig make_replay_config(const RecordedSequence& sequence);

void write_trajectory(const RecordedSequence& sequence, std::ostream& out);
RecordedSequence read_trajectory(std::istream& in);

}  // namespace gmarl
