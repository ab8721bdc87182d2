#include "gmarl/graph_env.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "gmarl/serialize.hpp"

namespace gmarl {

namespace {

bool is_connected(const Eigen::MatrixXd& adj) {
  const int n = static_cast<int>(adj.rows());
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::vector<int> queue{0};
  seen[0] = 1;
  int visited = 1;
  while (!queue.empty()) {
    const int u = queue.back();
    queue.pop_back();
    for (int v = 0; v < n; ++v) {
      if (!seen[v] && adj(u, v) > 0.0) {
        seen[v] = 1;
        ++visited;
        queue.push_back(v);
      }
    }
  }
  return visited == n;
}

AttachmentVector sample_distinct_targets(const Eigen::VectorXd& weights,
                                         int count, Rng& rng) {
  const int n = static_cast<int>(weights.size());
  Eigen::VectorXd remaining = weights;
  AttachmentVector a;
  a.weights = Eigen::VectorXd::Zero(n);
  for (int draw = 0; draw < count; ++draw) {
    const double total = remaining.sum();
    const double u = rng.uniform() * total;
    double cumulative = 0.0;
    int chosen = -1;
    for (int i = 0; i < n; ++i) {
      if (remaining[i] <= 0.0) continue;
      cumulative += remaining[i];
      chosen = i;
      if (u < cumulative) break;
    }
    if (chosen < 0) {
      throw std::logic_error("sample_distinct_targets: ran out of candidates");
    }
    a.weights[chosen] = 1.0;
    remaining[chosen] = 0.0;
  }
  return a;
}

}  // namespace

void ExpandingGraphState::validate() const {
  adj.validate();
  if (signal.size() != adj.n()) {
    throw std::invalid_argument(
        "ExpandingGraphState: signal length " + std::to_string(signal.size()) +
        " does not match node count " + std::to_string(adj.n()));
  }
  if (step < 0) {
    throw std::invalid_argument("ExpandingGraphState: negative step counter");
  }
}

AttachmentVector sample_attachment(const ExpandingGraphState& state,
                                   const AttachmentSpec& spec, Rng& rng) {
  const int n = state.adj.n();
  switch (spec.kind) {
    case AttachmentKind::UniformRandom:
    case AttachmentKind::Preferential: {
      if (spec.edges_per_node < 1) {
        throw std::invalid_argument("sample_attachment: edges_per_node < 1");
      }
      if (spec.edges_per_node > n) {
        throw std::invalid_argument(
            "sample_attachment: cannot attach " +
            std::to_string(spec.edges_per_node) + " edges to " +
            std::to_string(n) + " nodes");
      }
      Eigen::VectorXd weights;
      if (spec.kind == AttachmentKind::UniformRandom) {
        weights = Eigen::VectorXd::Ones(n);
      } else {
        // The floor keeps isolated nodes reachable and the distribution
        // well-defined on degree-free graphs.
        weights = degree_vector(state.adj).array() + 1e-6;
      }
      return sample_distinct_targets(weights, spec.edges_per_node, rng);
    }
    case AttachmentKind::Replay: {
      const auto index = static_cast<size_t>(state.step);
      if (index >= spec.replay_vectors.size()) {
        throw std::out_of_range(
            "sample_attachment: replay exhausted at step " +
            std::to_string(state.step) + " (have " +
            std::to_string(spec.replay_vectors.size()) + " vectors)");
      }
      const AttachmentVector& a = spec.replay_vectors[index];
      if (a.size() != n) {
        throw std::invalid_argument(
            "sample_attachment: replay vector at step " +
            std::to_string(state.step) + " has length " +
            std::to_string(a.size()) + ", graph has " + std::to_string(n) +
            " nodes");
      }
      return a;
    }
  }
  throw std::logic_error("sample_attachment: unknown attachment kind");
}

StepResult env_step(const ExpandingGraphState& state,
                    const AttachmentSpec& spec, const SignalModel& model,
                    Rng& rng, SpectralCache* cache) {
  StepResult result;
  result.attachment = sample_attachment(state, spec, rng);
  result.state.adj = expand_adjacency(state.adj, result.attachment);
  result.state.step = state.step + 1;
  result.rho = spectral_radius(result.state.adj, cache);

  const int n_new = result.state.adj.n();
  if (const auto* dyn = std::get_if<SignalDynamics>(&model)) {
    const double scale = dyn->shift_normalization ==
                                 ShiftNormalization::SpectralRadius
                             ? result.rho
                             : max_degree(result.state.adj);
    Eigen::VectorXd padded(n_new);
    padded.head(n_new - 1) = state.signal;
    padded[n_new - 1] = 0.0;
    Eigen::VectorXd next = result.state.adj.entries * padded;
    if (scale > 0.0) next /= scale;
    if (dyn->noise_variance > 0.0) {
      const double sd = std::sqrt(dyn->noise_variance);
      for (int i = 0; i < n_new; ++i) next[i] += sd * rng.normal();
    }
    result.state.signal = std::move(next);
  } else {
    const auto& replay = std::get<ReplaySignal>(model);
    const auto index = static_cast<size_t>(state.step);
    if (index >= replay.signals.size()) {
      throw std::out_of_range("env_step: replay signal exhausted at step " +
                              std::to_string(state.step));
    }
    if (replay.signals[index].size() != n_new) {
      throw std::invalid_argument(
          "env_step: replay signal at step " + std::to_string(state.step) +
          " has length " + std::to_string(replay.signals[index].size()) +
          ", expanded graph has " + std::to_string(n_new) + " nodes");
    }
    result.state.signal = replay.signals[index];
  }
  result.ground_truth = result.state.signal[n_new - 1];
  return result;
}

ExpandingGraphState initial_synthetic_state(int n0, Rng& rng) {
  if (n0 < 2) {
    throw std::invalid_argument("initial_synthetic_state: need n0 >= 2");
  }
  ExpandingGraphState state;
  state.adj.entries = Eigen::MatrixXd::Zero(n0, n0);
  do {
    state.adj.entries.setZero();
    for (int i = 0; i < n0; ++i) {
      for (int j = i + 1; j < n0; ++j) {
        if (rng.uniform() < 0.5) {
          state.adj.entries(i, j) = 1.0;
          state.adj.entries(j, i) = 1.0;
        }
      }
    }
  } while (!is_connected(state.adj.entries));
  state.signal.resize(n0);
  for (int i = 0; i < n0; ++i) state.signal[i] = rng.normal();
  state.step = 0;
  return state;
}

RecordedSequence record_sequence(const EnvConfig& config, int horizon,
                                 Rng& rng) {
  if (horizon < 1) {
    throw std::invalid_argument("record_sequence: horizon must be >= 1");
  }
  RecordedSequence sequence;
  sequence.initial = config.initial;
  sequence.steps.reserve(horizon);
  SpectralCache cache;
  ExpandingGraphState state = config.initial;
  for (int t = 0; t < horizon; ++t) {
    StepResult step =
        env_step(state, config.attachment, config.signal_model, rng, &cache);
    RecordedStep record;
    record.attachment = step.attachment;
    record.signal = step.state.signal;
    record.ground_truth = step.ground_truth;
    sequence.steps.push_back(std::move(record));
    state = std::move(step.state);
  }
  return sequence;
}

EnvConfig make_replay_config(const RecordedSequence& sequence) {
  EnvConfig config;
  config.initial = sequence.initial;
  config.attachment.kind = AttachmentKind::Replay;
  ReplaySignal replay;
  for (const RecordedStep& step : sequence.steps) {
    config.attachment.replay_vectors.push_back(step.attachment);
    replay.signals.push_back(step.signal);
  }
  config.signal_model = std::move(replay);
  return config;
}

void write_trajectory(const RecordedSequence& sequence, std::ostream& out) {
  out << "# gmarl trajectory v1\n";
  out << "init_signal ";
  for (int i = 0; i < sequence.initial.signal.size(); ++i) {
    if (i > 0) out << ',';
    out << format_g17(sequence.initial.signal[i]);
  }
  out << "\ninit_adj ";
  bool first = true;
  const Eigen::MatrixXd& adj = sequence.initial.adj.entries;
  for (int i = 0; i < adj.rows(); ++i) {
    for (int j = i + 1; j < adj.cols(); ++j) {
      if (adj(i, j) == 0.0) continue;
      if (!first) out << ',';
      out << i << ':' << j << ':' << format_g17(adj(i, j));
      first = false;
    }
  }
  if (first) out << '-';
  out << '\n';

  for (size_t t = 0; t < sequence.steps.size(); ++t) {
    const RecordedStep& step = sequence.steps[t];
    out << (t + 1) << ' ';
    first = true;
    for (int i = 0; i < step.attachment.size(); ++i) {
      if (step.attachment.weights[i] == 0.0) continue;
      if (!first) out << ',';
      out << i << ':' << format_g17(step.attachment.weights[i]);
      first = false;
    }
    if (first) out << '-';
    out << ' ' << format_g17(step.ground_truth) << ' ';
    for (int i = 0; i < step.signal.size(); ++i) {
      if (i > 0) out << ',';
      out << format_g17(step.signal[i]);
    }
    out << '\n';
  }
}

RecordedSequence read_trajectory(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# gmarl trajectory v1") {
    throw std::runtime_error("read_trajectory: missing header line");
  }
  RecordedSequence sequence;

  if (!std::getline(in, line) || line.rfind("init_signal ", 0) != 0) {
    throw std::runtime_error("read_trajectory: missing init_signal line");
  }
  sequence.initial.signal = parse_vector_csv(line.substr(12));
  const int n0 = static_cast<int>(sequence.initial.signal.size());
  sequence.initial.adj.entries = Eigen::MatrixXd::Zero(n0, n0);
  sequence.initial.step = 0;

  if (!std::getline(in, line) || line.rfind("init_adj ", 0) != 0) {
    throw std::runtime_error("read_trajectory: missing init_adj line");
  }
  const std::string edges = line.substr(9);
  if (edges != "-") {
    for (const std::string& entry : split(edges, ',')) {
      const std::vector<std::string> parts = split(entry, ':');
      if (parts.size() != 3) {
        throw std::runtime_error("read_trajectory: bad edge entry " + entry);
      }
      const int i = std::stoi(parts[0]);
      const int j = std::stoi(parts[1]);
      const double w = std::stod(parts[2]);
      sequence.initial.adj.entries(i, j) = w;
      sequence.initial.adj.entries(j, i) = w;
    }
  }

  int expected_step = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    int step_index = 0;
    std::string attachment_text, truth_text, signal_text;
    if (!(fields >> step_index >> attachment_text >> truth_text >>
          signal_text)) {
      throw std::runtime_error("read_trajectory: malformed step line: " +
                               line);
    }
    if (step_index != expected_step) {
      throw std::runtime_error("read_trajectory: expected step " +
                               std::to_string(expected_step) + ", found " +
                               std::to_string(step_index));
    }
    RecordedStep step;
    step.signal = parse_vector_csv(signal_text);
    step.ground_truth = std::stod(truth_text);
    const int n_prev = static_cast<int>(step.signal.size()) - 1;
    step.attachment.weights = Eigen::VectorXd::Zero(n_prev);
    if (attachment_text != "-") {
      for (const std::string& entry : split(attachment_text, ',')) {
        const std::vector<std::string> parts = split(entry, ':');
        if (parts.size() != 2) {
          throw std::runtime_error("read_trajectory: bad attachment entry " +
                                   entry);
        }
        step.attachment.weights[std::stoi(parts[0])] = std::stod(parts[1]);
      }
    }
    sequence.steps.push_back(std::move(step));
    ++expected_step;
  }
  return sequence;
}

}  // namespace gmarl
