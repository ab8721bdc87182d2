#include "gmarl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "gmarl/baselines.hpp"
#include "gmarl/data_ingest.hpp"
#include "gmarl/serialize.hpp"
#include "gmarl/svg_plot.hpp"

namespace gmarl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kConfigFile = "config.json";
constexpr const char* kPolicyFile = "policy.txt";
constexpr const char* kCurveFile = "training_curve.csv";
constexpr const char* kRmseFile = "rmse_vs_step.csv";
constexpr const char* kPerRunFile = "per_run_rmse.csv";
constexpr const char* kSummaryFile = "summary.csv";
constexpr const char* kRmsePlotFile = "rmse_vs_step.svg";
constexpr const char* kSweepFile = "sweep.csv";
constexpr const char* kSweepPlotFile = "sweep.svg";
constexpr const char* kTrajectoryFile = "trajectory.txt";

// Fixed stream indices partition each seed's randomness by purpose, so adding
// a consumer never shifts the draws of another.
constexpr std::uint64_t kStreamInitialGraph = 1;
constexpr std::uint64_t kStreamTapsFit = 2;
constexpr std::uint64_t kStreamTrainer = 3;
constexpr std::uint64_t kStreamEval = 4;
constexpr std::uint64_t kStreamFit = 5;
constexpr std::uint64_t kStreamGnnInit = 6;
constexpr std::uint64_t kStreamTrainEnvs = 7;
constexpr std::uint64_t kStreamIngest = 8;

const std::vector<std::string>& method_order() {
  static const std::vector<std::string> order = {"gmarl", "batch",
                                                 "online-filter", "online-gnn"};
  return order;
}

std::vector<std::string> canonical_methods(
    const std::vector<std::string>& requested) {
  const auto& order = method_order();
  for (const std::string& name : requested) {
    if (std::find(order.begin(), order.end(), name) == order.end()) {
      throw std::invalid_argument(
          "unknown method '" + name +
          "'; expected a subset of gmarl, batch, online-filter, online-gnn");
    }
  }
  std::vector<std::string> out;
  for (const std::string& name : order) {
    if (std::find(requested.begin(), requested.end(), name) !=
        requested.end()) {
      out.push_back(name);
    }
  }
  if (out.empty()) throw std::invalid_argument("method list is empty");
  return out;
}

void validate_config(const ExperimentConfig& c) {
  if (c.runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (c.seeds.empty()) throw std::invalid_argument("seed list is empty");
  if (c.order < 1) throw std::invalid_argument("order must be at least 1");
  if (c.n_init < 2) throw std::invalid_argument("n_init must be at least 2");
  if (c.horizon < 0) throw std::invalid_argument("horizon must not be negative");
  if (c.discount <= 0.0 || c.discount > 1.0) {
    throw std::invalid_argument("discount must lie in (0, 1]");
  }
  if (c.learning_rate < 0.0) {
    throw std::invalid_argument("learning rate must not be negative");
  }
  if (c.epochs < 0) throw std::invalid_argument("epochs must not be negative");
  if (c.episodes_per_epoch < 1) {
    throw std::invalid_argument("episodes_per_epoch must be at least 1");
  }
  if (c.workers < 1) throw std::invalid_argument("workers must be at least 1");
  if (c.noise_variance < 0.0) {
    throw std::invalid_argument("noise variance must not be negative");
  }
  if (c.edges_per_node < 1) {
    throw std::invalid_argument("edges_per_node must be at least 1");
  }
  if (c.ridge < 0.0) throw std::invalid_argument("ridge must not be negative");
  if (c.online_filter_step < 0.0 || c.online_gnn_step < 0.0) {
    throw std::invalid_argument("online step sizes must not be negative");
  }
  if (c.gnn_pretrain_passes < 0) {
    throw std::invalid_argument("gnn_pretrain_passes must not be negative");
  }
  if (c.out_dir.empty()) {
    throw std::invalid_argument("output directory is empty");
  }
  canonical_methods(c.methods);
}

// Per-run stream root. With several seeds, run r draws from seed r mod |seeds|
// so explicit per-run seed lists stay supported; the run index still feeds the
// stream so repeated seeds do not collapse onto identical runs.
Rng run_root(const ExperimentConfig& c, std::uint64_t stream, int run) {
  const std::uint64_t seed =
      c.seeds[static_cast<std::size_t>(run) % c.seeds.size()];
  return Rng(seed).child(stream).child(static_cast<std::uint64_t>(run));
}

void truncate_sequence(RecordedSequence& sequence, int horizon) {
  if (static_cast<int>(sequence.steps.size()) > horizon) {
    sequence.steps.resize(static_cast<std::size_t>(horizon));
  }
}

// Everything run_experiment and the sweep need from a preset: a training
// distribution, a shared tap initialization, and the per-run paired streams.
// fit_sequence(r) and eval_sequence(r, T) are independent draws from run r's
// environment; eval_sequence's draws at a shorter horizon are a prefix of a
// longer one, which is what makes sweep rows comparable.
struct Machinery {
  EnvSampler training_sampler;
  FilterTaps taps_init;
  int horizon = 0;
  std::function<RecordedSequence(int run)> fit_sequence;
  std::function<RecordedSequence(int run, int horizon)> eval_sequence;
  std::function<RecordedSequence(Rng&)> sample_sequence;
};

Machinery synthetic_machinery(const ExperimentConfig& c) {
  if (c.horizon < 1) {
    throw std::invalid_argument("preset '" + c.preset +
                                "' needs horizon >= 1");
  }
  AttachmentSpec attach;
  attach.kind = c.preset == "synthetic-preferential"
                    ? AttachmentKind::Preferential
                    : AttachmentKind::UniformRandom;
  attach.edges_per_node = c.edges_per_node;
  SignalModel model = SignalDynamics{c.noise_variance,
                                     ShiftNormalization::SpectralRadius};

  EnvConfig base;
  {
    Rng g0 = Rng(c.seeds[0]).child(kStreamInitialGraph);
    base.initial = initial_synthetic_state(c.n_init, g0);
  }
  base.attachment = attach;
  base.signal_model = model;

  Machinery m;
  m.horizon = c.horizon;
  m.training_sampler = constant_env(base);
  {
    Rng fit = Rng(c.seeds[0]).child(kStreamTapsFit);
    RecordedSequence seq = record_sequence(base, c.horizon, fit);
    m.taps_init = batch_fit(regression_instances(seq, c.order), c.order,
                            c.ridge);
  }

  // Every run expands the same initial graph; runs differ in their
  // attachment and noise realizations, mirroring how training episodes are
  // drawn. The fit sequence gives each run's baselines an independent draw.
  m.fit_sequence = [c, base](int run) {
    Rng rng = run_root(c, kStreamFit, run);
    return record_sequence(base, c.horizon, rng);
  };
  m.eval_sequence = [c, base](int run, int horizon) {
    Rng rng = run_root(c, kStreamEval, run);
    return record_sequence(base, horizon, rng);
  };
  m.sample_sequence = [base, horizon = c.horizon](Rng& rng) {
    return record_sequence(base, horizon, rng);
  };
  return m;
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) {
    throw std::runtime_error("missing dataset file '" + path.string() + "'; " +
                             hint);
  }
}

// Shared wiring for the two dataset-backed presets once a sequence source
// exists: per-episode and per-run draws just reshuffle the arrival order.
template <typename Source>
Machinery source_machinery(const ExperimentConfig& c,
                           std::shared_ptr<const Source> src, int arrivals) {
  Machinery m;
  m.horizon = c.horizon == 0 ? arrivals : c.horizon;
  if (m.horizon > arrivals) {
    throw std::invalid_argument(
        "horizon " + std::to_string(m.horizon) + " exceeds the " +
        std::to_string(arrivals) + " arrivals available for preset '" +
        c.preset + "'");
  }
  m.training_sampler = [c, src, horizon = m.horizon](std::uint64_t episode) {
    Rng rng = Rng(c.seeds[0]).child(kStreamTrainEnvs).child(episode);
    RecordedSequence seq = src->make_sequence(rng);
    truncate_sequence(seq, horizon);
    return make_replay_config(seq);
  };
  {
    Rng fit = Rng(c.seeds[0]).child(kStreamTapsFit);
    RecordedSequence seq = src->make_sequence(fit);
    truncate_sequence(seq, m.horizon);
    m.taps_init =
        batch_fit(regression_instances(seq, c.order), c.order, c.ridge);
  }
  m.fit_sequence = [c, src, horizon = m.horizon](int run) {
    Rng rng = run_root(c, kStreamFit, run);
    RecordedSequence seq = src->make_sequence(rng);
    truncate_sequence(seq, horizon);
    return seq;
  };
  m.eval_sequence = [c, src, arrivals](int run, int horizon) {
    if (horizon > arrivals) {
      throw std::invalid_argument(
          "horizon " + std::to_string(horizon) + " exceeds the " +
          std::to_string(arrivals) + " arrivals available for preset '" +
          c.preset + "'");
    }
    Rng rng = run_root(c, kStreamEval, run);
    RecordedSequence seq = src->make_sequence(rng);
    truncate_sequence(seq, horizon);
    return seq;
  };
  m.sample_sequence = [src, horizon = m.horizon](Rng& rng) {
    RecordedSequence seq = src->make_sequence(rng);
    truncate_sequence(seq, horizon);
    return seq;
  };
  return m;
}

Machinery movielens_machinery(const ExperimentConfig& c) {
  if (c.data_dir.empty()) {
    throw std::runtime_error(
        "preset movielens needs data_dir pointing at u.data and u.item");
  }
  const fs::path ratings_path = fs::path(c.data_dir) / "u.data";
  const fs::path items_path = fs::path(c.data_dir) / "u.item";
  const std::string hint =
      "point data_dir at a MovieLens 100K layout (u.data, u.item)";
  require_file(ratings_path, hint);
  require_file(items_path, hint);

  const RatingsTable ratings = read_ratings_file(ratings_path.string());
  const std::vector<ItemInfo> items = read_items_file(items_path.string());
  const int item = item_id_for_title(items, c.item_title);
  auto src = std::make_shared<const UserGraphSource>(build_user_graph_source(
      ratings, item, c.n_init, c.attachment_edges));
  const int arrivals = static_cast<int>(src->user_ids.size()) - c.n_init;
  return source_machinery(c, src, arrivals);
}

Machinery covid_machinery(const ExperimentConfig& c) {
  if (c.data_dir.empty()) {
    throw std::runtime_error("preset covid needs data_dir pointing at cities.csv");
  }
  const fs::path cities_path = fs::path(c.data_dir) / "cities.csv";
  require_file(cities_path, "point data_dir at a directory holding cities.csv");

  const CityTable table = read_cities_file(cities_path.string());
  auto src = std::make_shared<const CityGraphSource>(
      build_city_graph_source(table, c.day, c.n_init, c.neighbors));
  const int arrivals = static_cast<int>(src->city_ids.size()) - c.n_init;
  return source_machinery(c, src, arrivals);
}

Machinery make_machinery(const ExperimentConfig& c) {
  if (c.preset == "synthetic-uniform" || c.preset == "synthetic-preferential") {
    return synthetic_machinery(c);
  }
  if (c.preset == "movielens") return movielens_machinery(c);
  if (c.preset == "covid") return covid_machinery(c);
  throw std::invalid_argument(
      "unknown preset '" + c.preset +
      "'; expected synthetic-uniform, synthetic-preferential, movielens, or "
      "covid");
}

TrainConfig trainer_config(const ExperimentConfig& c, int horizon) {
  TrainConfig tc;
  tc.horizon = horizon;
  tc.discount = c.discount;
  tc.learning_rate = c.learning_rate;
  tc.episodes_per_epoch = c.episodes_per_epoch;
  tc.epochs = c.epochs;
  tc.baseline_momentum = c.baseline_momentum;
  tc.grad_clip_norm = c.grad_clip_norm;
  tc.optimizer = c.optimizer;
  tc.workers = c.workers;
  tc.spread_anneal_start = c.spread_anneal_start;
  tc.spread_anneal_end = c.spread_anneal_end;
  Rng derive = Rng(c.seeds[0]).child(kStreamTrainer);
  tc.seed = derive.next_u64();
  return tc;
}

// Squared per-step losses for every selected method on run r's paired
// sequences. All methods see identical draws; the fits see a second,
// independent sequence from the same environment.
std::vector<std::vector<double>> evaluate_run(const ExperimentConfig& c,
                                              const Machinery& m,
                                              const std::vector<std::string>&
                                                  methods,
                                              const PolicyParameters* policy,
                                              int run) {
  const RecordedSequence fit_seq = m.fit_sequence(run);
  const RecordedSequence eval_seq = m.eval_sequence(run, m.horizon);
  const std::vector<RegressionInstance> fit_instances =
      regression_instances(fit_seq, c.order);
  const std::vector<RegressionInstance> eval_instances =
      regression_instances(eval_seq, c.order);
  const FilterTaps run_taps = batch_fit(fit_instances, c.order, c.ridge);

  std::vector<std::vector<double>> out;
  out.reserve(methods.size());
  for (const std::string& name : methods) {
    if (name == "gmarl") {
      out.push_back(eval_policy_on_sequence(eval_seq, *policy, run_taps));
    } else if (name == "batch") {
      out.push_back(eval_fixed_taps(eval_instances, run_taps));
    } else if (name == "online-filter") {
      out.push_back(
          eval_online_filter(eval_instances, run_taps, c.online_filter_step));
    } else {
      Rng init = run_root(c, kStreamGnnInit, run);
      OnlineGnnParams params =
          pretrain_online_gnn(make_online_gnn(init), fit_instances,
                              c.gnn_pretrain_passes, c.online_gnn_step);
      out.push_back(
          eval_online_gnn(eval_instances, params, c.online_gnn_step));
    }
  }
  return out;
}

bool all_finite(const std::vector<std::vector<double>>& losses) {
  for (const auto& column : losses) {
    for (double v : column) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// Strided worker pool over run indices; results land in per-run slots so the
// worker count never affects aggregation order.
void parallel_runs(int runs, int workers,
                   const std::function<void(int)>& body) {
  workers = std::max(1, std::min(workers, runs));
  if (workers == 1) {
    for (int run = 0; run < runs; ++run) body(run);
    return;
  }
  std::vector<std::string> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int run = w; run < runs; run += workers) body(run);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(w)] = e.what();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::string& message : errors) {
    if (!message.empty()) throw std::runtime_error(message);
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  }
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string curve_csv(const std::vector<LearningCurvePoint>& curve) {
  std::ostringstream out;
  out << "epoch,mean_reward,mean_rmse,eval_reward\n";
  for (const LearningCurvePoint& point : curve) {
    out << point.epoch << "," << format_g17(point.mean_reward) << ","
        << format_g17(point.mean_rmse) << ","
        << format_g17(point.eval_reward) << "\n";
  }
  return out.str();
}

std::string rmse_csv(const std::vector<MethodSummary>& methods, int horizon) {
  std::ostringstream out;
  out << "step";
  for (const MethodSummary& m : methods) out << "," << m.method;
  out << "\n";
  for (int t = 0; t < horizon; ++t) {
    out << (t + 1);
    for (const MethodSummary& m : methods) {
      out << "," << format_g17(m.rmse_per_step[static_cast<std::size_t>(t)]);
    }
    out << "\n";
  }
  return out.str();
}

std::string per_run_csv(const std::vector<MethodSummary>& methods,
                        const std::vector<int>& run_ids) {
  std::ostringstream out;
  out << "run";
  for (const MethodSummary& m : methods) out << "," << m.method;
  out << "\n";
  for (std::size_t i = 0; i < run_ids.size(); ++i) {
    out << run_ids[i];
    for (const MethodSummary& m : methods) {
      out << "," << format_g17(m.per_run_rmse[i]);
    }
    out << "\n";
  }
  return out.str();
}

std::string summary_csv(const std::vector<MethodSummary>& methods,
                        int runs_used) {
  std::ostringstream out;
  out << "method,mean_rmse,runs_used\n";
  for (const MethodSummary& m : methods) {
    out << m.method << "," << format_g17(m.mean_rmse) << "," << runs_used
        << "\n";
  }
  return out.str();
}

std::string rmse_svg(const ExperimentConfig& c,
                     const std::vector<MethodSummary>& methods, int horizon) {
  std::vector<double> x(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) x[static_cast<std::size_t>(t)] = t + 1;
  std::vector<SvgSeries> series;
  for (const MethodSummary& m : methods) {
    series.push_back({m.method, m.rmse_per_step});
  }
  std::ostringstream out;
  write_line_chart(out, "RMSE vs step (" + c.preset + ")", "step", "RMSE", x,
                   series);
  return out.str();
}

}  // namespace

ExperimentConfig preset_config(const std::string& preset) {
  ExperimentConfig c;
  c.preset = preset;
  if (preset == "synthetic-uniform" || preset == "synthetic-preferential") {
    // The anneal-then-freeze schedule needs room before the exploration
    // floor; half the epochs do the learning, the rest converge and hold.
    c.epochs = 1000;
    return c;
  }
  if (preset == "movielens") {
    c.n_init = 200;
    c.horizon = 0;
    c.epochs = 120;
    c.episodes_per_epoch = 8;
    c.online_filter_step = 1e-11;
    c.online_gnn_step = 1e-2;
    return c;
  }
  if (preset == "covid") {
    c.n_init = 30;
    c.horizon = 0;
    c.epochs = 120;
    c.episodes_per_epoch = 8;
    c.online_filter_step = 1e-9;
    c.online_gnn_step = 1e-2;
    return c;
  }
  throw std::invalid_argument(
      "unknown preset '" + preset +
      "'; expected synthetic-uniform, synthetic-preferential, movielens, or "
      "covid");
}

namespace {

template <typename T>
void assign_field(const json& j, const char* key, T& field) {
  auto it = j.find(key);
  if (it != j.end()) field = it->template get<T>();
}

void apply_json(const json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known = {
      "preset",          "n_init",
      "horizon",         "order",
      "noise_variance",  "edges_per_node",
      "discount",        "learning_rate",
      "epochs",          "episodes_per_epoch",
      "baseline_momentum", "grad_clip_norm",
      "spread_anneal_start", "spread_anneal_end",
      "optimizer",       "runs",
      "seeds",           "methods",
      "workers",         "ridge",
      "online_filter_step", "online_gnn_step",
      "gnn_pretrain_passes", "data_dir",
      "item_title",      "attachment_edges",
      "neighbors",       "day",
      "out_dir"};
  for (const auto& entry : j.items()) {
    if (std::find(known.begin(), known.end(), entry.key()) == known.end()) {
      throw std::runtime_error("unknown config key '" + entry.key() + "'");
    }
  }
  assign_field(j, "n_init", c.n_init);
  assign_field(j, "horizon", c.horizon);
  assign_field(j, "order", c.order);
  assign_field(j, "noise_variance", c.noise_variance);
  assign_field(j, "edges_per_node", c.edges_per_node);
  assign_field(j, "discount", c.discount);
  assign_field(j, "learning_rate", c.learning_rate);
  assign_field(j, "epochs", c.epochs);
  assign_field(j, "episodes_per_epoch", c.episodes_per_epoch);
  assign_field(j, "baseline_momentum", c.baseline_momentum);
  assign_field(j, "grad_clip_norm", c.grad_clip_norm);
  assign_field(j, "spread_anneal_start", c.spread_anneal_start);
  assign_field(j, "spread_anneal_end", c.spread_anneal_end);
  assign_field(j, "optimizer", c.optimizer);
  assign_field(j, "runs", c.runs);
  assign_field(j, "seeds", c.seeds);
  assign_field(j, "methods", c.methods);
  assign_field(j, "workers", c.workers);
  assign_field(j, "ridge", c.ridge);
  assign_field(j, "online_filter_step", c.online_filter_step);
  assign_field(j, "online_gnn_step", c.online_gnn_step);
  assign_field(j, "gnn_pretrain_passes", c.gnn_pretrain_passes);
  assign_field(j, "data_dir", c.data_dir);
  assign_field(j, "item_title", c.item_title);
  assign_field(j, "attachment_edges", c.attachment_edges);
  assign_field(j, "neighbors", c.neighbors);
  assign_field(j, "day", c.day);
  assign_field(j, "out_dir", c.out_dir);
}

}  // namespace

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) {
    throw std::runtime_error("config file '" + path +
                             "': top level must be a JSON object");
  }
  ExperimentConfig c;
  if (j.contains("preset")) {
    c = preset_config(j.at("preset").get<std::string>());
  }
  try {
    apply_json(j, c);
  } catch (const json::exception& e) {
    throw std::runtime_error("config file '" + path + "': " + e.what());
  }
  return c;
}

std::string config_json(const ExperimentConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["n_init"] = c.n_init;
  j["horizon"] = c.horizon;
  j["order"] = c.order;
  j["noise_variance"] = c.noise_variance;
  j["edges_per_node"] = c.edges_per_node;
  j["discount"] = c.discount;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["episodes_per_epoch"] = c.episodes_per_epoch;
  j["baseline_momentum"] = c.baseline_momentum;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["spread_anneal_start"] = c.spread_anneal_start;
  j["spread_anneal_end"] = c.spread_anneal_end;
  j["optimizer"] = c.optimizer;
  j["runs"] = c.runs;
  j["seeds"] = c.seeds;
  j["methods"] = c.methods;
  j["workers"] = c.workers;
  j["ridge"] = c.ridge;
  j["online_filter_step"] = c.online_filter_step;
  j["online_gnn_step"] = c.online_gnn_step;
  j["gnn_pretrain_passes"] = c.gnn_pretrain_passes;
  j["data_dir"] = c.data_dir;
  j["item_title"] = c.item_title;
  j["attachment_edges"] = c.attachment_edges;
  j["neighbors"] = c.neighbors;
  j["day"] = c.day;
  j["out_dir"] = c.out_dir;
  return j.dump(2) + "\n";
}

TrainResult train_policy(const ExperimentConfig& config) {
  validate_config(config);
  Machinery m = make_machinery(config);
  fs::create_directories(config.out_dir);
  write_file(fs::path(config.out_dir) / kConfigFile, config_json(config));

  TrainResult trained =
      train(m.training_sampler, m.taps_init, trainer_config(config, m.horizon));
  save_policy_file(trained.policy, (fs::path(config.out_dir) / kPolicyFile).string());
  write_file(fs::path(config.out_dir) / kCurveFile, curve_csv(trained.curve));
  return trained;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const std::vector<std::string> methods = canonical_methods(config.methods);
  Machinery m = make_machinery(config);
  fs::create_directories(config.out_dir);
  write_file(fs::path(config.out_dir) / kConfigFile, config_json(config));

  ExperimentResult result;
  const bool wants_policy =
      std::find(methods.begin(), methods.end(), "gmarl") != methods.end();
  PolicyParameters policy;
  if (wants_policy) {
    const fs::path checkpoint = fs::path(config.out_dir) / kPolicyFile;
    if (fs::exists(checkpoint)) {
      policy = load_policy_file(checkpoint.string());
      if (policy.order() != config.order) {
        throw std::runtime_error(
            "checkpoint '" + checkpoint.string() + "' has filter order " +
            std::to_string(policy.order()) + " but the config asks for " +
            std::to_string(config.order) + "; delete it or match the config");
      }
    } else {
      TrainResult trained = train(m.training_sampler, m.taps_init,
                                  trainer_config(config, m.horizon));
      policy = trained.policy;
      result.training_curve = trained.curve;
      save_policy_file(policy, checkpoint.string());
      write_file(fs::path(config.out_dir) / kCurveFile,
                 curve_csv(trained.curve));
    }
  }

  const int runs = config.runs;
  std::vector<std::vector<std::vector<double>>> losses(
      static_cast<std::size_t>(runs));
  parallel_runs(runs, config.workers, [&](int run) {
    losses[static_cast<std::size_t>(run)] = evaluate_run(
        config, m, methods, wants_policy ? &policy : nullptr, run);
  });

  std::vector<int> retained;
  for (int run = 0; run < runs; ++run) {
    if (all_finite(losses[static_cast<std::size_t>(run)])) {
      retained.push_back(run);
    } else {
      std::cerr << "warning: run " << run
                << " produced a non-finite metric; excluding it from "
                   "aggregates\n";
    }
  }
  if (retained.empty()) {
    throw std::runtime_error("every run produced non-finite metrics");
  }
  result.runs_used = static_cast<int>(retained.size());
  result.runs_excluded = runs - result.runs_used;

  const int horizon = m.horizon;
  for (std::size_t j = 0; j < methods.size(); ++j) {
    MethodSummary summary;
    summary.method = methods[j];
    summary.rmse_per_step.assign(static_cast<std::size_t>(horizon), 0.0);
    for (int run : retained) {
      const std::vector<double>& column =
          losses[static_cast<std::size_t>(run)][j];
      double total = 0.0;
      for (int t = 0; t < horizon; ++t) {
        summary.rmse_per_step[static_cast<std::size_t>(t)] +=
            column[static_cast<std::size_t>(t)];
        total += column[static_cast<std::size_t>(t)];
      }
      summary.per_run_rmse.push_back(std::sqrt(total / horizon));
    }
    for (double& v : summary.rmse_per_step) {
      v = std::sqrt(v / static_cast<double>(retained.size()));
    }
    double mean = 0.0;
    for (double v : summary.per_run_rmse) mean += v;
    summary.mean_rmse = mean / static_cast<double>(summary.per_run_rmse.size());
    result.methods.push_back(std::move(summary));
  }

  write_file(fs::path(config.out_dir) / kRmseFile,
             rmse_csv(result.methods, horizon));
  write_file(fs::path(config.out_dir) / kPerRunFile,
             per_run_csv(result.methods, retained));
  write_file(fs::path(config.out_dir) / kSummaryFile,
             summary_csv(result.methods, result.runs_used));
  write_file(fs::path(config.out_dir) / kRmsePlotFile,
             rmse_svg(config, result.methods, horizon));
  return result;
}

SweepResult generalization_sweep(const ExperimentConfig& config,
                                 const std::vector<int>& horizons) {
  validate_config(config);
  if (horizons.empty()) {
    throw std::invalid_argument("generalization sweep needs at least one horizon");
  }
  for (int h : horizons) {
    if (h < 1) {
      throw std::invalid_argument("sweep horizons must be at least 1");
    }
  }
  const std::vector<std::string> methods = canonical_methods(config.methods);
  Machinery m = make_machinery(config);
  fs::create_directories(config.out_dir);

  const bool wants_policy =
      std::find(methods.begin(), methods.end(), "gmarl") != methods.end();
  PolicyParameters policy;
  if (wants_policy) {
    const fs::path checkpoint = fs::path(config.out_dir) / kPolicyFile;
    if (!fs::exists(checkpoint)) {
      throw std::runtime_error(
          "no checkpoint at '" + checkpoint.string() +
          "'; run the train subcommand with this output directory first");
    }
    policy = load_policy_file(checkpoint.string());
  }

  SweepResult result;
  result.methods = methods;
  result.horizons = horizons;
  for (int horizon : horizons) {
    ExperimentConfig at = config;
    Machinery local = m;
    local.horizon = horizon;
    const int runs = config.runs;
    std::vector<std::vector<std::vector<double>>> losses(
        static_cast<std::size_t>(runs));
    parallel_runs(runs, config.workers, [&](int run) {
      losses[static_cast<std::size_t>(run)] = evaluate_run(
          at, local, methods, wants_policy ? &policy : nullptr, run);
    });

    std::vector<double> row(methods.size(), 0.0);
    int used = 0;
    for (int run = 0; run < runs; ++run) {
      const auto& per_method = losses[static_cast<std::size_t>(run)];
      if (!all_finite(per_method)) {
        std::cerr << "warning: run " << run << " at horizon " << horizon
                  << " produced a non-finite metric; excluding it\n";
        continue;
      }
      ++used;
      for (std::size_t j = 0; j < methods.size(); ++j) {
        double total = 0.0;
        for (double v : per_method[j]) total += v;
        row[j] += std::sqrt(total / horizon);
      }
    }
    if (used == 0) {
      throw std::runtime_error("every run produced non-finite metrics at horizon " +
                               std::to_string(horizon));
    }
    for (double& v : row) v /= static_cast<double>(used);
    result.mean_rmse.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "horizon";
  for (const std::string& name : methods) csv << "," << name;
  csv << "\n";
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    csv << horizons[i];
    for (double v : result.mean_rmse[i]) csv << "," << format_g17(v);
    csv << "\n";
  }
  write_file(fs::path(config.out_dir) / kSweepFile, csv.str());

  std::vector<double> x;
  for (int h : horizons) x.push_back(h);
  std::vector<SvgSeries> series;
  for (std::size_t j = 0; j < methods.size(); ++j) {
    SvgSeries s;
    s.label = methods[j];
    for (std::size_t i = 0; i < horizons.size(); ++i) {
      s.y.push_back(result.mean_rmse[i][j]);
    }
    series.push_back(std::move(s));
  }
  std::ostringstream svg;
  write_line_chart(svg, "RMSE vs evaluation horizon (" + config.preset + ")",
                   "horizon", "mean RMSE", x, series);
  write_file(fs::path(config.out_dir) / kSweepPlotFile, svg.str());
  return result;
}

void ingest_dump(const ExperimentConfig& config) {
  validate_config(config);
  Machinery m = make_machinery(config);
  fs::create_directories(config.out_dir);
  write_file(fs::path(config.out_dir) / kConfigFile, config_json(config));

  Rng rng = Rng(config.seeds[0]).child(kStreamIngest);
  const RecordedSequence sequence = m.sample_sequence(rng);
  std::ostringstream out;
  write_trajectory(sequence, out);
  write_file(fs::path(config.out_dir) / kTrajectoryFile, out.str());
}

}  // namespace gmarl
