#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmarl/trainer.hpp"

namespace gmarl {

// Everything an experiment needs: preset identity, environment shape, training
// hyperparameters, baseline step sizes, and output location. Presets fill in
// defaults; a JSON config file or CLI flags override individual fields.
struct ExperimentConfig {
  std::string preset = "synthetic-uniform";

  // Environment.
  int n_init = 5;
  int horizon = 50;  // 0 on data presets means "replay every arrival"
  int order = 3;
  double noise_variance = 0.25;
  int edges_per_node = 2;

  // Training.
  double discount = 0.95;
  double learning_rate = 5e-4;
  int epochs = 500;
  int episodes_per_epoch = 16;
  double baseline_momentum = 0.9;
  double grad_clip_norm = 5.0;
  std::string optimizer = "adam";
  double spread_anneal_start = 0.3;
  double spread_anneal_end = 0.5;

  // Evaluation.
  int runs = 64;
  std::vector<std::uint64_t> seeds = {1};
  std::vector<std::string> methods = {"gmarl", "batch", "online-filter",
                                      "online-gnn"};
  int workers = 1;

  // Baselines. Step sizes are grid-selected per preset on a held-out seed;
  // preset_config overrides them for the dataset presets.
  double ridge = 1e-6;
  double online_filter_step = 1e-5;
  double online_gnn_step = 1e-3;
  int gnn_pretrain_passes = 2;

  // Real datasets.
  std::string data_dir;
  std::string item_title = "Star Wars";
  int attachment_edges = 20;
  int neighbors = 5;
  int day = 100;

  std::string out_dir = "out";
};

// Defaults for one of: synthetic-uniform, synthetic-preferential, movielens,
// covid. Unknown names are rejected.
ExperimentConfig preset_config(const std::string& preset);

// Reads a JSON config. A "preset" key is applied first so the remaining keys
// act as overrides on that preset's defaults.
ExperimentConfig load_config_file(const std::string& path);

// Serializes the full effective config (sorted keys, stable bytes).
std::string config_json(const ExperimentConfig& config);

struct MethodSummary {
  std::string method;
  double mean_rmse = 0.0;              // mean over runs of per-run RMSE
  std::vector<double> rmse_per_step;   // aggregated across runs
  std::vector<double> per_run_rmse;    // one entry per retained run
};

struct ExperimentResult {
  std::vector<MethodSummary> methods;  // canonical method order
  int runs_used = 0;
  int runs_excluded = 0;
  std::vector<LearningCurvePoint> training_curve;  // empty unless training ran
};

// Trains the policy when "gmarl" is selected (reusing an existing checkpoint
// in the output directory if present), then evaluates every selected method
// on identical recorded sequences per run. Writes config.json,
// rmse_vs_step.csv, per_run_rmse.csv, summary.csv, rmse_vs_step.svg, and on a
// fresh training pass policy.txt plus training_curve.csv.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct SweepResult {
  std::vector<std::string> methods;
  std::vector<int> horizons;
  // mean_rmse[i][j]: horizon i, method j.
  std::vector<std::vector<double>> mean_rmse;
};

// Evaluates the trained checkpoint at each horizon; fits and sequences reuse
// the same per-run streams as run_experiment, so a horizon equal to the
// config's own reproduces that aggregate exactly. Writes sweep.csv and
// sweep.svg.
SweepResult generalization_sweep(const ExperimentConfig& config,
                                 const std::vector<int>& horizons);

// Trains only: writes config.json, policy.txt, and training_curve.csv.
TrainResult train_policy(const ExperimentConfig& config);

// Exports one recorded sequence for the configured preset as a trajectory
// dump (trajectory.txt) usable with the replay attachment model.
void ingest_dump(const ExperimentConfig& config);

}  // namespace gmarl
