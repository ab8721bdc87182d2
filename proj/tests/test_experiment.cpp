#include "gmarl/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

using namespace gmarl;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp root, removed when the guard dies.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("gmarl_test_" + tag + "_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

// Small enough to train in well under a second while still exercising the
// full pipeline.
ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig config = preset_config("synthetic-uniform");
  config.runs = 2;
  config.epochs = 2;
  config.episodes_per_epoch = 2;
  config.horizon = 10;
  config.out_dir = out_dir;
  return config;
}

}  // namespace

TEST_CASE("run_experiment writes the full artifact set with pinned shapes") {
  TempDir dir("artifacts");
  ExperimentConfig config = tiny_config(dir.str());
  const ExperimentResult result = run_experiment(config);

  CHECK(result.methods.size() == 4);
  CHECK(result.runs_used == 2);
  CHECK(result.runs_excluded == 0);

  const std::string rmse = slurp(dir.path / "rmse_vs_step.csv");
  CHECK(count_lines(rmse) == config.horizon + 1);
  std::istringstream header_in(rmse);
  std::string header;
  std::getline(header_in, header);
  CHECK(header == "step,gmarl,batch,online-filter,online-gnn");

  const std::string curve = slurp(dir.path / "training_curve.csv");
  CHECK(count_lines(curve) == config.epochs + 1);
  CHECK(fs::exists(dir.path / "policy.txt"));
  CHECK(fs::exists(dir.path / "rmse_vs_step.svg"));
  CHECK(fs::exists(dir.path / "per_run_rmse.csv"));
  CHECK(fs::exists(dir.path / "summary.csv"));
  CHECK(fs::exists(dir.path / "config.json"));
}

TEST_CASE("repeating a run reproduces every result file byte for byte") {
  TempDir first("repeat_a");
  TempDir second("repeat_b");
  ExperimentConfig config = tiny_config(first.str());
  config.runs = 1;
  run_experiment(config);
  config.out_dir = second.str();
  run_experiment(config);

  for (const char* name : {"rmse_vs_step.csv", "training_curve.csv",
                           "per_run_rmse.csv", "summary.csv",
                           "rmse_vs_step.svg", "policy.txt"}) {
    CAPTURE(name);
    CHECK(slurp(first.path / name) == slurp(second.path / name));
  }
}

TEST_CASE("worker count does not change any result file") {
  TempDir serial("workers_1");
  TempDir parallel("workers_4");
  ExperimentConfig config = tiny_config(serial.str());
  run_experiment(config);
  config.out_dir = parallel.str();
  config.workers = 4;
  run_experiment(config);

  for (const char* name :
       {"rmse_vs_step.csv", "training_curve.csv", "per_run_rmse.csv"}) {
    CAPTURE(name);
    CHECK(slurp(serial.path / name) == slurp(parallel.path / name));
  }
}

TEST_CASE("batch-only method list skips training entirely") {
  TempDir dir("batch_only");
  ExperimentConfig config = tiny_config(dir.str());
  config.methods = {"batch"};
  const ExperimentResult result = run_experiment(config);

  CHECK(result.methods.size() == 1);
  CHECK(result.methods[0].method == "batch");
  CHECK(result.training_curve.empty());
  CHECK_FALSE(fs::exists(dir.path / "policy.txt"));
  CHECK_FALSE(fs::exists(dir.path / "training_curve.csv"));
}

TEST_CASE("eval reuses an existing checkpoint instead of retraining") {
  TempDir dir("reuse");
  ExperimentConfig config = tiny_config(dir.str());
  train_policy(config);
  const std::string checkpoint = slurp(dir.path / "policy.txt");

  const ExperimentResult result = run_experiment(config);
  CHECK(result.training_curve.empty());
  CHECK(slurp(dir.path / "policy.txt") == checkpoint);
}

TEST_CASE("sweep at the training horizon matches the experiment aggregate") {
  TempDir dir("sweep_match");
  ExperimentConfig config = tiny_config(dir.str());
  const ExperimentResult experiment = run_experiment(config);
  const SweepResult sweep = generalization_sweep(config, {config.horizon});

  REQUIRE(sweep.horizons.size() == 1);
  REQUIRE(sweep.mean_rmse.size() == 1);
  REQUIRE(sweep.methods.size() == experiment.methods.size());
  for (std::size_t m = 0; m < sweep.methods.size(); ++m) {
    CAPTURE(sweep.methods[m]);
    CHECK(sweep.methods[m] == experiment.methods[m].method);
    CHECK(sweep.mean_rmse[0][m] == experiment.methods[m].mean_rmse);
  }
}

TEST_CASE("sweep rejects an empty or invalid horizon list") {
  TempDir dir("sweep_bad");
  ExperimentConfig config = tiny_config(dir.str());
  config.methods = {"batch"};
  CHECK_THROWS_AS(generalization_sweep(config, {}), std::invalid_argument);
  CHECK_THROWS_AS(generalization_sweep(config, {0}), std::invalid_argument);
}

TEST_CASE("sweep without a checkpoint names the missing file and the fix") {
  TempDir dir("sweep_nockpt");
  ExperimentConfig config = tiny_config(dir.str());
  try {
    generalization_sweep(config, {10, 20});
    FAIL("expected a missing-checkpoint error");
  } catch (const std::exception& error) {
    const std::string what = error.what();
    CHECK(what.find("policy.txt") != std::string::npos);
    CHECK(what.find("train") != std::string::npos);
  }
}

TEST_CASE("sweep writes one row per horizon") {
  TempDir dir("sweep_rows");
  ExperimentConfig config = tiny_config(dir.str());
  config.methods = {"batch", "online-filter"};
  const SweepResult sweep = generalization_sweep(config, {2, 4, 6, 8, 10});
  CHECK(sweep.horizons == std::vector<int>{2, 4, 6, 8, 10});
  const std::string csv = slurp(dir.path / "sweep.csv");
  CHECK(count_lines(csv) == 6);
  CHECK(fs::exists(dir.path / "sweep.svg"));
}

TEST_CASE("config json round-trips through the loader") {
  TempDir dir("roundtrip");
  ExperimentConfig config = tiny_config(dir.str());
  config.methods = {"gmarl", "online-filter"};
  config.seeds = {7, 9};
  config.online_filter_step = 3e-6;
  const fs::path path = dir.path / "config.json";
  {
    std::ofstream out(path);
    out << config_json(config);
  }
  const ExperimentConfig loaded = load_config_file(path.string());
  CHECK(loaded.preset == config.preset);
  CHECK(loaded.horizon == config.horizon);
  CHECK(loaded.epochs == config.epochs);
  CHECK(loaded.seeds == config.seeds);
  CHECK(loaded.methods == config.methods);
  CHECK(loaded.online_filter_step == config.online_filter_step);
  CHECK(loaded.spread_anneal_end == config.spread_anneal_end);
}

TEST_CASE("unknown config keys are rejected by name") {
  TempDir dir("badkey");
  const fs::path path = dir.path / "config.json";
  {
    std::ofstream out(path);
    out << "{\"preset\": \"synthetic-uniform\", \"learning_rte\": 0.1}\n";
  }
  try {
    load_config_file(path.string());
    FAIL("expected an unknown-key error");
  } catch (const std::exception& error) {
    CHECK(std::string(error.what()).find("learning_rte") !=
          std::string::npos);
  }
}

TEST_CASE("invalid method names and empty run counts are rejected") {
  TempDir dir("invalid");
  ExperimentConfig config = tiny_config(dir.str());
  config.methods = {"gmarl", "gradient-boost"};
  CHECK_THROWS_AS(run_experiment(config), std::invalid_argument);
  config = tiny_config(dir.str());
  config.runs = 0;
  CHECK_THROWS_AS(run_experiment(config), std::invalid_argument);
  config = tiny_config(dir.str());
  config.seeds.clear();
  CHECK_THROWS_AS(run_experiment(config), std::invalid_argument);
}

TEST_CASE("missing dataset directory produces an actionable message") {
  TempDir dir("nodata");
  ExperimentConfig config = preset_config("movielens");
  config.data_dir = (dir.path / "does_not_exist").string();
  config.out_dir = dir.str();
  config.methods = {"batch"};
  try {
    run_experiment(config);
    FAIL("expected a missing-dataset error");
  } catch (const std::exception& error) {
    const std::string what = error.what();
    CHECK(what.find("u.data") != std::string::npos);
  }
}

TEST_CASE("runs that diverge are excluded with the rest aggregated") {
  TempDir dir("diverge");
  ExperimentConfig config = tiny_config(dir.str());
  config.methods = {"online-filter"};
  // A step size this large overflows within a few updates on every run.
  config.online_filter_step = 1e155;
  CHECK_THROWS_WITH(run_experiment(config),
                    "every run produced non-finite metrics");
}
