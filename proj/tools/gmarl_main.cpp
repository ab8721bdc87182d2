#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmarl/experiment.hpp"

namespace {

struct CommonFlags {
  std::string preset;
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::string data_dir;
  std::vector<std::string> methods;
  int runs = -1;
  int workers = -1;
  int epochs = -1;
  int horizon = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--preset", f.preset,
                  "preset: synthetic-uniform, synthetic-preferential, "
                  "movielens, covid");
  cmd->add_option("--config", f.config_path,
                  "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seeds, "seed(s) driving every random stream");
  cmd->add_option("--out", f.out_dir,
                  "output directory (default: $GMARL_OUT_DIR, then ./out)");
  cmd->add_option("--data-dir", f.data_dir,
                  "dataset directory for the movielens and covid presets");
  cmd->add_option("--runs", f.runs, "number of evaluation runs");
  cmd->add_option("--workers", f.workers, "parallel worker threads");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--horizon", f.horizon,
                  "episode length (0 on data presets replays every arrival)");
  cmd->add_option("--methods", f.methods,
                  "comma-separated subset of gmarl, batch, online-filter, "
                  "online-gnn")
      ->delimiter(',');
}

gmarl::ExperimentConfig build_config(const CommonFlags& f) {
  gmarl::ExperimentConfig c;
  if (!f.config_path.empty()) {
    c = gmarl::load_config_file(f.config_path);
    if (!f.preset.empty()) c.preset = f.preset;
  } else if (!f.preset.empty()) {
    c = gmarl::preset_config(f.preset);
  }
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (!f.data_dir.empty()) c.data_dir = f.data_dir;
  if (!f.methods.empty()) c.methods = f.methods;
  if (f.runs >= 0) c.runs = f.runs;
  if (f.workers >= 0) c.workers = f.workers;
  if (f.epochs >= 0) c.epochs = f.epochs;
  if (f.horizon >= 0) c.horizon = f.horizon;
  if (!f.out_dir.empty()) {
    c.out_dir = f.out_dir;
  } else if (c.out_dir == "out") {
    if (const char* env = std::getenv("GMARL_OUT_DIR"); env && *env) {
      c.out_dir = env;
    }
  }
  return c;
}

void print_summary(const gmarl::ExperimentResult& result) {
  std::cout << "method,mean_rmse\n";
  for (const auto& m : result.methods) {
    std::cout << m.method << "," << m.mean_rmse << "\n";
  }
  if (result.runs_excluded > 0) {
    std::cout << "(" << result.runs_excluded
              << " run(s) excluded for non-finite metrics)\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online filter learning on expanding graphs"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train the policy and write a checkpoint");
  add_common(train_cmd, train_flags);

  CommonFlags eval_flags;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "train if needed, then run the paired multi-run evaluation");
  add_common(eval_cmd, eval_flags);

  CommonFlags sweep_flags;
  std::vector<int> horizons;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "evaluate a trained checkpoint across horizons");
  add_common(sweep_cmd, sweep_flags);
  sweep_cmd
      ->add_option("--horizons", horizons,
                   "comma-separated evaluation horizons, e.g. 20,40,60,80,100")
      ->delimiter(',')
      ->required();

  CommonFlags ingest_flags;
  CLI::App* ingest_cmd = app.add_subcommand(
      "ingest", "export one recorded sequence as a trajectory dump");
  add_common(ingest_cmd, ingest_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train_cmd->parsed()) {
      gmarl::ExperimentConfig config = build_config(train_flags);
      gmarl::TrainResult result = gmarl::train_policy(config);
      std::cout << "wrote " << config.out_dir << "/policy.txt ("
                << result.curve.size() << " epochs)\n";
    } else if (eval_cmd->parsed()) {
      gmarl::ExperimentConfig config = build_config(eval_flags);
      gmarl::ExperimentResult result = gmarl::run_experiment(config);
      print_summary(result);
      std::cout << "wrote " << config.out_dir << "/rmse_vs_step.csv\n";
    } else if (sweep_cmd->parsed()) {
      gmarl::ExperimentConfig config = build_config(sweep_flags);
      gmarl::SweepResult result = gmarl::generalization_sweep(config, horizons);
      std::cout << "horizon";
      for (const auto& name : result.methods) std::cout << "," << name;
      std::cout << "\n";
      for (std::size_t i = 0; i < result.horizons.size(); ++i) {
        std::cout << result.horizons[i];
        for (double v : result.mean_rmse[i]) std::cout << "," << v;
        std::cout << "\n";
      }
      std::cout << "wrote " << config.out_dir << "/sweep.csv\n";
    } else if (ingest_cmd->parsed()) {
      gmarl::ExperimentConfig config = build_config(ingest_flags);
      gmarl::ingest_dump(config);
      std::cout << "wrote " << config.out_dir << "/trajectory.txt\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
