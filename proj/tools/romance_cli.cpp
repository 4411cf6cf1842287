#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "romance/error.hpp"
#include "romance/harness.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 1;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust MARL training and evaluation under limited policy adversaries"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config;
  std::string checkpoint;
  std::string against;
  std::string output_dir;
  app.add_option("--output-dir", output_dir, "Override the config's output directory");

  auto* train = app.add_subcommand("train", "Train every configured seed, then evaluate the final egos");
  train->add_option("config", config, "Experiment config (JSON)")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate saved egos under the configured protocols");
  eval->add_option("config", config, "Experiment config (JSON)")->required();
  eval->add_option("--checkpoint", checkpoint, "ego.ckpt file or a training output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "EGA win rate across the configured attack budgets");
  sweep->add_option("config", config, "Experiment config (JSON)")->required();
  sweep->add_option("--checkpoint", checkpoint, "ego.ckpt file or a training output directory");

  auto* gen = app.add_subcommand("gen-attackers", "Produce held-out attacker archives");
  gen->add_option("config", config, "Experiment config (JSON)")->required();
  gen->add_option("--against", against, "Evolve against this frozen ego instead of co-training");

  CLI11_PARSE(app, argc, argv);

  try {
    romance::ExperimentConfig cfg = romance::load_config(config);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (train->parsed()) {
      romance::run_training(cfg);
    } else if (eval->parsed()) {
      romance::run_evaluation(cfg, checkpoint);
    } else if (sweep->parsed()) {
      romance::run_sweep(cfg, checkpoint.empty() ? std::nullopt : std::optional<std::filesystem::path>(checkpoint));
    } else {
      romance::run_generation(cfg, against.empty() ? std::nullopt : std::optional<std::filesystem::path>(against));
    }
    std::cout << "wrote " << cfg.output_dir.string() << "\n";
  } catch (const romance::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return 0;
}
