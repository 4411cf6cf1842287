#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "romance/trainers.hpp"

namespace romance {

struct EvalSettings {
  std::vector<std::string> protocols{"natural", "random"};
  int episodes = 32;
  /// Directory searched recursively for attacker checkpoints.
  std::optional<std::filesystem::path> ega_attackers;
  std::vector<int> sweep_budgets{0, 2, 4, 6, 8};
};

struct ExperimentConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  EvalSettings eval;
  std::filesystem::path output_dir = "runs/default";
};

/// Parses a JSON config. Errors name the line (syntax) or the field path
/// (schema); unknown keys are rejected. Relative paths resolve against
/// `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

struct EvalReport {
  std::string protocol;
  int budget = 0;
  int episodes = 0;  // per seed
  double win_rate = 0.0;
  double win_ci = 0.0;
  double mean_return = 0.0;
  double return_ci = 0.0;
  int max_attacks = 0;
  std::vector<double> per_seed_win_rate;
  std::vector<double> per_seed_return;
};

/// Seeds for evaluation episodes of a given run seed; shared by every
/// protocol so they can be compared episode by episode.
std::uint64_t eval_seed(std::uint64_t run_seed);

/// Loads every attacker checkpoint under `dir` (sorted by path).
std::vector<Attacker> load_attackers(const std::filesystem::path& dir);

/// Greedy-ego rollouts under a protocol for one ego. `attackers` is used by
/// "ega" (mean over all of them, each for `episodes` episodes) and must be
/// nonempty there. Throws ContractViolation if an attacker changes.
RolloutSummary evaluate_protocol(const EgoLearner& ego, const std::string& protocol, const TrainConfig& cfg,
                                 int budget, const std::vector<Attacker>& attackers, int episodes,
                                 std::uint64_t seed);

/// Aggregates one protocol across egos (one per seed).
EvalReport evaluate(const std::vector<EgoLearner>& egos, const std::vector<std::uint64_t>& seeds,
                    const std::string& protocol, const TrainConfig& cfg, int budget,
                    const std::vector<Attacker>& attackers, int episodes);

/// EGA evaluation at each budget, rows sorted by budget.
std::vector<EvalReport> budget_sweep(const std::vector<EgoLearner>& egos, const std::vector<std::uint64_t>& seeds,
                                     const TrainConfig& cfg, const std::vector<Attacker>& attackers,
                                     std::vector<int> budgets, int episodes);
void write_sweep_csv(const std::filesystem::path& path, const std::string& method,
                     const std::vector<EvalReport>& rows);

nlohmann::json report_to_json(const EvalReport& r);

/// Trains every seed, evaluates the final egos and writes metrics.csv,
/// report.json and per-seed checkpoints under the output directory.
void run_training(const ExperimentConfig& cfg);
/// Evaluates saved egos (a checkpoint file or a run directory holding
/// run/<seed>/ego.ckpt) and writes report.json under the output directory.
void run_evaluation(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);
/// EGA sweep over eval.sweep_budgets for the egos at `checkpoint` (the
/// config's output directory by default); writes sweep.csv.
void run_sweep(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint);
/// Produces held-out attackers: a full ROMANCE run per seed, or evolution
/// against a frozen ego when `against` is set. Archives land in
/// <output>/attackers/seed<s>/.
void run_generation(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& against);

/// Egos found at a checkpoint path, paired with their seeds.
std::vector<std::pair<std::uint64_t, EgoLearner>> load_egos(const std::filesystem::path& checkpoint,
                                                           const std::vector<std::uint64_t>& seeds);

}  // namespace romance
