#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "romance/attacker.hpp"
#include "romance/chain_coop.hpp"
#include "romance/ego.hpp"
#include "romance/evolution.hpp"
#include "romance/lpa.hpp"
#include "romance/micro_battle.hpp"
#include "romance/rollout.hpp"

namespace romance {

enum class Method { kRomance, kRarl, kRap, kRandom, kVanilla };
Method parse_method(const std::string& name);
std::string to_string(Method m);

struct EnvSettings {
  std::string id = "micro_battle";  // micro_battle | chain_coop
  MicroBattleConfig battle;
  ChainCoopConfig chain;
};
std::unique_ptr<Environment> make_env(const EnvSettings& s);

struct TrainConfig {
  Method method = Method::kRomance;
  EnvSettings env;
  EgoConfig ego;
  AttackerConfig attacker;
  int budget = 4;             // K
  int population = 4;         // n_p
  int archive_capacity = 15;  // n_a
  double archive_threshold = 0.05;
  double alpha = 0.1;
  int generations = 800;
  int attacker_phases = 4;
  int ego_phases = 4;
  int attacker_updates_per_phase = 1;
  int ego_updates_per_phase = 1;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.1;
  int ego_replay_episodes = 2000;
  int ego_batch_episodes = 32;
  int quality_episodes = 8;
  /// Evaluate every this many generations (and after the last one).
  int eval_every = 50;
  int eval_episodes = 32;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Per-step attack probability of the random attacker, K / T.
  double random_rate() const;
};

/// Deterministic sub-stream for (seed, purpose).
Rng stream(std::uint64_t seed, std::uint64_t purpose);

struct EvalPoint {
  int generation = 0;
  std::string protocol;
  int episodes = 0;
  double win_rate = 0.0;
  double win_ci = 0.0;
  double mean_return = 0.0;
  double return_ci = 0.0;
};

struct EvalSummary {
  double win_rate = 0.0;
  double win_ci = 0.0;
  double mean_return = 0.0;
  double return_ci = 0.0;
  int episodes = 0;
  int max_attacks = 0;
  long budget_violations = 0;
};
EvalSummary summarize(const std::vector<RolloutSummary>& runs, int budget);

/// What a training run actually did, for invariant checks.
struct TrainTrace {
  long episodes = 0;
  long ego_updates = 0;
  long attacker_updates = 0;
  int max_attacks = 0;
  long budget_violations = 0;
  long actions_changed_without_attack = 0;
  bool used_population_loss = false;
  bool evaluated_diversity = false;
  /// Ego parameters unchanged across every attacker phase and attacker
  /// parameters unchanged across every ego phase.
  bool alternation_pure = true;
  bool reward_duality = true;
  std::vector<std::size_t> population_sizes;
  std::vector<std::size_t> archive_sizes;
  std::vector<std::size_t> attacker_param_counts;
  std::vector<std::uint64_t> initial_member_digests;
};

struct TrainResult {
  EgoLearner ego;
  std::optional<Archive> archive;
  /// Persistent attackers (RARL, RAP) or the last trained population.
  std::vector<Attacker> attackers;
  std::vector<EvalPoint> metrics;
  TrainTrace trace;
};

/// Runs the configured method. When `out_dir` is set, each evaluation point
/// writes gen<g>/{ego.ckpt, archive/, metrics.csv} under it.
TrainResult train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Evolves an archive of attackers against a frozen ego: the same select,
/// train and update loop as ROMANCE without ego phases. With
/// `use_archive` false it trains one fixed population instead (every member
/// kept, no diversity term).
struct AttackerGeneration {
  std::vector<Attacker> attackers;
  std::optional<Archive> archive;
};
AttackerGeneration generate_attackers(const EgoLearner& ego, const TrainConfig& cfg, bool use_archive,
                                      int generations);

void write_metrics_csv(const std::filesystem::path& path, const std::string& method, std::uint64_t seed,
                       const std::vector<EvalPoint>& rows);
inline constexpr const char* kMetricsHeader =
    "schema,method,seed,generation,protocol,episodes,win_rate,win_ci,mean_return,return_ci";
inline constexpr int kMetricsSchema = 1;

}  // namespace romance
