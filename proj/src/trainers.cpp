#include "romance/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "romance/error.hpp"
#include "romance/stats.hpp"

namespace romance {

Method parse_method(const std::string& name) {
  if (name == "romance") return Method::kRomance;
  if (name == "rarl") return Method::kRarl;
  if (name == "rap") return Method::kRap;
  if (name == "random") return Method::kRandom;
  if (name == "vanilla") return Method::kVanilla;
  throw ConfigError("unknown method '" + name + "' (expected romance, rarl, rap, random or vanilla)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kRomance: return "romance";
    case Method::kRarl: return "rarl";
    case Method::kRap: return "rap";
    case Method::kRandom: return "random";
    case Method::kVanilla: return "vanilla";
  }
  return "unknown";
}

std::unique_ptr<Environment> make_env(const EnvSettings& s) {
  if (s.id == "micro_battle") return std::make_unique<MicroBattle>(s.battle);
  if (s.id == "chain_coop") return std::make_unique<ChainCoop>(s.chain);
  throw ConfigError("env.id: unknown environment '" + s.id + "' (expected micro_battle or chain_coop)");
}

void TrainConfig::validate() const {
  const auto positive = [](int v, const char* field) {
    if (v < 1) throw ConfigError(std::string(field) + ": must be >= 1");
  };
  positive(generations, "train.generations");
  positive(attacker_phases, "train.attacker_phases");
  positive(ego_phases, "train.ego_phases");
  positive(attacker_updates_per_phase, "train.attacker_updates_per_phase");
  positive(ego_updates_per_phase, "train.ego_updates_per_phase");
  positive(population, "train.population");
  positive(archive_capacity, "train.archive_capacity");
  positive(ego_replay_episodes, "ego.replay_episodes");
  positive(ego_batch_episodes, "ego.batch_episodes");
  positive(quality_episodes, "train.quality_episodes");
  positive(eval_every, "train.eval_every");
  positive(eval_episodes, "train.eval_episodes");
  if (budget < 0) throw ConfigError("train.budget: must be >= 0");
  if (population > archive_capacity) throw ConfigError("train.population: must not exceed train.archive_capacity");
  if (alpha < 0.0) throw ConfigError("train.alpha: must be >= 0");
  if (!(attacker.lambda > 0.0)) throw ConfigError("attacker.lambda: must be > 0");
  if (attacker.delta < 0.0 || attacker.delta > 1.0) throw ConfigError("attacker.delta: must lie in [0, 1]");
  if (attacker.smoothing < 0.0 || attacker.smoothing > 1.0)
    throw ConfigError("attacker.smoothing: must lie in [0, 1]");
  if (!(ego.gamma >= 0.0 && ego.gamma < 1.0)) throw ConfigError("ego.gamma: must lie in [0, 1)");
  if (!(attacker.gamma >= 0.0 && attacker.gamma < 1.0)) throw ConfigError("attacker.gamma: must lie in [0, 1)");
  if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0)
    throw ConfigError("ego.epsilon: start and end must lie in [0, 1]");
  if (ego.window < 1) throw ConfigError("ego.window: must be >= 1");
  make_env(env);
}

double TrainConfig::random_rate() const {
  const double horizon = env.id == "chain_coop" ? env.chain.episode_limit : env.battle.episode_limit;
  return std::min(1.0, static_cast<double>(budget) / horizon);
}

Rng stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), 0x726f6dU};
  return Rng(seq);
}

EvalSummary summarize(const std::vector<RolloutSummary>& runs, int budget) {
  std::vector<double> wins, returns;
  EvalSummary s;
  for (const auto& r : runs) {
    for (int w : r.wins) wins.push_back(w);
    returns.insert(returns.end(), r.returns.begin(), r.returns.end());
    s.max_attacks = std::max(s.max_attacks, r.max_attacks);
    for (int a : r.attacks)
      if (a > budget) ++s.budget_violations;
  }
  if (wins.empty()) throw UsageError("nothing to summarize");
  const MeanCi w = mean_ci(wins);
  const MeanCi g = mean_ci(returns);
  s.win_rate = w.mean;
  s.win_ci = w.half_width;
  s.mean_return = g.mean;
  s.return_ci = g.half_width;
  s.episodes = static_cast<int>(wins.size());
  return s;
}

namespace {

enum Purpose : std::uint64_t { kInit = 1, kEgoAct, kAttackerAct, kReplay, kArchive, kEnvSeeds, kUpdate, kQuality, kEval };

std::uint64_t attackers_digest(const std::vector<Attacker*>& members) {
  std::uint64_t h = 0;
  for (const Attacker* m : members) h = h * 1099511628211ULL ^ m->digest();
  return h;
}

class Runner {
 public:
  Runner(const TrainConfig& cfg, const EgoLearner* frozen)
      : cfg_(cfg),
        env_(make_env(cfg.env), cfg.method == Method::kVanilla ? 0 : cfg.budget),
        natural_env_(make_env(cfg.env), 0),
        attack_env_(make_env(cfg.env), cfg.budget),
        init_rng_(stream(cfg.seed, kInit)),
        learner_(frozen ? *frozen : EgoLearner(EgoDims::from(env_.env().spec(), cfg.ego.window), cfg.ego, init_rng_)),
        replay_(static_cast<std::size_t>(cfg.ego_replay_episodes)),
        ego_rng_(stream(cfg.seed, kEgoAct)),
        attacker_rng_(stream(cfg.seed, kAttackerAct)),
        replay_rng_(stream(cfg.seed, kReplay)),
        archive_rng_(stream(cfg.seed, kArchive)),
        update_rng_(stream(cfg.seed, kUpdate)) {
    env_seed_base_ = stream(cfg.seed, kEnvSeeds)() >> 8;
    quality_seed_base_ = stream(cfg.seed, kQuality)() >> 8;
    eval_seed_ = stream(cfg.seed, kEval)() >> 8;
    n_ = env_.env().spec().n_agents;
    view_size_ = env_.env().spec().state_size + 1;
    total_ego_episodes_ = static_cast<long>(cfg.generations) * cfg.ego_phases * cfg.population;
  }

  Attacker fresh_attacker() { return Attacker(view_size_, n_, cfg_.attacker, init_rng_); }
  EgoLearner& learner() { return learner_; }
  TrainTrace& trace() { return trace_; }

  DualTrajectory rollout(VictimSelector& attacker, double epsilon) {
    const NeuralEgo ego(learner_.online(), learner_.shape(), n_);
    RolloutOptions opts;
    opts.epsilon = epsilon;
    opts.window = cfg_.ego.window;
    opts.gamma = cfg_.attacker.gamma;
    DualTrajectory t = collect_traj(ego, attacker, env_, env_seed_base_ + env_counter_++, opts, ego_rng_, attacker_rng_);
    account(t, env_.budget().capacity());
    return t;
  }

  void attacker_phase(std::vector<Attacker*>& members, bool use_diversity) {
    const std::uint64_t before = learner_.digest();
    for (Attacker* m : members) {
      AttackerSelector sel(*m, true);
      DualTrajectory t = rollout(sel, 0.0);
      for (auto& tr : t.attacker) m->remember(std::move(tr));
    }
    for (int u = 0; u < cfg_.attacker_updates_per_phase; ++u) {
      LossTrace lt;
      update_population(members, cfg_.alpha, use_diversity, update_rng_, &lt);
      trace_.used_population_loss |= lt.used_population_loss;
      trace_.evaluated_diversity |= lt.evaluated_diversity;
      ++trace_.attacker_updates;
    }
    if (learner_.digest() != before) trace_.alternation_pure = false;
  }

  void ego_phase(const std::vector<VictimSelector*>& opponents, const std::vector<Attacker*>& frozen) {
    const std::uint64_t before = attackers_digest(frozen);
    for (VictimSelector* opp : opponents) {
      const double eps =
          epsilon_at(ego_episodes_, total_ego_episodes_, cfg_.epsilon_start, cfg_.epsilon_end, cfg_.epsilon_fraction);
      DualTrajectory t = rollout(*opp, eps);
      replay_.add(std::move(t.ego));
      ++ego_episodes_;
    }
    for (int u = 0; u < cfg_.ego_updates_per_phase; ++u) {
      const auto episodes = replay_.sample(static_cast<std::size_t>(cfg_.ego_batch_episodes), replay_rng_);
      learner_.update(make_ego_batch(episodes, learner_.dims()));
      ++trace_.ego_updates;
    }
    if (attackers_digest(frozen) != before) trace_.alternation_pure = false;
  }

  double score(Attacker& a) {
    const NeuralEgo ego(learner_.online(), learner_.shape(), n_);
    AttackerSelector sel(a, false);
    const double q = quality(ego, sel, env_, cfg_.quality_episodes, cfg_.attacker.gamma, cfg_.ego.window,
                             quality_seed_base_ + 1000003ULL * quality_counter_++);
    a.quality = q;
    return q;
  }

  std::vector<EvalPoint> evaluate(int generation) {
    const NeuralEgo ego(learner_.online(), learner_.shape(), n_);
    std::vector<EvalPoint> out;
    NullAttacker none;
    RandomAttacker random(n_, cfg_.random_rate());
    const std::pair<const char*, VictimSelector*> protocols[] = {{"natural", &none}, {"random", &random}};
    for (const auto& [name, sel] : protocols) {
      const LpaEnv& probe = sel == &none ? natural_env_ : attack_env_;
      const RolloutSummary r = run_episodes(ego, *sel, probe, cfg_.eval_episodes, cfg_.ego.window, eval_seed_);
      const EvalSummary s = summarize({r}, probe.budget().capacity());
      trace_.max_attacks = std::max(trace_.max_attacks, s.max_attacks);
      trace_.budget_violations += s.budget_violations;
      trace_.episodes += s.episodes;
      out.push_back(EvalPoint{generation, name, s.episodes, s.win_rate, s.win_ci, s.mean_return, s.return_ci});
    }
    return out;
  }

 private:
  void account(const DualTrajectory& t, int capacity) {
    ++trace_.episodes;
    trace_.max_attacks = std::max(trace_.max_attacks, t.attacks_spent);
    if (t.attacks_spent > capacity) ++trace_.budget_violations;
    for (std::size_t i = 0; i < t.attacker.size(); ++i) {
      if (t.attacker[i].reward != -t.ego.rewards[i]) trace_.reward_duality = false;
      if (t.executed[i] != t.ego.actions[i] && !t.victims[i]) ++trace_.actions_changed_without_attack;
    }
  }

  const TrainConfig& cfg_;
  LpaEnv env_;
  LpaEnv natural_env_;
  LpaEnv attack_env_;
  Rng init_rng_;
  EgoLearner learner_;
  EpisodeReplay replay_;
  Rng ego_rng_, attacker_rng_, replay_rng_, archive_rng_, update_rng_;
  std::uint64_t env_seed_base_ = 0, quality_seed_base_ = 0, eval_seed_ = 0;
  std::uint64_t env_counter_ = 0, quality_counter_ = 0;
  long ego_episodes_ = 0, total_ego_episodes_ = 1;
  int n_ = 0, view_size_ = 0;
  TrainTrace trace_;

 public:
  Rng& archive_rng() { return archive_rng_; }
};

bool eval_due(const TrainConfig& cfg, int gen) { return gen % cfg.eval_every == 0 || gen == cfg.generations; }

void checkpoint(const std::filesystem::path& root, int gen, const TrainConfig& cfg, const EgoLearner& ego,
                const std::optional<Archive>& archive, const std::vector<Attacker>& attackers,
                const std::vector<EvalPoint>& metrics) {
  const auto dir = root / ("gen" + std::to_string(gen));
  std::filesystem::create_directories(dir);
  ego.save(dir / "ego.ckpt");
  if (archive) {
    archive->save(dir / "archive");
    archive->write_distance_csv(dir / "archive" / "distances.csv");
  } else if (!attackers.empty()) {
    std::filesystem::create_directories(dir / "attackers");
    for (std::size_t i = 0; i < attackers.size(); ++i)
      attackers[i].save(dir / "attackers" / ("attacker_" + std::to_string(i) + ".json"));
  }
  write_metrics_csv(dir / "metrics.csv", to_string(cfg.method), cfg.seed, metrics);
}

std::vector<VictimSelector*> as_selectors(std::vector<AttackerSelector>& sels) {
  std::vector<VictimSelector*> out;
  for (auto& s : sels) out.push_back(&s);
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  Runner run(cfg, nullptr);
  TrainResult result{run.learner(), std::nullopt, {}, {}, {}};
  std::vector<Attacker> persistent;
  std::optional<Archive> archive;

  if (cfg.method == Method::kRarl) persistent.push_back(run.fresh_attacker());
  if (cfg.method == Method::kRap)
    for (int j = 0; j < cfg.population; ++j) persistent.push_back(run.fresh_attacker());
  if (cfg.method == Method::kRomance) {
    archive.emplace(cfg.archive_capacity, cfg.archive_threshold, cfg.attacker.smoothing);
    std::vector<Attacker> initial;
    for (int j = 0; j < cfg.population; ++j) initial.push_back(run.fresh_attacker());
    for (auto& a : initial) run.score(a);
    archive->seed(initial);
  }
  for (const auto& a : persistent) run.trace().initial_member_digests.push_back(a.digest());

  std::vector<Attacker> population;
  for (int gen = 1; gen <= cfg.generations; ++gen) {
    switch (cfg.method) {
      case Method::kRomance: {
        const std::vector<std::size_t> picked = archive->select(cfg.population, run.archive_rng());
        population.clear();
        for (std::size_t i : picked) population.push_back(archive->entries()[i].attacker);
        std::vector<Attacker*> members;
        for (auto& a : population) members.push_back(&a);
        for (int p = 0; p < cfg.attacker_phases; ++p) run.attacker_phase(members, true);
        std::vector<AttackerSelector> sels;
        for (Attacker* m : members) sels.emplace_back(*m, false);
        for (int p = 0; p < cfg.ego_phases; ++p) run.ego_phase(as_selectors(sels), members);
        for (std::size_t i : std::set<std::size_t>(picked.begin(), picked.end())) run.score(archive->entry(i).attacker);
        for (auto& a : population) run.score(a);
        archive->update(population, run.archive_rng());
        run.trace().population_sizes.push_back(population.size());
        run.trace().archive_sizes.push_back(archive->size());
        run.trace().attacker_param_counts.push_back(population.front().online().scalar_count() * population.size());
        break;
      }
      case Method::kRarl:
      case Method::kRap: {
        std::vector<Attacker*> members;
        for (auto& a : persistent) members.push_back(&a);
        for (int p = 0; p < cfg.attacker_phases; ++p) run.attacker_phase(members, false);
        std::vector<AttackerSelector> sels;
        // RARL meets its single attacker as often as the others meet a population.
        for (int j = 0; j < cfg.population; ++j) sels.emplace_back(*members[static_cast<std::size_t>(j) % members.size()], false);
        for (int p = 0; p < cfg.ego_phases; ++p) run.ego_phase(as_selectors(sels), members);
        run.trace().population_sizes.push_back(persistent.size());
        run.trace().attacker_param_counts.push_back(persistent.front().online().scalar_count() * persistent.size());
        break;
      }
      case Method::kRandom:
      case Method::kVanilla: {
        RandomAttacker random(run.learner().dims().n_agents, cfg.random_rate());
        NullAttacker none;
        VictimSelector* opp = cfg.method == Method::kRandom ? static_cast<VictimSelector*>(&random) : &none;
        const std::vector<VictimSelector*> opponents(static_cast<std::size_t>(cfg.population), opp);
        for (int p = 0; p < cfg.ego_phases; ++p) run.ego_phase(opponents, {});
        break;
      }
    }
    if (eval_due(cfg, gen)) {
      for (auto& p : run.evaluate(gen)) result.metrics.push_back(p);
      if (out_dir)
        checkpoint(*out_dir, gen, cfg, run.learner(), archive,
                   cfg.method == Method::kRomance ? population : persistent, result.metrics);
    }
  }

  result.ego = run.learner();
  result.archive = std::move(archive);
  result.attackers = cfg.method == Method::kRomance ? population : persistent;
  result.trace = run.trace();
  return result;
}

AttackerGeneration generate_attackers(const EgoLearner& ego, const TrainConfig& cfg, bool use_archive,
                                      int generations) {
  cfg.validate();
  if (generations < 1) throw ConfigError("generations: must be >= 1");
  TrainConfig local = cfg;
  local.method = Method::kRomance;
  Runner run(local, &ego);
  AttackerGeneration out;
  if (use_archive) {
    Archive archive(cfg.archive_capacity, cfg.archive_threshold, cfg.attacker.smoothing);
    std::vector<Attacker> initial;
    for (int j = 0; j < cfg.population; ++j) initial.push_back(run.fresh_attacker());
    for (auto& a : initial) run.score(a);
    archive.seed(initial);
    for (int gen = 1; gen <= generations; ++gen) {
      const std::vector<std::size_t> picked = archive.select(cfg.population, run.archive_rng());
      std::vector<Attacker> population;
      for (std::size_t i : picked) population.push_back(archive.entries()[i].attacker);
      std::vector<Attacker*> members;
      for (auto& a : population) members.push_back(&a);
      for (int p = 0; p < cfg.attacker_phases; ++p) run.attacker_phase(members, true);
      for (std::size_t i : std::set<std::size_t>(picked.begin(), picked.end())) run.score(archive.entry(i).attacker);
      for (auto& a : population) run.score(a);
      archive.update(population, run.archive_rng());
    }
    for (const auto& e : archive.entries()) out.attackers.push_back(e.attacker);
    out.archive = std::move(archive);
  } else {
    for (int j = 0; j < cfg.population; ++j) out.attackers.push_back(run.fresh_attacker());
    std::vector<Attacker*> members;
    for (auto& a : out.attackers) members.push_back(&a);
    for (int gen = 1; gen <= generations; ++gen)
      for (int p = 0; p < cfg.attacker_phases; ++p) run.attacker_phase(members, false);
    for (auto& a : out.attackers) run.score(a);
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& method, std::uint64_t seed,
                       const std::vector<EvalPoint>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(10);
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) {
    for (double v : {r.win_rate, r.win_ci, r.mean_return, r.return_ci})
      if (!std::isfinite(v)) throw NumericalError("non-finite metric at generation " + std::to_string(r.generation));
    out << kMetricsSchema << "," << method << "," << seed << "," << r.generation << "," << r.protocol << ","
        << r.episodes << "," << r.win_rate << "," << r.win_ci << "," << r.mean_return << "," << r.return_ci << "\n";
  }
}

}  // namespace romance
