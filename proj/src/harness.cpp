#include "romance/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "romance/error.hpp"
#include "romance/stats.hpp"

namespace romance {

namespace {

using nlohmann::json;

// Typed view over one config object that rejects unknown keys.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Fields() noexcept(false) = default;

  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void integer(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
      out = v->get<int>();
    }
  }
  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key) + ": expected a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void text(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void list(const char* key, std::vector<T>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(at(key) + ": expected a list");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        const std::string where = at(key) + "[" + std::to_string(i) + "]";
        if constexpr (std::is_same_v<T, std::string>) {
          if (!e.is_string()) throw ConfigError(where + ": expected a string");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (!e.is_number_unsigned()) throw ConfigError(where + ": expected a nonnegative integer");
        } else {
          if (!e.is_number_integer()) throw ConfigError(where + ": expected an integer");
        }
        out.push_back(e.get<T>());
      }
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  Fields object(const char* key) {
    static const json empty = json::object();
    const json* v = take(key);
    return Fields(v ? *v : empty, at(key));
  }
  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) throw ConfigError(at(item.key().c_str()) + ": unknown field");
  }

 private:
  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void parse_env(Fields f, EnvSettings& e) {
  f.text("id", e.id);
  if (e.id == "micro_battle") {
    auto& b = e.battle;
    f.integer("grid", b.grid);
    f.integer("n_allies", b.n_allies);
    f.integer("n_enemies", b.n_enemies);
    f.integer("hp", b.hp);
    f.integer("damage", b.damage);
    f.integer("attack_range", b.attack_range);
    f.real("sight", b.sight);
    f.integer("episode_limit", b.episode_limit);
    f.real("kill_bonus", b.kill_bonus);
    f.real("win_bonus", b.win_bonus);
    f.real("max_return", b.max_return);
    f.boolean("random_spawn", b.random_spawn);
  } else if (e.id == "chain_coop") {
    auto& c = e.chain;
    f.integer("cells", c.cells);
    f.integer("n_agents", c.n_agents);
    f.integer("episode_limit", c.episode_limit);
    f.real("gamma", c.gamma);
    f.real("goal_reward", c.goal_reward);
  } else {
    throw ConfigError(f.at("id") + ": unknown environment '" + e.id + "' (expected micro_battle or chain_coop)");
  }
  f.finish();
}

void parse_ego(Fields f, TrainConfig& t) {
  auto& e = t.ego;
  std::string mixer = to_string(e.mixer), activation = to_string(e.activation);
  f.text("mixer", mixer);
  f.text("activation", activation);
  try {
    e.mixer = parse_mixer(mixer);
  } catch (const ConfigError& err) {
    throw ConfigError(f.at("mixer") + ": " + err.what());
  }
  try {
    e.activation = parse_activation(activation);
  } catch (const std::exception& err) {
    throw ConfigError(f.at("activation") + ": " + err.what());
  }
  f.integer("window", e.window);
  f.integer("hidden", e.hidden);
  f.integer("embed", e.embed);
  f.real("lr", e.lr);
  f.real("gamma", e.gamma);
  f.integer("target_interval", e.target_interval);
  f.real("grad_clip", e.grad_clip);
  f.integer("replay_episodes", t.ego_replay_episodes);
  f.integer("batch_episodes", t.ego_batch_episodes);
  f.real("epsilon_start", t.epsilon_start);
  f.real("epsilon_end", t.epsilon_end);
  f.real("epsilon_fraction", t.epsilon_fraction);
  f.finish();
}

void parse_attacker(Fields f, AttackerConfig& a) {
  f.integer("hidden", a.hidden);
  f.real("lr", a.lr);
  f.real("gamma", a.gamma);
  f.real("lambda", a.lambda);
  f.real("delta", a.delta);
  f.real("smoothing", a.smoothing);
  f.integer("buffer_capacity", a.buffer_capacity);
  f.integer("replay_capacity", a.replay_capacity);
  f.integer("batch_size", a.batch_size);
  f.integer("target_interval", a.target_interval);
  f.integer("diversity_sample", a.diversity_sample);
  f.real("grad_clip", a.grad_clip);
  f.finish();
}

void parse_train(Fields f, TrainConfig& t) {
  f.integer("budget", t.budget);
  f.integer("population", t.population);
  f.integer("archive_capacity", t.archive_capacity);
  f.real("archive_threshold", t.archive_threshold);
  f.real("alpha", t.alpha);
  f.integer("generations", t.generations);
  f.integer("attacker_phases", t.attacker_phases);
  f.integer("ego_phases", t.ego_phases);
  f.integer("attacker_updates_per_phase", t.attacker_updates_per_phase);
  f.integer("ego_updates_per_phase", t.ego_updates_per_phase);
  f.integer("quality_episodes", t.quality_episodes);
  f.integer("eval_every", t.eval_every);
  f.integer("eval_episodes", t.eval_episodes);
  f.finish();
}

std::string line_of(const std::string& text, std::size_t byte) {
  const std::size_t end = std::min(byte, text.size());
  const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(end), '\n');
  return "line " + std::to_string(line);
}

std::uint64_t attacker_state_digest(const Attacker& a) { return a.digest() * 1099511628211ULL ^ a.buffer().digest(); }

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(line_of(text, e.byte) + ": syntax error: " + e.what());
  }
  ExperimentConfig cfg;
  Fields root(j, "");
  std::string method = to_string(cfg.train.method);
  root.text("method", method);
  try {
    cfg.train.method = parse_method(method);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("method: ") + e.what());
  }
  if (root.has("seed") && root.has("seeds")) throw ConfigError("seeds: give either seed or seeds, not both");
  std::uint64_t seed = 0;
  if (root.has("seed")) {
    root.unsigned_integer("seed", seed);
    cfg.seeds = {seed};
  }
  root.list("seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("seeds: must list at least one seed");
  std::string out = cfg.output_dir.string();
  root.text("output_dir", out);
  cfg.output_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : (base_dir / out).lexically_normal();

  parse_env(root.object("env"), cfg.train.env);
  parse_ego(root.object("ego"), cfg.train);
  parse_attacker(root.object("attacker"), cfg.train.attacker);
  parse_train(root.object("train"), cfg.train);

  Fields ev = root.object("eval");
  ev.list("protocols", cfg.eval.protocols);
  ev.integer("episodes", cfg.eval.episodes);
  ev.list("sweep_budgets", cfg.eval.sweep_budgets);
  std::string ega;
  ev.text("ega_attackers", ega);
  ev.finish();
  root.finish();

  for (const auto& p : cfg.eval.protocols)
    if (p != "natural" && p != "random" && p != "ega")
      throw ConfigError("eval.protocols: unknown protocol '" + p + "' (expected natural, random or ega)");
  if (cfg.eval.episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
  for (int k : cfg.eval.sweep_budgets)
    if (k < 0) throw ConfigError("eval.sweep_budgets: budgets must be >= 0");
  if (!ega.empty()) {
    cfg.eval.ega_attackers = std::filesystem::path(ega).is_absolute() ? std::filesystem::path(ega) : (base_dir / ega).lexically_normal();
    const bool needed = std::find(cfg.eval.protocols.begin(), cfg.eval.protocols.end(), "ega") != cfg.eval.protocols.end();
    if (needed && !std::filesystem::is_directory(*cfg.eval.ega_attackers))
      throw ConfigError("eval.ega_attackers: directory " + cfg.eval.ega_attackers->string() + " does not exist");
  } else if (std::find(cfg.eval.protocols.begin(), cfg.eval.protocols.end(), "ega") != cfg.eval.protocols.end()) {
    throw ConfigError("eval.ega_attackers: required by the ega protocol");
  }
  for (auto s : cfg.seeds) {
    cfg.train.seed = s;
    cfg.train.validate();
  }
  cfg.train.seed = cfg.seeds.front();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::uint64_t eval_seed(std::uint64_t run_seed) { return (stream(run_seed, 0xe7a1) () >> 12) + 7; }

std::vector<Attacker> load_attackers(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("attacker directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("attacker_", 0) == 0 && e.path().extension() == ".json")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Attacker> out;
  for (const auto& f : files) out.push_back(Attacker::load(f));
  if (out.empty()) throw ConfigError("no attacker checkpoints under " + dir.string());
  return out;
}

RolloutSummary evaluate_protocol(const EgoLearner& ego, const std::string& protocol, const TrainConfig& cfg,
                                 int budget, const std::vector<Attacker>& attackers, int episodes,
                                 std::uint64_t seed) {
  const int n = ego.dims().n_agents;
  const NeuralEgo policy(ego.online(), ego.shape(), n);
  if (protocol == "natural") {
    const LpaEnv env(make_env(cfg.env), 0);
    NullAttacker none;
    return run_episodes(policy, none, env, episodes, ego.dims().window, seed);
  }
  const LpaEnv env(make_env(cfg.env), budget);
  if (protocol == "random") {
    TrainConfig probe = cfg;
    probe.budget = budget;
    RandomAttacker random(n, probe.random_rate());
    return run_episodes(policy, random, env, episodes, ego.dims().window, seed);
  }
  if (protocol != "ega") throw ConfigError("unknown protocol '" + protocol + "'");
  if (attackers.empty()) throw ConfigError("ega protocol needs held-out attackers");
  RolloutSummary all;
  for (std::size_t i = 0; i < attackers.size(); ++i) {
    const Attacker& a = attackers[i];
    if (a.view_size() != env.env().spec().state_size + 1 || a.n_agents() != n)
      throw ConfigError("held-out attacker " + std::to_string(i) + " does not fit this environment");
    const std::uint64_t before = attacker_state_digest(a);
    Attacker copy = a;
    AttackerSelector sel(copy, false);
    const RolloutSummary r = run_episodes(policy, sel, env, episodes, ego.dims().window, seed);
    if (attacker_state_digest(copy) != before || attacker_state_digest(a) != before)
      throw ContractViolation("evaluation modified held-out attacker " + std::to_string(i));
    all.returns.insert(all.returns.end(), r.returns.begin(), r.returns.end());
    all.wins.insert(all.wins.end(), r.wins.begin(), r.wins.end());
    all.attacks.insert(all.attacks.end(), r.attacks.begin(), r.attacks.end());
    all.max_attacks = std::max(all.max_attacks, r.max_attacks);
    all.episodes += r.episodes;
    all.mean_return += r.mean_return * r.episodes;
    all.win_rate += r.win_rate * r.episodes;
  }
  all.mean_return /= all.episodes;
  all.win_rate /= all.episodes;
  return all;
}

EvalReport evaluate(const std::vector<EgoLearner>& egos, const std::vector<std::uint64_t>& seeds,
                    const std::string& protocol, const TrainConfig& cfg, int budget,
                    const std::vector<Attacker>& attackers, int episodes) {
  if (egos.empty() || egos.size() != seeds.size()) throw UsageError("evaluate needs one ego per seed");
  EvalReport rep;
  rep.protocol = protocol;
  rep.budget = protocol == "natural" ? 0 : budget;
  rep.episodes = episodes;
  std::vector<RolloutSummary> runs;
  for (std::size_t i = 0; i < egos.size(); ++i) {
    runs.push_back(evaluate_protocol(egos[i], protocol, cfg, budget, attackers, episodes, eval_seed(seeds[i])));
    rep.per_seed_win_rate.push_back(runs.back().win_rate);
    rep.per_seed_return.push_back(runs.back().mean_return);
  }
  if (egos.size() > 1) {
    const MeanCi w = mean_ci(rep.per_seed_win_rate), r = mean_ci(rep.per_seed_return);
    rep.win_rate = w.mean;
    rep.win_ci = w.half_width;
    rep.mean_return = r.mean;
    rep.return_ci = r.half_width;
  } else {
    const EvalSummary s = summarize(runs, rep.budget);
    rep.win_rate = s.win_rate;
    rep.win_ci = s.win_ci;
    rep.mean_return = s.mean_return;
    rep.return_ci = s.return_ci;
  }
  for (const auto& r : runs) rep.max_attacks = std::max(rep.max_attacks, r.max_attacks);
  return rep;
}

std::vector<EvalReport> budget_sweep(const std::vector<EgoLearner>& egos, const std::vector<std::uint64_t>& seeds,
                                     const TrainConfig& cfg, const std::vector<Attacker>& attackers,
                                     std::vector<int> budgets, int episodes) {
  if (budgets.empty()) throw ConfigError("eval.sweep_budgets: must not be empty");
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  std::vector<EvalReport> rows;
  for (int k : budgets) rows.push_back(evaluate(egos, seeds, "ega", cfg, k, attackers, episodes));
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::string& method,
                     const std::vector<EvalReport>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(10);
  out << "schema,method,budget,protocol,episodes,win_rate,win_ci,mean_return,return_ci\n";
  for (const auto& r : rows)
    out << kMetricsSchema << "," << method << "," << r.budget << "," << r.protocol << "," << r.episodes << ","
        << r.win_rate << "," << r.win_ci << "," << r.mean_return << "," << r.return_ci << "\n";
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"protocol", r.protocol},
          {"budget", r.budget},
          {"episodes", r.episodes},
          {"win_rate", r.win_rate},
          {"win_ci", r.win_ci},
          {"mean_return", r.mean_return},
          {"return_ci", r.return_ci},
          {"max_attacks", r.max_attacks},
          {"per_seed_win_rate", r.per_seed_win_rate},
          {"per_seed_return", r.per_seed_return}};
}

namespace {

std::vector<Attacker> ega_set(const ExperimentConfig& cfg) {
  const bool wanted =
      std::find(cfg.eval.protocols.begin(), cfg.eval.protocols.end(), "ega") != cfg.eval.protocols.end();
  if (!wanted) return {};
  return load_attackers(*cfg.eval.ega_attackers);
}

nlohmann::json final_reports(const ExperimentConfig& cfg, const std::vector<EgoLearner>& egos,
                             const std::vector<std::uint64_t>& seeds, std::vector<EvalPoint>* rows_per_seed,
                             const std::vector<Attacker>& attackers) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& protocol : cfg.eval.protocols) {
    const EvalReport r =
        evaluate(egos, seeds, protocol, cfg.train, cfg.train.budget, attackers, cfg.eval.episodes);
    reports.push_back(report_to_json(r));
    if (rows_per_seed)
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        EvalPoint p;
        p.generation = cfg.train.generations;
        p.protocol = "final_" + protocol;
        p.episodes = cfg.eval.episodes * (protocol == "ega" ? static_cast<int>(attackers.size()) : 1);
        p.win_rate = r.per_seed_win_rate[i];
        p.mean_return = r.per_seed_return[i];
        rows_per_seed[i].push_back(p);
      }
  }
  return reports;
}

void write_combined_metrics(const std::filesystem::path& path, const std::string& method,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::vector<EvalPoint>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(10);
  out << kMetricsHeader << "\n";
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (const auto& r : rows[i]) {
      for (double v : {r.win_rate, r.win_ci, r.mean_return, r.return_ci})
        if (!std::isfinite(v)) throw NumericalError("non-finite metric for seed " + std::to_string(seeds[i]));
      out << kMetricsSchema << "," << method << "," << seeds[i] << "," << r.generation << "," << r.protocol << ","
          << r.episodes << "," << r.win_rate << "," << r.win_ci << "," << r.mean_return << "," << r.return_ci
          << "\n";
    }
}

}  // namespace

void run_training(const ExperimentConfig& cfg) {
  const std::vector<Attacker> attackers = ega_set(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<EgoLearner> egos;
  std::vector<std::vector<EvalPoint>> rows;
  nlohmann::json per_seed = nlohmann::json::array();
  for (auto seed : cfg.seeds) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    const auto run_dir = cfg.output_dir / "run" / std::to_string(seed);
    TrainResult r = train(t, run_dir);
    r.ego.save(run_dir / "ego.ckpt");
    if (r.archive) {
      r.archive->save(run_dir / "archive");
      r.archive->write_distance_csv(run_dir / "archive" / "distances.csv");
    }
    per_seed.push_back({{"seed", seed},
                        {"episodes", r.trace.episodes},
                        {"max_attacks", r.trace.max_attacks},
                        {"budget_violations", r.trace.budget_violations},
                        {"alternation_pure", r.trace.alternation_pure}});
    egos.push_back(std::move(r.ego));
    rows.push_back(std::move(r.metrics));
  }
  nlohmann::json report = {{"schema", kMetricsSchema},
                           {"method", to_string(cfg.train.method)},
                           {"budget", cfg.train.budget},
                           {"seeds", cfg.seeds},
                           {"generations", cfg.train.generations},
                           {"training", per_seed}};
  report["reports"] = final_reports(cfg, egos, cfg.seeds, rows.data(), attackers);
  write_combined_metrics(cfg.output_dir / "metrics.csv", to_string(cfg.train.method), cfg.seeds, rows);
  save_json_file(cfg.output_dir / "report.json", report);
}

std::vector<std::pair<std::uint64_t, EgoLearner>> load_egos(const std::filesystem::path& checkpoint,
                                                           const std::vector<std::uint64_t>& seeds) {
  std::vector<std::pair<std::uint64_t, EgoLearner>> out;
  if (std::filesystem::is_regular_file(checkpoint)) {
    out.emplace_back(seeds.front(), EgoLearner::load(checkpoint));
    return out;
  }
  for (auto s : seeds) {
    const auto path = checkpoint / "run" / std::to_string(s) / "ego.ckpt";
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("missing ego checkpoint " + path.string());
    out.emplace_back(s, EgoLearner::load(path));
  }
  return out;
}

void run_evaluation(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint) {
  const std::vector<Attacker> attackers = ega_set(cfg);
  std::vector<EgoLearner> egos;
  std::vector<std::uint64_t> seeds;
  for (auto& [s, e] : load_egos(checkpoint, cfg.seeds)) {
    seeds.push_back(s);
    egos.push_back(std::move(e));
  }
  std::filesystem::create_directories(cfg.output_dir);
  nlohmann::json report = {{"schema", kMetricsSchema},
                           {"checkpoint", checkpoint.string()},
                           {"budget", cfg.train.budget},
                           {"seeds", seeds}};
  report["reports"] = final_reports(cfg, egos, seeds, nullptr, attackers);
  save_json_file(cfg.output_dir / "eval_report.json", report);
}

void run_sweep(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint) {
  if (!cfg.eval.ega_attackers) throw ConfigError("eval.ega_attackers: required by sweep");
  const std::vector<Attacker> attackers = load_attackers(*cfg.eval.ega_attackers);
  std::vector<EgoLearner> egos;
  std::vector<std::uint64_t> seeds;
  for (auto& [s, e] : load_egos(checkpoint.value_or(cfg.output_dir), cfg.seeds)) {
    seeds.push_back(s);
    egos.push_back(std::move(e));
  }
  std::filesystem::create_directories(cfg.output_dir);
  const auto rows = budget_sweep(egos, seeds, cfg.train, attackers, cfg.eval.sweep_budgets, cfg.eval.episodes);
  write_sweep_csv(cfg.output_dir / "sweep.csv", to_string(cfg.train.method), rows);
}

void run_generation(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& against) {
  std::filesystem::create_directories(cfg.output_dir);
  for (auto seed : cfg.seeds) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    const auto dir = cfg.output_dir / "attackers" / ("seed" + std::to_string(seed));
    if (against) {
      const EgoLearner ego = EgoLearner::load(*against);
      AttackerGeneration g = generate_attackers(ego, t, true, t.generations);
      g.archive->save(dir);
      g.archive->write_distance_csv(dir / "distances.csv");
    } else {
      t.method = Method::kRomance;
      TrainResult r = train(t);
      r.archive->save(dir);
      r.archive->write_distance_csv(dir / "distances.csv");
    }
  }
}

}  // namespace romance
