#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "romance/chain_coop.hpp"
#include "romance/error.hpp"
#include "romance/harness.hpp"
#include "romance/trainers.hpp"

using namespace romance;

namespace {

TrainConfig tiny(Method m) {
  TrainConfig c;
  c.method = m;
  c.env.id = "chain_coop";
  c.env.chain.cells = 4;
  c.env.chain.episode_limit = 8;
  c.ego.hidden = 8;
  c.ego.embed = 4;
  c.ego.target_interval = 5;
  c.attacker.hidden = 8;
  c.attacker.batch_size = 8;
  c.attacker.target_interval = 5;
  c.budget = 2;
  c.population = 2;
  c.archive_capacity = 4;
  c.generations = 3;
  c.attacker_phases = 2;
  c.ego_phases = 2;
  c.ego_batch_episodes = 4;
  c.quality_episodes = 2;
  c.eval_every = 2;
  c.eval_episodes = 4;
  c.seed = 7;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// An ego whose greedy action is always "right": optimal on ChainCoop.
EgoLearner walking_ego(const TrainConfig& cfg) {
  ChainCoop env(cfg.env.chain);
  Rng rng(1);
  EgoLearner ego(EgoDims::from(env.spec(), cfg.ego.window), cfg.ego, rng);
  ParamSet& agent = ego.mutable_online().agent;
  for (std::size_t i = 0; i < agent.size(); ++i)
    agent.assign(i, Mat::Zero(agent.value(i).rows(), agent.value(i).cols()));
  Mat bias(1, 3);
  bias << -1.0, 0.0, 1.0;
  agent.assign(agent.size() - 1, bias);
  return ego;
}

}  // namespace

TEST_CASE("config validation names the field") {
  TrainConfig c = tiny(Method::kRomance);
  c.population = 5;
  try {
    c.validate();
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("population") != std::string::npos);
  }
  c = tiny(Method::kRomance);
  c.generations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_method("rarl") == Method::kRarl);
  CHECK_THROWS_AS(parse_method("pbt"), ConfigError);
}

TEST_CASE("one-generation ROMANCE trace") {
  TrainConfig c = tiny(Method::kRomance);
  c.generations = 1;
  c.population = 1;
  c.attacker_phases = 1;
  c.ego_phases = 1;
  const TrainResult r = train(c);
  CHECK(r.trace.attacker_updates == 1);
  CHECK(r.trace.ego_updates == 1);
  CHECK(r.trace.population_sizes == std::vector<std::size_t>{1});
  REQUIRE(r.trace.archive_sizes.size() == 1);
  CHECK(r.trace.archive_sizes[0] >= 1);
  CHECK(r.trace.archive_sizes[0] <= 2);
  CHECK(r.trace.used_population_loss);
  CHECK(r.trace.alternation_pure);
  CHECK(r.trace.reward_duality);
  CHECK(r.trace.budget_violations == 0);
  CHECK(r.trace.actions_changed_without_attack == 0);
}

TEST_CASE("evaluation cadence") {
  TrainConfig c = tiny(Method::kRomance);
  c.generations = 5;
  c.eval_every = 2;
  const TrainResult r = train(c);
  std::vector<int> gens;
  for (const auto& p : r.metrics) gens.push_back(p.generation);
  CHECK(gens == std::vector<int>{2, 2, 4, 4, 5, 5});
  CHECK(r.trace.evaluated_diversity);
}

TEST_CASE("RARL uses one attacker and the plain SPRQ loss") {
  const TrainConfig c = tiny(Method::kRarl);
  const TrainResult r = train(c);
  REQUIRE(r.attackers.size() == 1);
  CHECK_FALSE(r.trace.used_population_loss);
  CHECK_FALSE(r.trace.evaluated_diversity);
  CHECK(std::set<std::size_t>(r.trace.attacker_param_counts.begin(), r.trace.attacker_param_counts.end()).size() == 1);
  CHECK(r.trace.alternation_pure);
  const TrainResult again = train(c);
  CHECK(again.ego.digest() == r.ego.digest());
  CHECK(again.attackers[0].digest() == r.attackers[0].digest());
}

TEST_CASE("RAP keeps a fixed population of independent members") {
  const TrainConfig c = tiny(Method::kRap);
  const TrainResult r = train(c);
  CHECK(r.attackers.size() == 2);
  for (auto s : r.trace.population_sizes) CHECK(s == 2);
  CHECK_FALSE(r.trace.evaluated_diversity);
  CHECK_FALSE(r.trace.used_population_loss);
  REQUIRE(r.trace.initial_member_digests.size() == 2);
  CHECK(r.trace.initial_member_digests[0] != r.trace.initial_member_digests[1]);
  CHECK_FALSE(r.archive);
}

TEST_CASE("RANDOM and vanilla") {
  const TrainResult random = train(tiny(Method::kRandom));
  CHECK(random.trace.budget_violations == 0);
  CHECK(random.trace.max_attacks <= 2);
  CHECK(random.attackers.empty());

  const TrainResult vanilla = train(tiny(Method::kVanilla));
  CHECK(vanilla.trace.actions_changed_without_attack == 0);
  CHECK(vanilla.trace.alternation_pure);

  // Tuned rate on full-length episodes: an idle ego never reaches the flag.
  TrainConfig c = tiny(Method::kRandom);
  c.env.chain.episode_limit = 12;
  c.budget = 4;
  Vec stay(3);
  stay << 0.0, 1.0, 0.0;
  const TabularEgo idle(std::vector<std::vector<Vec>>(17, std::vector<Vec>(2, stay)));
  RandomAttacker attacker(2, c.random_rate());
  const LpaEnv env(make_env(c.env), c.budget);
  const RolloutSummary s = run_episodes(idle, attacker, env, 1000, 4, 3);
  double mean = 0.0;
  for (int a : s.attacks) mean += a;
  mean /= 1000.0;
  CHECK(s.max_attacks <= 4);
  CHECK(mean >= 0.8 * 4);
  CHECK(mean <= 1.2 * 4);
}

TEST_CASE("training is reproducible") {
  for (Method m : {Method::kRomance, Method::kRap, Method::kVanilla}) {
    const TrainResult a = train(tiny(m));
    const TrainResult b = train(tiny(m));
    CHECK(a.ego.digest() == b.ego.digest());
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
      CHECK(a.metrics[i].mean_return == b.metrics[i].mean_return);
      CHECK(a.metrics[i].win_rate == b.metrics[i].win_rate);
    }
  }
}

TEST_CASE("without diversity a one-member population step is the RARL step") {
  Rng rng(3);
  AttackerConfig cfg;
  cfg.hidden = 8;
  cfg.batch_size = 6;
  Attacker a(4, 2, cfg, rng);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> act(0, 2);
  for (int i = 0; i < 20; ++i) {
    AttackerTransition t;
    t.obs = Vec::NullaryExpr(4, [&] { return normal(rng); });
    t.next_obs = Vec::NullaryExpr(4, [&] { return normal(rng); });
    t.action = act(rng);
    t.reward = normal(rng);
    t.done = i % 5 == 0;
    a.remember(t);
    if (t.action < 2) a.buffer().record(t.obs, t.action, 1);
  }
  Attacker b = a;
  std::vector<Attacker*> pa{&a}, pb{&b};
  Rng ra(8), rb(8);
  LossTrace ta, tb;
  const double la = update_population(pa, 0.0, true, ra, &ta);
  const double lb = update_population(pb, 0.1, false, rb, &tb);
  CHECK(la == doctest::Approx(lb).epsilon(1e-12));
  CHECK(a.digest() == b.digest());
  CHECK(ta.used_population_loss);
  CHECK_FALSE(ta.evaluated_diversity);
  CHECK_FALSE(tb.used_population_loss);
}

TEST_CASE("metrics csv rejects non-finite values") {
  const auto path = std::filesystem::temp_directory_path() / "romance_metrics_nan.csv";
  EvalPoint p;
  p.protocol = "natural";
  p.win_rate = std::nan("");
  CHECK_THROWS_AS(write_metrics_csv(path, "vanilla", 0, {p}), NumericalError);
  std::filesystem::remove(path);
}

TEST_CASE("config parsing diagnostics") {
  const std::string good = R"({"method": "rap", "seeds": [1, 2], "env": {"id": "chain_coop", "cells": 4},
    "train": {"budget": 3, "population": 2, "archive_capacity": 4}, "output_dir": "out"})";
  const ExperimentConfig cfg = parse_config(good, "/base");
  CHECK(cfg.train.method == Method::kRap);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(cfg.train.env.chain.cells == 4);
  CHECK(cfg.train.budget == 3);
  CHECK(cfg.output_dir == std::filesystem::path("/base/out"));

  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(R"({"train": {"budgte": 2}})").find("train.budgte: unknown field") != std::string::npos);
  CHECK(message("{\n\"train\": {\n\"budget\": 2,}\n}").find("line 3") != std::string::npos);
  CHECK(message(R"({"train": {"budget": "four"}})").find("train.budget: expected an integer") != std::string::npos);
  CHECK(message(R"({"train": {"budget": -1}})").find("budget") != std::string::npos);
  CHECK(message(R"({"env": {"id": "starcraft"}})").find("env.id") != std::string::npos);
  CHECK(message(R"({"env": {"id": "chain_coop", "grid": 8}})").find("env.grid: unknown field") != std::string::npos);
  CHECK(message(R"({"eval": {"protocols": ["ega"], "ega_attackers": "/no/such/dir"}})").find("eval.ega_attackers") !=
        std::string::npos);
  CHECK(message(R"({"eval": {"protocols": ["natural", "adversarial"]}})").find("eval.protocols") != std::string::npos);
  CHECK(message(R"({"seed": 1, "seeds": [2]})").find("seeds") != std::string::npos);
  CHECK_THROWS_AS(load_config("/no/such/config.json"), ConfigError);
}

TEST_CASE("evaluation protocols") {
  TrainConfig c = tiny(Method::kVanilla);
  const EgoLearner ego = walking_ego(c);
  const std::vector<Attacker> none;
  const RolloutSummary natural = evaluate_protocol(ego, "natural", c, 2, none, 8, 5);
  CHECK(natural.win_rate == 1.0);
  CHECK(natural.max_attacks == 0);
  const RolloutSummary random = evaluate_protocol(ego, "random", c, 2, none, 50, 5);
  CHECK(random.max_attacks <= 2);
  CHECK_THROWS_AS(evaluate_protocol(ego, "ega", c, 2, none, 4, 5), ConfigError);
  CHECK_THROWS_AS(evaluate_protocol(ego, "bogus", c, 2, none, 4, 5), ConfigError);

  // Held-out attackers: unchanged by evaluation, K = 0 row equals natural.
  TrainConfig g = tiny(Method::kRomance);
  const AttackerGeneration gen = generate_attackers(ego, g, true, 2);
  REQUIRE(gen.archive);
  std::vector<std::uint64_t> before;
  for (const auto& a : gen.attackers) before.push_back(a.digest() ^ a.buffer().digest());
  const std::vector<EgoLearner> egos{ego};
  const auto rows = budget_sweep(egos, {0}, c, gen.attackers, {4, 0, 2}, 6);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].budget == 0);
  CHECK(rows[1].budget == 2);
  CHECK(rows[2].budget == 4);
  const EvalReport nat = evaluate(egos, {0}, "natural", c, 0, gen.attackers, 6);
  CHECK(rows[0].win_rate == nat.win_rate);
  CHECK(rows[0].mean_return == nat.mean_return);
  for (const auto& r : rows) CHECK(r.max_attacks <= r.budget);
  for (std::size_t i = 0; i < gen.attackers.size(); ++i)
    CHECK((gen.attackers[i].digest() ^ gen.attackers[i].buffer().digest()) == before[i]);
  CHECK_THROWS_AS(budget_sweep(egos, {0}, c, gen.attackers, {}, 6), ConfigError);
}

TEST_CASE("run_training emits every declared file deterministically") {
  const auto root = std::filesystem::temp_directory_path() / "romance_harness_test";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  const std::string text = R"({
    "method": "romance", "seeds": [0, 1], "output_dir": "out",
    "env": {"id": "chain_coop", "cells": 4, "episode_limit": 8},
    "ego": {"hidden": 8, "embed": 4, "batch_episodes": 4},
    "attacker": {"hidden": 8, "batch_size": 8},
    "train": {"budget": 2, "population": 2, "archive_capacity": 4, "generations": 2,
              "attacker_phases": 1, "ego_phases": 1, "quality_episodes": 2, "eval_every": 1, "eval_episodes": 4},
    "eval": {"protocols": ["natural", "random"], "episodes": 4}})";
  std::ofstream(root / "cfg.json") << text;
  const ExperimentConfig cfg = load_config(root / "cfg.json");
  run_training(cfg);
  const auto out = root / "out";
  for (const char* f : {"metrics.csv", "report.json", "run/0/ego.ckpt", "run/1/ego.ckpt", "run/0/gen1/ego.ckpt",
                        "run/0/gen2/metrics.csv", "run/0/gen2/archive/index.json",
                        "run/0/gen2/archive/distances.csv", "run/1/archive/distances.csv"})
    CHECK_MESSAGE(std::filesystem::exists(out / f), f);
  const std::string first = slurp(out / "metrics.csv");
  CHECK(first.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  std::istringstream lines(first);
  std::string line;
  while (std::getline(lines, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
    CHECK(line.find("nan") == std::string::npos);
  }
  const nlohmann::json report = load_json_file(out / "report.json");
  CHECK(report.at("schema") == kMetricsSchema);
  CHECK(report.at("reports").size() == 2);
  for (const auto& r : report.at("reports")) {
    CHECK(r.at("win_rate").get<double>() >= 0.0);
    CHECK(r.at("win_rate").get<double>() <= 1.0);
    CHECK(r.at("per_seed_win_rate").size() == 2);
  }

  run_training(cfg);
  CHECK(slurp(out / "metrics.csv") == first);

  // The saved egos evaluate from the run directory.
  ExperimentConfig ev = cfg;
  ev.output_dir = root / "eval";
  run_evaluation(ev, out);
  CHECK(std::filesystem::exists(root / "eval" / "eval_report.json"));
  std::filesystem::remove_all(root);
}

TEST_CASE("invalid configs create no output directory") {
  const auto root = std::filesystem::temp_directory_path() / "romance_bad_config";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  std::ofstream(root / "bad.json") << R"({"output_dir": "out", "train": {"generations": 0}})";
  CHECK_THROWS_AS(load_config(root / "bad.json"), ConfigError);
  CHECK_FALSE(std::filesystem::exists(root / "out"));
  std::filesystem::remove_all(root);
}
