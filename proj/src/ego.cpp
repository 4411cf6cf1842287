#include "romance/ego.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "romance/error.hpp"

namespace romance {

MixerKind parse_mixer(const std::string& name) {
  if (name == "vdn") return MixerKind::kVdn;
  if (name == "qmix") return MixerKind::kQmix;
  throw ConfigError("unknown mixer '" + name + "' (expected vdn or qmix)");
}

std::string to_string(MixerKind kind) { return kind == MixerKind::kVdn ? "vdn" : "qmix"; }

EgoDims EgoDims::from(const EnvSpec& spec, int window) {
  EgoDims d;
  d.n_agents = spec.n_agents;
  d.n_actions = spec.n_actions;
  d.obs_size = spec.obs_size;
  d.state_size = spec.state_size;
  d.window = window;
  return d;
}

MlpShape agent_shape(const EgoDims& dims, const EgoConfig& cfg) {
  return MlpShape{{dims.input_size(), cfg.hidden, dims.n_actions}, cfg.activation};
}

namespace {

// Mixer parameter layout.
enum MixerParam : std::size_t { kW1w, kW1b, kB1w, kB1b, kW2w, kW2b, kV0w, kV0b, kV1w, kV1b, kMixerParams };

MlpShape value_shape(int state_size, int embed) { return MlpShape{{state_size, embed, 1}, Activation::kRelu}; }

void add_linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng) {
  const ParamSet one = make_mlp(MlpShape{{in, out}, Activation::kNone}, rng);
  ps.add(name + ".W", one.value(0));
  ps.add(name + ".b", one.value(1));
}

ad::Var linear(ad::Graph& g, const ParamSet& ps, std::size_t w, ad::Var x) {
  return ad::add(ad::matmul(x, g.param(ps, w)), g.param(ps, w + 1));
}

}  // namespace

EgoNets make_ego_nets(const EgoDims& dims, const EgoConfig& cfg, Rng& rng) {
  if (dims.n_agents < 1 || dims.n_actions < 2) throw ConfigError("ego needs agents and at least two actions");
  EgoNets nets;
  nets.agent = make_mlp(agent_shape(dims, cfg), rng, "agent.");
  if (cfg.mixer == MixerKind::kQmix) {
    const int s = dims.state_size;
    const int e = cfg.embed;
    add_linear(nets.mixer, "hyper_w1", s, dims.n_agents * e, rng);
    add_linear(nets.mixer, "hyper_b1", s, e, rng);
    add_linear(nets.mixer, "hyper_w2", s, e, rng);
    const ParamSet v = make_mlp(value_shape(s, e), rng, "value.");
    for (std::size_t i = 0; i < v.size(); ++i) nets.mixer.add(v.name(i), v.value(i));
  }
  return nets;
}

Mat agent_inputs(const Mat& histories, int n_agents) {
  Mat out(histories.rows(), histories.cols() + n_agents);
  out.leftCols(histories.cols()) = histories;
  out.rightCols(n_agents).setZero();
  for (Eigen::Index r = 0; r < histories.rows(); ++r) out(r, histories.cols() + r % n_agents) = 1.0;
  return out;
}

Mat agent_utilities(const EgoNets& nets, const MlpShape& shape, const Mat& histories) {
  return mlp_eval(nets.agent, agent_inputs(histories, static_cast<int>(histories.rows())), shape);
}

ad::Var mix(ad::Graph& g, const EgoNets& nets, MixerKind kind, ad::Var agent_qs, ad::Var states, int embed) {
  if (kind == MixerKind::kVdn) return ad::sum_rows(agent_qs);
  if (nets.mixer.size() != kMixerParams) throw ConfigError("QMIX mixer parameters missing");
  const ParamSet& m = nets.mixer;
  const ad::Var w1 = ad::abs(linear(g, m, kW1w, states));
  const ad::Var b1 = linear(g, m, kB1w, states);
  const ad::Var hidden = ad::relu(ad::add(ad::row_bilinear(agent_qs, w1), b1));
  const ad::Var w2 = ad::abs(linear(g, m, kW2w, states));
  const ad::Var v = mlp_forward(g, m, states, value_shape(static_cast<int>(states.cols()), embed), kV0w);
  return ad::add(ad::sum_rows(ad::mul(hidden, w2)), v);
}

Mat mix_eval(const EgoNets& nets, MixerKind kind, const Mat& agent_qs, const Mat& states, int embed) {
  ad::Graph g;
  return mix(g, nets, kind, g.constant(agent_qs), g.constant(states), embed).value();
}

EgoBatch make_ego_batch(const std::vector<const Episode*>& episodes, const EgoDims& dims) {
  int total = 0;
  for (const Episode* ep : episodes) total += ep->length();
  if (total == 0) throw UsageError("ego batch is empty");
  const int n = dims.n_agents;
  EgoBatch b;
  b.inputs = Mat::Zero(total * n, dims.input_size());
  b.next_inputs = Mat::Zero(total * n, dims.input_size());
  b.states.resize(total, dims.state_size);
  b.next_states.resize(total, dims.state_size);
  b.actions.reserve(static_cast<std::size_t>(total * n));
  b.next_masks.reserve(static_cast<std::size_t>(total * n));
  b.rewards.resize(total);
  b.not_done.resize(total);
  const int hist = dims.history_size();
  int row = 0;
  for (const Episode* ep : episodes) {
    // Window features for every decision point of the episode, computed once.
    std::vector<Mat> feats(static_cast<std::size_t>(ep->length() + 1), Mat(n, hist));
    for (int t = 0; t <= ep->length(); ++t)
      for (int i = 0; i < n; ++i)
        feats[static_cast<std::size_t>(t)].row(i) =
            history_features(ep->observations, ep->actions, t, i, dims.window, dims.n_actions).transpose();
    for (int t = 0; t < ep->length(); ++t, ++row) {
      const auto ts = static_cast<std::size_t>(t);
      for (int i = 0; i < n; ++i) {
        const int r = row * n + i;
        b.inputs.row(r).head(hist) = feats[ts].row(i);
        b.inputs(r, hist + i) = 1.0;
        b.next_inputs.row(r).head(hist) = feats[ts + 1].row(i);
        b.next_inputs(r, hist + i) = 1.0;
        b.actions.push_back(ep->actions[ts][static_cast<std::size_t>(i)]);
        b.next_masks.push_back(ep->masks[ts + 1][static_cast<std::size_t>(i)]);
      }
      b.states.row(row) = ep->states[ts].transpose();
      b.next_states.row(row) = ep->states[ts + 1].transpose();
      b.rewards(row) = ep->rewards[ts];
      const bool last = t + 1 == ep->length();
      b.not_done(row) = (last && ep->terminal) ? 0.0 : 1.0;
    }
  }
  return b;
}

ad::Var td_loss(ad::Graph& g, const EgoNets& online, const EgoNets& target, const EgoBatch& batch,
                const EgoDims& dims, const EgoConfig& cfg) {
  const int B = batch.size();
  const int n = dims.n_agents;
  const MlpShape shape = agent_shape(dims, cfg);

  // Target: per-agent masked argmax of the target utilities, mixed by the
  // target mixer on the next state.
  const Mat next_q = mlp_eval(target.agent, batch.next_inputs, shape);
  Mat next_best(B, n);
  for (int r = 0; r < B * n; ++r) {
    const ActionMask& mask = batch.next_masks[static_cast<std::size_t>(r)];
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < dims.n_actions; ++a)
      if (mask[static_cast<std::size_t>(a)] && next_q(r, a) > best) best = next_q(r, a);
    if (!std::isfinite(best)) throw ContractViolation("empty next-state mask in ego batch");
    next_best(r / n, r % n) = best;
  }
  const Mat next_tot = mix_eval(target, cfg.mixer, next_best, batch.next_states, cfg.embed);
  Mat y(B, 1);
  for (int b = 0; b < B; ++b) y(b, 0) = batch.rewards(b) + cfg.gamma * batch.not_done(b) * next_tot(b, 0);

  const ad::Var q = mlp_forward(g, online.agent, g.constant(batch.inputs), shape);
  const ad::Var chosen = ad::reshape(ad::gather_cols(q, batch.actions), B, n);
  const ad::Var q_tot = mix(g, online, cfg.mixer, chosen, g.constant(batch.states), cfg.embed);
  return ad::mean(ad::square(ad::sub(q_tot, g.constant(y))));
}

double epsilon_at(long episode, long total_episodes, double start, double end, double fraction) {
  const double horizon = std::max(1.0, fraction * static_cast<double>(total_episodes));
  const double progress = std::min(1.0, static_cast<double>(episode) / horizon);
  return start + (end - start) * progress;
}

EpisodeReplay::EpisodeReplay(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void EpisodeReplay::add(Episode episode) {
  if (episode.length() == 0) return;
  episodes_.push_back(std::move(episode));
  if (episodes_.size() > capacity_) episodes_.pop_front();
}

std::vector<const Episode*> EpisodeReplay::sample(std::size_t count, Rng& rng) const {
  if (episodes_.empty()) throw UsageError("sampling from an empty replay");
  std::uniform_int_distribution<std::size_t> pick(0, episodes_.size() - 1);
  std::vector<const Episode*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&episodes_[pick(rng)]);
  return out;
}

EgoLearner::EgoLearner(const EgoDims& dims, const EgoConfig& cfg, Rng& rng)
    : dims_(dims), cfg_(cfg), shape_(agent_shape(dims, cfg)), online_(make_ego_nets(dims, cfg, rng)),
      target_(online_), agent_opt_(RmsPropConfig{cfg.lr, 0.99, 1e-5, 0.0}),
      mixer_opt_(RmsPropConfig{cfg.lr, 0.99, 1e-5, 0.0}) {
  if (cfg.target_interval < 1) throw ConfigError("target interval must be at least 1");
}

double EgoLearner::update(const EgoBatch& batch) {
  ad::Graph g;
  const ad::Var loss = td_loss(g, online_, target_, batch, dims_, cfg_);
  g.backward(loss);
  std::vector<Mat> ga = g.gradients(online_.agent);
  std::vector<Mat> gm = g.gradients(online_.mixer);
  if (cfg_.grad_clip > 0.0) {
    std::vector<Mat> all = ga;
    all.insert(all.end(), gm.begin(), gm.end());
    const double norm = global_norm(all);
    if (norm > cfg_.grad_clip) {
      const double s = cfg_.grad_clip / norm;
      for (auto& m : ga) m *= s;
      for (auto& m : gm) m *= s;
    }
  }
  agent_opt_.step(online_.agent, std::move(ga));
  if (online_.mixer.size() > 0) mixer_opt_.step(online_.mixer, std::move(gm));
  ++updates_;
  if (++since_sync_ >= cfg_.target_interval) sync_target();
  return loss.value()(0, 0);
}

void EgoLearner::sync_target() {
  target_ = online_;
  since_sync_ = 0;
}

std::uint64_t EgoLearner::digest() const {
  return online_.agent.digest() ^ (online_.mixer.digest() * 1099511628211ULL);
}

nlohmann::json EgoLearner::to_json() const {
  return {{"format_version", ParamSet::kFormatVersion},
          {"kind", "ego"},
          {"mixer", to_string(cfg_.mixer)},
          {"dims",
           {{"n_agents", dims_.n_agents},
            {"n_actions", dims_.n_actions},
            {"obs_size", dims_.obs_size},
            {"state_size", dims_.state_size},
            {"window", dims_.window}}},
          {"config",
           {{"hidden", cfg_.hidden},
            {"embed", cfg_.embed},
            {"activation", to_string(cfg_.activation)},
            {"lr", cfg_.lr},
            {"gamma", cfg_.gamma},
            {"target_interval", cfg_.target_interval},
            {"grad_clip", cfg_.grad_clip}}},
          {"online", {{"agent", online_.agent.to_json()}, {"mixer", online_.mixer.to_json()}}},
          {"target", {{"agent", target_.agent.to_json()}, {"mixer", target_.mixer.to_json()}}},
          {"updates", updates_},
          {"updates_since_sync", since_sync_}};
}

EgoLearner EgoLearner::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "ego") throw ConfigError("checkpoint is not an ego checkpoint");
    if (j.at("format_version") != ParamSet::kFormatVersion) throw ConfigError("unsupported ego checkpoint version");
    EgoLearner l;
    const auto& d = j.at("dims");
    l.dims_.n_agents = d.at("n_agents");
    l.dims_.n_actions = d.at("n_actions");
    l.dims_.obs_size = d.at("obs_size");
    l.dims_.state_size = d.at("state_size");
    l.dims_.window = d.at("window");
    const auto& c = j.at("config");
    l.cfg_.mixer = parse_mixer(j.at("mixer"));
    l.cfg_.window = l.dims_.window;
    l.cfg_.hidden = c.at("hidden");
    l.cfg_.embed = c.at("embed");
    l.cfg_.activation = parse_activation(c.at("activation"));
    l.cfg_.lr = c.at("lr");
    l.cfg_.gamma = c.at("gamma");
    l.cfg_.target_interval = c.at("target_interval");
    l.cfg_.grad_clip = c.at("grad_clip");
    l.shape_ = agent_shape(l.dims_, l.cfg_);
    l.online_.agent = ParamSet::from_json(j.at("online").at("agent"));
    l.online_.mixer = ParamSet::from_json(j.at("online").at("mixer"));
    l.target_.agent = ParamSet::from_json(j.at("target").at("agent"));
    l.target_.mixer = ParamSet::from_json(j.at("target").at("mixer"));
    l.agent_opt_ = RmsProp(RmsPropConfig{l.cfg_.lr, 0.99, 1e-5, 0.0});
    l.mixer_opt_ = RmsProp(RmsPropConfig{l.cfg_.lr, 0.99, 1e-5, 0.0});
    l.updates_ = j.at("updates");
    l.since_sync_ = j.at("updates_since_sync");
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed ego checkpoint: ") + e.what());
  }
}

void EgoLearner::save(const std::filesystem::path& path) const { save_json_file(path, to_json()); }

EgoLearner EgoLearner::load(const std::filesystem::path& path) { return from_json(load_json_file(path)); }

EgoDecision NeuralEgo::act(const DecisionContext& ctx, double epsilon, Rng& rng) const {
  if (ctx.histories == nullptr || ctx.masks == nullptr) throw UsageError("NeuralEgo needs histories and masks");
  const Mat q = mlp_eval(nets_->agent, agent_inputs(*ctx.histories, n_agents_), shape_);
  EgoDecision d;
  for (int i = 0; i < n_agents_; ++i) d.q.push_back(q.row(i).transpose());
  d.actions = epsilon_greedy(d.q, *ctx.masks, epsilon, rng);
  return d;
}

}  // namespace romance
