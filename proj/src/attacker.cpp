#include "romance/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "romance/error.hpp"
#include "romance/regularized.hpp"

namespace romance {

AttackPointBuffer::AttackPointBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("attack-point buffer capacity must be positive");
}

bool AttackPointBuffer::record(const Vec& view, std::optional<int> victim, int remaining) {
  if (!victim || remaining <= 0) return false;
  points_.push_back(view);
  if (points_.size() > capacity_) points_.pop_front();
  return true;
}

std::uint64_t AttackPointBuffer::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : points_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data());
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(p.size()); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

nlohmann::json AttackPointBuffer::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points_) pts.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  return {{"capacity", capacity_}, {"points", pts}};
}

AttackPointBuffer AttackPointBuffer::from_json(const nlohmann::json& j) {
  AttackPointBuffer b(j.at("capacity").get<std::size_t>());
  for (const auto& p : j.at("points")) {
    const auto v = p.get<std::vector<double>>();
    b.points_.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return b;
}

AttackerBatch make_attacker_batch(const std::vector<const AttackerTransition*>& transitions) {
  if (transitions.empty()) throw UsageError("attacker batch is empty");
  const auto B = static_cast<Eigen::Index>(transitions.size());
  const Eigen::Index d = transitions.front()->obs.size();
  AttackerBatch b;
  b.obs.resize(B, d);
  b.next_obs.resize(B, d);
  b.rewards.resize(B);
  b.not_done.resize(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& t = *transitions[static_cast<std::size_t>(i)];
    b.obs.row(i) = t.obs.transpose();
    b.next_obs.row(i) = t.next_obs.transpose();
    b.actions.push_back(t.action);
    b.rewards(i) = t.reward;
    b.not_done(i) = t.done ? 0.0 : 1.0;
  }
  return b;
}

MlpShape attacker_shape(int view_size, int n_agents, int hidden) {
  return MlpShape{{view_size, hidden, n_agents + 1}, Activation::kRelu};
}

Vec victim_policy(const ParamSet& phi, const MlpShape& shape, const Vec& view, double lambda, const Vec& prior) {
  const Mat q = mlp_eval(phi, view.transpose(), shape);
  return soft_policy(q.row(0).transpose(), prior, lambda);
}

ad::Var victim_policy(ad::Graph& g, const ParamSet& phi, const MlpShape& shape, const Mat& views, double lambda,
                      const Vec& prior) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const ad::Var q = mlp_forward(g, phi, g.constant(views), shape);
  const Mat log_prior = prior.array().log().matrix().transpose();
  return ad::softmax_rows(ad::add(ad::scale(q, 1.0 / lambda), g.constant(log_prior)));
}

Vec sprq_target(const ParamSet& phi_target, const MlpShape& shape, const AttackerBatch& batch, double lambda,
                double gamma, const Vec& prior) {
  const Mat next_q = mlp_eval(phi_target, batch.next_obs, shape);
  Vec y(batch.size());
  for (int i = 0; i < batch.size(); ++i) {
    y(i) = batch.rewards(i);
    if (batch.not_done(i) != 0.0) y(i) += gamma * soft_value(next_q.row(i).transpose(), prior, lambda);
  }
  return y;
}

ad::Var sprq_loss(ad::Graph& g, const ParamSet& phi, const MlpShape& shape, const AttackerBatch& batch, const Vec& y) {
  const ad::Var q = mlp_forward(g, phi, g.constant(batch.obs), shape);
  const ad::Var chosen = ad::gather_cols(q, batch.actions);
  return ad::mean(ad::square(ad::sub(chosen, g.constant(Mat(y)))));
}

double jsd(const std::vector<Vec>& distributions, double smoothing) {
  if (distributions.size() < 2) throw UsageError("JSD needs at least two distributions");
  const Eigen::Index m = distributions.front().size();
  for (const auto& d : distributions)
    if (d.size() != m) throw UsageError("JSD inputs differ in length");
  std::vector<Vec> s;
  Vec mean = Vec::Zero(m);
  for (const auto& d : distributions) {
    s.push_back((1.0 - smoothing) * d + Vec::Constant(m, smoothing / static_cast<double>(m)));
    mean += s.back();
  }
  mean /= static_cast<double>(s.size());
  double total = 0.0;
  for (const auto& sj : s)
    for (Eigen::Index a = 0; a < m; ++a)
      if (sj(a) > 0.0) total += sj(a) * std::log(sj(a) / mean(a));
  return total / static_cast<double>(s.size());
}

ad::Var jsd_rows(const std::vector<ad::Var>& distributions, double smoothing) {
  if (distributions.size() < 2) throw UsageError("JSD needs at least two distributions");
  const double np = static_cast<double>(distributions.size());
  const double m = static_cast<double>(distributions.front().cols());
  std::vector<ad::Var> smoothed;
  for (const auto& d : distributions) smoothed.push_back(ad::add_scalar(ad::scale(d, 1.0 - smoothing), smoothing / m));
  ad::Var mean = smoothed.front();
  for (std::size_t j = 1; j < smoothed.size(); ++j) mean = ad::add(mean, smoothed[j]);
  // The tiny shift keeps 0 * log 0 at 0 when smoothing is off.
  constexpr double kTiny = 1e-300;
  const ad::Var log_mean = ad::log(ad::add_scalar(ad::scale(mean, 1.0 / np), kTiny));
  ad::Var total;
  for (std::size_t j = 0; j < smoothed.size(); ++j) {
    const ad::Var log_s = ad::log(ad::add_scalar(smoothed[j], kTiny));
    const ad::Var term = ad::sum_rows(ad::mul(smoothed[j], ad::sub(log_s, log_mean)));
    total = j == 0 ? term : ad::add(total, term);
  }
  return ad::scale(total, 1.0 / np);
}

ad::Var diversity_loss(ad::Graph& g, const std::vector<const ParamSet*>& phis, const MlpShape& shape,
                       const Mat& points, double lambda, const Vec& prior, double smoothing) {
  if (phis.size() < 2 || points.rows() == 0) return g.constant(Mat::Zero(1, 1));
  std::vector<ad::Var> policies;
  for (const ParamSet* phi : phis) policies.push_back(victim_policy(g, *phi, shape, points, lambda, prior));
  return ad::mean(jsd_rows(policies, smoothing));
}

ad::Var population_loss(ad::Graph& g, const std::vector<const ParamSet*>& phis, const MlpShape& shape,
                        const std::vector<AttackerBatch>& batches, const std::vector<Vec>& targets,
                        const Mat& points, double alpha, double lambda, const Vec& prior, double smoothing,
                        LossTrace* trace) {
  if (phis.empty() || phis.size() != batches.size() || phis.size() != targets.size())
    throw UsageError("population loss needs one batch and target per member");
  ad::Var opt;
  for (std::size_t j = 0; j < phis.size(); ++j) {
    const ad::Var l = sprq_loss(g, *phis[j], shape, batches[j], targets[j]);
    opt = j == 0 ? l : ad::add(opt, l);
  }
  opt = ad::scale(opt, 1.0 / static_cast<double>(phis.size()));
  if (trace) trace->used_population_loss = true;
  if (alpha == 0.0) return opt;
  if (trace) trace->evaluated_diversity = true;
  return ad::sub(opt, ad::scale(diversity_loss(g, phis, shape, points, lambda, prior, smoothing), alpha));
}

Mat sample_attack_points(const std::vector<const AttackPointBuffer*>& buffers, int count, Rng& rng) {
  std::vector<const Vec*> pool;
  for (const auto* b : buffers)
    for (const auto& p : b->points()) pool.push_back(&p);
  const auto take = static_cast<std::size_t>(std::max(0, std::min<int>(count, static_cast<int>(pool.size()))));
  if (take == 0) return Mat(0, 0);
  // Partial Fisher-Yates: the first `take` entries are a uniform sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  Mat out(static_cast<Eigen::Index>(take), pool.front()->size());
  for (std::size_t i = 0; i < take; ++i) out.row(static_cast<Eigen::Index>(i)) = pool[i]->transpose();
  return out;
}

Attacker::Attacker(int view_size, int n_agents, const AttackerConfig& cfg, Rng& rng)
    : view_size_(view_size), n_agents_(n_agents), cfg_(cfg), shape_(attacker_shape(view_size, n_agents, cfg.hidden)),
      prior_(reference_prior(n_agents, cfg.delta)), online_(make_mlp(shape_, rng, "attacker.")), target_(online_),
      opt_(RmsPropConfig{cfg.lr, 0.99, 1e-5, cfg.grad_clip}),
      buffer_(static_cast<std::size_t>(cfg.buffer_capacity)) {
  if (!(cfg.lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (cfg.replay_capacity < 1 || cfg.batch_size < 1 || cfg.target_interval < 1)
    throw ConfigError("attacker replay, batch and target interval must be positive");
}

Vec Attacker::policy(const Vec& view) const { return victim_policy(online_, shape_, view, cfg_.lambda, prior_); }

std::optional<int> Attacker::sample(const Vec& view, int remaining, Rng& rng, bool record) {
  const int choice = sample_categorical(policy(view), rng);
  const std::optional<int> victim = choice == n_agents_ ? std::nullopt : std::optional<int>(choice);
  if (record) buffer_.record(view, victim, remaining);
  return victim;
}

void Attacker::remember(AttackerTransition t) {
  replay_.push_back(std::move(t));
  if (replay_.size() > static_cast<std::size_t>(cfg_.replay_capacity)) replay_.pop_front();
}

AttackerBatch Attacker::sample_batch(Rng& rng) const {
  if (replay_.empty()) throw UsageError("attacker replay is empty");
  std::uniform_int_distribution<std::size_t> pick(0, replay_.size() - 1);
  std::vector<const AttackerTransition*> chosen;
  for (int i = 0; i < cfg_.batch_size; ++i) chosen.push_back(&replay_[pick(rng)]);
  return make_attacker_batch(chosen);
}

void Attacker::after_update() {
  ++updates_;
  if (++since_sync_ >= cfg_.target_interval) sync_target();
}

void Attacker::sync_target() {
  target_ = online_;
  since_sync_ = 0;
}

nlohmann::json Attacker::to_json() const {
  return {{"format_version", ParamSet::kFormatVersion},
          {"kind", "attacker"},
          {"view_size", view_size_},
          {"n_agents", n_agents_},
          {"config",
           {{"hidden", cfg_.hidden},
            {"lr", cfg_.lr},
            {"gamma", cfg_.gamma},
            {"lambda", cfg_.lambda},
            {"delta", cfg_.delta},
            {"smoothing", cfg_.smoothing},
            {"buffer_capacity", cfg_.buffer_capacity},
            {"replay_capacity", cfg_.replay_capacity},
            {"batch_size", cfg_.batch_size},
            {"target_interval", cfg_.target_interval},
            {"diversity_sample", cfg_.diversity_sample},
            {"grad_clip", cfg_.grad_clip}}},
          {"online", online_.to_json()},
          {"target", target_.to_json()},
          {"quality", quality},
          {"timestamp", timestamp},
          {"buffer", buffer_.to_json()},
          {"buffer_digest", buffer_.digest()},
          {"updates", updates_}};
}

Attacker Attacker::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "attacker") throw ConfigError("checkpoint is not an attacker checkpoint");
    if (j.at("format_version") != ParamSet::kFormatVersion)
      throw ConfigError("unsupported attacker checkpoint version");
    Attacker a;
    a.view_size_ = j.at("view_size");
    a.n_agents_ = j.at("n_agents");
    const auto& c = j.at("config");
    a.cfg_.hidden = c.at("hidden");
    a.cfg_.lr = c.at("lr");
    a.cfg_.gamma = c.at("gamma");
    a.cfg_.lambda = c.at("lambda");
    a.cfg_.delta = c.at("delta");
    a.cfg_.smoothing = c.at("smoothing");
    a.cfg_.buffer_capacity = c.at("buffer_capacity");
    a.cfg_.replay_capacity = c.at("replay_capacity");
    a.cfg_.batch_size = c.at("batch_size");
    a.cfg_.target_interval = c.at("target_interval");
    a.cfg_.diversity_sample = c.at("diversity_sample");
    a.cfg_.grad_clip = c.at("grad_clip");
    a.shape_ = attacker_shape(a.view_size_, a.n_agents_, a.cfg_.hidden);
    a.prior_ = reference_prior(a.n_agents_, a.cfg_.delta);
    a.online_ = ParamSet::from_json(j.at("online"));
    a.target_ = ParamSet::from_json(j.at("target"));
    a.opt_ = RmsProp(RmsPropConfig{a.cfg_.lr, 0.99, 1e-5, a.cfg_.grad_clip});
    a.buffer_ = AttackPointBuffer::from_json(j.at("buffer"));
    if (a.buffer_.digest() != j.at("buffer_digest").get<std::uint64_t>())
      throw ConfigError("attacker checkpoint buffer digest mismatch");
    a.quality = j.at("quality");
    a.timestamp = j.at("timestamp");
    a.updates_ = j.at("updates");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed attacker checkpoint: ") + e.what());
  }
}

void Attacker::save(const std::filesystem::path& path) const { save_json_file(path, to_json()); }

Attacker Attacker::load(const std::filesystem::path& path) { return from_json(load_json_file(path)); }

double update_population(std::vector<Attacker*>& members, double alpha, bool use_diversity, Rng& rng,
                         LossTrace* trace) {
  if (members.empty()) throw UsageError("empty attacker population");
  std::vector<AttackerBatch> batches;
  std::vector<Vec> targets;
  for (Attacker* a : members) {
    batches.push_back(a->sample_batch(rng));
    const auto& c = a->config();
    targets.push_back(sprq_target(a->target(), a->shape(), batches.back(), c.lambda, c.gamma, a->prior()));
  }
  const AttackerConfig& c = members.front()->config();

  if (!use_diversity) {
    double total = 0.0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      ad::Graph g;
      const ad::Var loss = sprq_loss(g, members[j]->online(), members[j]->shape(), batches[j], targets[j]);
      g.backward(loss);
      members[j]->optimizer().step(members[j]->mutable_online(), g.gradients(members[j]->online()));
      members[j]->after_update();
      total += loss.value()(0, 0);
    }
    return total / static_cast<double>(members.size());
  }

  Mat points;
  if (alpha != 0.0) {
    std::vector<const AttackPointBuffer*> buffers;
    for (Attacker* a : members) buffers.push_back(&a->buffer());
    points = sample_attack_points(buffers, c.diversity_sample, rng);
  }
  std::vector<const ParamSet*> phis;
  for (Attacker* a : members) phis.push_back(&a->online());
  ad::Graph g;
  const ad::Var loss = population_loss(g, phis, members.front()->shape(), batches, targets, points, alpha, c.lambda,
                                       members.front()->prior(), c.smoothing, trace);
  g.backward(loss);
  std::vector<std::vector<Mat>> grads;
  for (Attacker* a : members) grads.push_back(g.gradients(a->online()));
  for (std::size_t j = 0; j < members.size(); ++j) {
    members[j]->optimizer().step(members[j]->mutable_online(), std::move(grads[j]));
    members[j]->after_update();
  }
  return loss.value()(0, 0);
}

std::optional<int> AttackerSelector::select(const AttackContext& ctx, Rng& rng) {
  if (ctx.observation == nullptr) throw UsageError("attacker needs its view");
  return attacker_->sample(*ctx.observation, ctx.remaining, rng, record_);
}

}  // namespace romance
