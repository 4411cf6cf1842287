#include "romance/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "romance/error.hpp"
#include "romance/regularized.hpp"

namespace romance {

double behavior_distance(const Attacker& a, const Attacker& b, double smoothing) {
  const std::size_t total = a.buffer().size() + b.buffer().size();
  if (total == 0) return 0.0;
  Mat points(static_cast<Eigen::Index>(total), a.view_size());
  Eigen::Index r = 0;
  for (const Attacker* owner : {&a, &b})
    for (const Vec& p : owner->buffer().points()) points.row(r++) = p.transpose();
  const Mat qa = mlp_eval(a.online(), points, a.shape());
  const Mat qb = mlp_eval(b.online(), points, b.shape());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    sum += jsd({soft_policy(qa.row(i).transpose(), a.prior(), a.config().lambda),
                soft_policy(qb.row(i).transpose(), b.prior(), b.config().lambda)},
               smoothing);
  return sum / static_cast<double>(total);
}

std::vector<double> rank_weights(const std::vector<double>& qualities) {
  const std::size_t m = qualities.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return qualities[x] > qualities[y]; });
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && qualities[order[j + 1]] == qualities[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) w[order[k]] = static_cast<double>(m) - mean_rank + 1.0;
    i = j + 1;
  }
  return w;
}

Archive::Archive(int capacity, double threshold, double smoothing)
    : capacity_(capacity), threshold_(threshold), smoothing_(smoothing) {
  if (capacity < 1) throw ConfigError("archive capacity must be positive");
  if (!(threshold >= 0.0)) throw ConfigError("archive threshold must be nonnegative");
}

ArchiveUpdateStats Archive::update(const std::vector<Attacker>& candidates, Rng& rng) {
  ArchiveUpdateStats stats;
  std::bernoulli_distribution coin(0.5);
  for (const Attacker& cand : candidates) {
    if (!std::isfinite(cand.quality)) throw NumericalError("attacker quality is not finite");
    double nearest_d = std::numeric_limits<double>::infinity();
    std::size_t nearest = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const double d = behavior_distance(cand, entries_[i].attacker, smoothing_);
      if (d < nearest_d) {
        nearest_d = d;
        nearest = i;
      }
    }
    ArchiveEntry fresh{cand, next_age_, nearest_d, false};
    fresh.attacker.timestamp = next_age_;
    if (nearest_d >= threshold_) {
      fresh.threshold_admitted = true;
      ++next_age_;
      entries_.push_back(std::move(fresh));
      ++stats.added;
      if (static_cast<int>(entries_.size()) > capacity_) {
        const auto oldest = std::min_element(entries_.begin(), entries_.end(),
                                             [](const ArchiveEntry& x, const ArchiveEntry& y) { return x.age < y.age; });
        entries_.erase(oldest);
        ++stats.evicted;
      }
    } else if (coin(rng)) {
      ++next_age_;
      entries_[nearest] = std::move(fresh);
      ++stats.replaced;
    } else {
      ++stats.discarded;
    }
  }
  return stats;
}

void Archive::seed(const std::vector<Attacker>& members) {
  for (const Attacker& m : members) {
    ArchiveEntry e{m, next_age_, std::numeric_limits<double>::infinity(), false};
    e.attacker.timestamp = next_age_++;
    entries_.push_back(std::move(e));
    if (static_cast<int>(entries_.size()) > capacity_) entries_.erase(entries_.begin());
  }
}

std::vector<std::size_t> Archive::select(int count, Rng& rng) const {
  if (count < 1) throw ConfigError("selection size must be positive");
  if (entries_.empty()) throw UsageError("selecting from an empty archive");
  std::vector<double> q;
  for (const auto& e : entries_) q.push_back(e.attacker.quality);
  const std::vector<double> weights = rank_weights(q);
  std::vector<double> live = weights;
  std::vector<std::size_t> out;
  const std::size_t without = std::min<std::size_t>(static_cast<std::size_t>(count), entries_.size());
  for (std::size_t k = 0; k < without; ++k) {
    std::discrete_distribution<std::size_t> pick(live.begin(), live.end());
    const std::size_t i = pick(rng);
    out.push_back(i);
    live[i] = 0.0;
  }
  std::discrete_distribution<std::size_t> again(weights.begin(), weights.end());
  while (out.size() < static_cast<std::size_t>(count)) out.push_back(again(rng));
  return out;
}

Mat Archive::distance_matrix() const {
  const auto m = static_cast<Eigen::Index>(entries_.size());
  Mat d = Mat::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      d(i, j) = behavior_distance(entries_[static_cast<std::size_t>(i)].attacker,
                                  entries_[static_cast<std::size_t>(j)].attacker, smoothing_);
      d(j, i) = d(i, j);
    }
  return d;
}

void Archive::write_distance_csv(const std::filesystem::path& path) const {
  const Mat d = distance_matrix();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "entry";
  for (const auto& e : entries_) out << ",age" << e.age;
  out << "\n";
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    out << "age" << entries_[static_cast<std::size_t>(i)].age;
    for (Eigen::Index j = 0; j < d.cols(); ++j) out << "," << d(i, j);
    out << "\n";
  }
}

void Archive::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json index = {{"format_version", ParamSet::kFormatVersion},
                          {"capacity", capacity_},
                          {"threshold", threshold_},
                          {"smoothing", smoothing_},
                          {"next_age", next_age_},
                          {"entries", nlohmann::json::array()}};
  for (const auto& e : entries_) {
    const std::string file = "attacker_" + std::to_string(e.age) + ".json";
    e.attacker.save(dir / file);
    index["entries"].push_back({{"file", file},
                                {"age", e.age},
                                {"quality", e.attacker.quality},
                                {"buffer_digest", e.attacker.buffer().digest()},
                                {"threshold_admitted", e.threshold_admitted},
                                {"insert_min_distance",
                                 std::isfinite(e.insert_min_distance) ? nlohmann::json(e.insert_min_distance)
                                                                      : nlohmann::json(nullptr)}});
  }
  save_json_file(dir / "index.json", index);
}

Archive Archive::load(const std::filesystem::path& dir) {
  const nlohmann::json index = load_json_file(dir / "index.json");
  try {
    Archive a(index.at("capacity"), index.at("threshold"), index.at("smoothing"));
    a.next_age_ = index.at("next_age");
    for (const auto& j : index.at("entries")) {
      ArchiveEntry e{Attacker::load(dir / j.at("file").get<std::string>()), j.at("age"),
                     j.at("insert_min_distance").is_null() ? std::numeric_limits<double>::infinity()
                                                           : j.at("insert_min_distance").get<double>(),
                     j.at("threshold_admitted")};
      if (e.attacker.buffer().digest() != j.at("buffer_digest").get<std::uint64_t>())
        throw ConfigError("archive entry " + j.at("file").get<std::string>() + " does not match its index");
      a.entries_.push_back(std::move(e));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed archive index in " + dir.string() + ": " + e.what());
  }
}

}  // namespace romance
