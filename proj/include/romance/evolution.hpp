#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "romance/attacker.hpp"

namespace romance {

/// Mean two-member JSD of the attackers' victim policies over the union of
/// their attack-point buffers; 0 when both buffers are empty.
double behavior_distance(const Attacker& a, const Attacker& b, double smoothing);

struct ArchiveEntry {
  Attacker attacker;
  long age = 0;
  /// Min distance to the archive at insertion (infinite into an empty one).
  double insert_min_distance = std::numeric_limits<double>::infinity();
  /// Entered because it was far enough from everything, not by coin flip.
  bool threshold_admitted = false;
};

struct ArchiveUpdateStats {
  int added = 0;
  int replaced = 0;
  int discarded = 0;
  int evicted = 0;
};

/// Bounded archive of attackers kept apart in behavior space.
class Archive {
 public:
  Archive(int capacity, double threshold, double smoothing);

  int capacity() const { return capacity_; }
  double threshold() const { return threshold_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  ArchiveEntry& entry(std::size_t i) { return entries_.at(i); }
  long next_age() const { return next_age_; }

  /// Inserts each candidate in turn: added if at least `threshold` from every
  /// entry, otherwise it and its nearest entry keep one at random (the
  /// candidate replaces the entry in place with a fresh age). The oldest
  /// entry is evicted when an add overflows the capacity.
  ArchiveUpdateStats update(const std::vector<Attacker>& candidates, Rng& rng);
  /// Adds without the distance test (initial members), evicting the oldest
  /// on overflow.
  void seed(const std::vector<Attacker>& members);

  /// Indices of `count` members drawn by rank weight (best quality gets
  /// weight m, ties share their mean rank), without replacement while the
  /// archive lasts and with replacement for the remainder.
  std::vector<std::size_t> select(int count, Rng& rng) const;

  /// Symmetric matrix of behavior distances between entries.
  Mat distance_matrix() const;
  void write_distance_csv(const std::filesystem::path& path) const;

  /// Directory with one checkpoint per entry and index.json.
  void save(const std::filesystem::path& dir) const;
  static Archive load(const std::filesystem::path& dir);

 private:
  int capacity_;
  double threshold_;
  double smoothing_;
  long next_age_ = 0;
  std::vector<ArchiveEntry> entries_;
};

/// Selection weights m - r + 1 from qualities, with tied qualities sharing
/// the mean of their ranks.
std::vector<double> rank_weights(const std::vector<double>& qualities);

}  // namespace romance
