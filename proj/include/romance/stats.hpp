#pragma once

#include <vector>

namespace romance {

struct RankSumResult {
  /// Rank sum of the first sample (midranks for ties).
  double statistic = 0.0;
  double p_value = 1.0;
  bool exact = false;
};

/// Two-sided test by enumerating every assignment of the pooled midranks.
RankSumResult wilcoxon_exact(const std::vector<double>& a, const std::vector<double>& b);
/// Normal approximation with tie and continuity corrections.
RankSumResult wilcoxon_normal(const std::vector<double>& a, const std::vector<double>& b);
/// Exact for a pooled size up to 12, normal approximation beyond.
RankSumResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b);

/// Midranks (1-based) of the pooled values.
std::vector<double> midranks(const std::vector<double>& values);

struct MeanCi {
  double mean = 0.0;
  /// 1.96 standard errors; 0 for a single value.
  double half_width = 0.0;
};
MeanCi mean_ci(const std::vector<double>& values);

}  // namespace romance
