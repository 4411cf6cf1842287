#include "romance/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "romance/error.hpp"

namespace romance {

namespace {

void require_samples(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw UsageError("rank-sum test needs two nonempty samples");
  for (const auto* s : {&a, &b})
    for (double v : *s)
      if (!std::isfinite(v)) throw UsageError("rank-sum test got a non-finite value");
}

std::vector<double> pooled(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all = a;
  all.insert(all.end(), b.begin(), b.end());
  return all;
}

}  // namespace

std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

RankSumResult wilcoxon_exact(const std::vector<double>& a, const std::vector<double>& b) {
  require_samples(a, b);
  const std::size_t n = a.size() + b.size();
  if (n > 20) throw UsageError("exact rank-sum enumeration limited to 20 values");
  const std::vector<double> ranks = midranks(pooled(a, b));
  RankSumResult r;
  r.exact = true;
  r.statistic = std::accumulate(ranks.begin(), ranks.begin() + static_cast<long>(a.size()), 0.0);
  // Rank sums are multiples of 1/2, so compare in half-units.
  const long observed = std::lround(2.0 * r.statistic);
  long total = 0, low = 0, high = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) s += ranks[i];
    const long w = std::lround(2.0 * s);
    ++total;
    if (w <= observed) ++low;
    if (w >= observed) ++high;
  }
  const double tail = static_cast<double>(std::min(low, high)) / static_cast<double>(total);
  r.p_value = std::min(1.0, 2.0 * tail);
  return r;
}

RankSumResult wilcoxon_normal(const std::vector<double>& a, const std::vector<double>& b) {
  require_samples(a, b);
  const std::vector<double> all = pooled(a, b);
  const std::vector<double> ranks = midranks(all);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;
  RankSumResult r;
  r.statistic = std::accumulate(ranks.begin(), ranks.begin() + static_cast<long>(a.size()), 0.0);
  std::map<double, int> ties;
  for (double v : all) ++ties[v];
  double tie_term = 0.0;
  for (const auto& [v, t] : ties) tie_term += static_cast<double>(t) * t * t - t;
  const double var = na * nb / 12.0 * ((n + 1.0) - (n > 1 ? tie_term / (n * (n - 1.0)) : 0.0));
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double mean = na * (n + 1.0) / 2.0;
  const double z = std::max(0.0, std::abs(r.statistic - mean) - 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return r;
}

RankSumResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() + b.size() <= 12 ? wilcoxon_exact(a, b) : wilcoxon_normal(a, b);
}

MeanCi mean_ci(const std::vector<double>& values) {
  if (values.empty()) throw UsageError("mean of an empty sample");
  MeanCi out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

}  // namespace romance
