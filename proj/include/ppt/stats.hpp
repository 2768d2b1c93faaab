// Copyright 2026 PPT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PPT_STATS_HPP_
#define PPT_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ppt/errors.hpp"

namespace ppt {

constexpr double kSignificanceLevel = 0.01;

enum class EffectSize { kNegligible, kSmall, kMedium, kLarge };

inline const char* effect_size_name(EffectSize e) {
  switch (e) {
    case EffectSize::kNegligible: return "NEGLIGIBLE";
    case EffectSize::kSmall: return "SMALL";
    case EffectSize::kMedium: return "MEDIUM";
    default: return "LARGE";
  }
}

// Vargha-Delaney A12 by exhaustive pair count; ties contribute one half.
inline double a12(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw ArgumentError("a12: empty input");
  double wins = 0.0;
  for (double x : a) {
    for (double y : b) {
      if (x > y) {
        wins += 1.0;
      } else if (x == y) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

// Effect magnitude folded around 0.5: [0.56, 0.64) small, [0.64, 0.71)
// medium, [0.71, 1] large; below 0.56 negligible.
inline EffectSize classify_effect(double a12_value) {
  if (a12_value < 0.0 || a12_value > 1.0) {
    throw ArgumentError("classify_effect: value outside [0, 1]");
  }
  const double m = std::max(a12_value, 1.0 - a12_value);
  if (m < 0.56) return EffectSize::kNegligible;
  if (m < 0.64) return EffectSize::kSmall;
  if (m < 0.71) return EffectSize::kMedium;
  return EffectSize::kLarge;
}

struct MannWhitneyResult {
  double u;  // U statistic of the first sample
  double p;  // two-sided
};

namespace detail {

// Midranks of the combined sample, returned split back into the two groups.
inline std::pair<std::vector<double>, std::vector<double>> midranks(
    const std::vector<double>& a, const std::vector<double>& b) {
  struct Tagged {
    double v;
    int group;
    int pos;
  };
  std::vector<Tagged> all;
  all.reserve(a.size() + b.size());
  for (size_t i = 0; i < a.size(); ++i) all.push_back({a[i], 0, static_cast<int>(i)});
  for (size_t i = 0; i < b.size(); ++i) all.push_back({b[i], 1, static_cast<int>(i)});
  std::stable_sort(all.begin(), all.end(),
                   [](const Tagged& x, const Tagged& y) { return x.v < y.v; });
  std::vector<double> ra(a.size()), rb(b.size());
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k) {
      (all[k].group == 0 ? ra : rb)[all[k].pos] = rank;
    }
    i = j;
  }
  return {std::move(ra), std::move(rb)};
}

inline bool has_ties(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all;
  all.insert(all.end(), a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  return std::adjacent_find(all.begin(), all.end()) != all.end();
}

// Null distribution of U for sample sizes (n, m) without ties: the number of
// n-subsets of ranks 1..n+m realizing each U value, by the standard
// recurrence c(n, m, u) = c(n-1, m, u-m) + c(n, m-1, u).
inline std::vector<double> exact_u_distribution(int n, int m) {
  const int umax = n * m;
  // dp[i][j] holds the count vector for sizes (i, j).
  std::vector<std::vector<std::vector<double>>> dp(
      n + 1, std::vector<std::vector<double>>(m + 1));
  for (int j = 0; j <= m; ++j) dp[0][j] = {1.0};
  for (int i = 1; i <= n; ++i) {
    dp[i][0] = {1.0};
    for (int j = 1; j <= m; ++j) {
      std::vector<double> c(std::min(i * j, umax) + 1, 0.0);
      const auto& left = dp[i - 1][j];
      const auto& down = dp[i][j - 1];
      for (size_t u = 0; u < c.size(); ++u) {
        if (static_cast<int>(u) >= j && u - j < left.size()) c[u] += left[u - j];
        if (u < down.size()) c[u] += down[u];
      }
      dp[i][j] = std::move(c);
    }
  }
  return dp[n][m];
}

}  // namespace detail

// Mann-Whitney U from rank sums with midrank ties. The two-sided p-value is
// exact (distribution enumeration) for tie-free samples up to size 20 each,
// otherwise a normal approximation with tie and continuity corrections.
inline MannWhitneyResult mann_whitney(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw ArgumentError("mann_whitney: empty input");
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  const auto [ra, rb] = detail::midranks(a, b);
  double rank_sum_a = 0.0;
  for (double r : ra) rank_sum_a += r;
  const double u_a = rank_sum_a - 0.5 * n * (n + 1);
  const double mu = 0.5 * n * m;

  const bool tied = detail::has_ties(a, b);
  double p;
  if (!tied && n <= 20 && m <= 20) {
    const std::vector<double> dist = detail::exact_u_distribution(n, m);
    double total = 0.0;
    for (double c : dist) total += c;
    const double d = std::fabs(u_a - mu);
    double extreme = 0.0;
    for (size_t u = 0; u < dist.size(); ++u) {
      if (std::fabs(static_cast<double>(u) - mu) >= d - 1e-12) extreme += dist[u];
    }
    p = extreme / total;
  } else {
    // Tie-corrected variance over the combined sample of size N.
    const double nn = static_cast<double>(n + m);
    std::vector<double> all;
    all.insert(all.end(), a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    double tie_term = 0.0;
    size_t i = 0;
    while (i < all.size()) {
      size_t j = i;
      while (j < all.size() && all[j] == all[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
    const double var =
        (static_cast<double>(n) * m / (12.0 * nn * (nn - 1.0))) *
        (nn * nn * nn - nn - tie_term);
    if (var <= 0.0) {
      p = 1.0;
    } else {
      const double z = std::max(0.0, std::fabs(u_a - mu) - 0.5) / std::sqrt(var);
      p = std::erfc(z / std::sqrt(2.0));
    }
  }
  p = std::clamp(p, 0.0, 1.0);
  return MannWhitneyResult{u_a, p};
}

// One pairwise comparison: Mann-Whitney on the outcome samples plus the A12
// effect size of a over b.
struct StatReport {
  double u_statistic = 0.0;
  double p_value = 1.0;
  double a12 = 0.5;
  bool significant = false;
  EffectSize effect_label = EffectSize::kNegligible;
};

inline StatReport make_stat_report(const std::vector<double>& a, const std::vector<double>& b) {
  StatReport r;
  const MannWhitneyResult mw = mann_whitney(a, b);
  r.u_statistic = mw.u;
  r.p_value = mw.p;
  r.a12 = a12(a, b);
  r.significant = r.p_value < kSignificanceLevel;
  r.effect_label = classify_effect(r.a12);
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median: empty input");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace ppt

#endif  // PPT_STATS_HPP_
