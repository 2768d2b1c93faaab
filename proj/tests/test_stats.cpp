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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ppt/rng.hpp"
#include "ppt/stats.hpp"

using namespace ppt;

namespace {

// Exact two-sided p by brute force over every way the combined ranks can be
// split between the groups (tie-free data only).
double enumerate_p(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  const int total = n + m;
  const double mu = 0.5 * n * m;
  const double u_obs = mann_whitney(a, b).u;
  const double d_obs = std::fabs(u_obs - mu);

  long long extreme = 0, count = 0;
  for (unsigned mask = 0; mask < (1u << total); ++mask) {
    if (__builtin_popcount(mask) != n) continue;
    ++count;
    // Ranks 1..total; the mask picks which ranks go to group a.
    long long rank_sum = 0;
    for (int r = 0; r < total; ++r) {
      if (mask & (1u << r)) rank_sum += r + 1;
    }
    const double u = rank_sum - 0.5 * n * (n + 1);
    if (std::fabs(u - mu) >= d_obs - 1e-12) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(count);
}

}  // namespace

TEST_CASE("a12 matches the pairwise-count definition") {
  REQUIRE(a12({1, 2, 3}, {1, 2, 3}) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(a12({5, 6, 7}, {1, 2, 3}) == 1.0);
  REQUIRE(a12({1, 2, 3}, {5, 6, 7}) == 0.0);
  REQUIRE(a12({1, 2, 3, 4}, {2, 3}) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE_THROWS_AS(a12({}, {1.0}), ArgumentError);

  // a12(a,b) + a12(b,a) = 1 with the half-tie rule.
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(5), b(7);
    for (double& x : a) x = std::floor(rng.uniform(0, 6));
    for (double& x : b) x = std::floor(rng.uniform(0, 6));
    REQUIRE(a12(a, b) + a12(b, a) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("classify_effect folds around one half and uses the paper bands") {
  REQUIRE(classify_effect(0.60) == EffectSize::kSmall);
  REQUIRE(classify_effect(0.86) == EffectSize::kLarge);
  REQUIRE(classify_effect(0.50) == EffectSize::kNegligible);
  REQUIRE(classify_effect(0.56) == EffectSize::kSmall);
  REQUIRE(classify_effect(0.64) == EffectSize::kMedium);
  REQUIRE(classify_effect(0.71) == EffectSize::kLarge);
  REQUIRE(classify_effect(1.0) == EffectSize::kLarge);
  // Folded symmetry.
  for (double v : {0.1, 0.25, 0.42, 0.3}) {
    REQUIRE(classify_effect(v) == classify_effect(1.0 - v));
  }
  REQUIRE_THROWS_AS(classify_effect(-0.1), ArgumentError);
  REQUIRE_THROWS_AS(classify_effect(1.1), ArgumentError);
}

TEST_CASE("mann-whitney basics") {
  SECTION("identical tiny samples are far from significant") {
    // Midranks handle the full ties; sanity only.
    const auto r = mann_whitney({1, 2, 3}, {1, 2, 3});
    REQUIRE(r.p >= 0.9);
  }

  SECTION("complete separation gives U = 0") {
    const auto r = mann_whitney({1, 2, 3}, {10, 11, 12});
    REQUIRE(r.u == 0.0);
  }

  SECTION("U identity") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> a(6), b(9);
      for (double& x : a) x = rng.normal(0, 1);
      for (double& x : b) x = rng.normal(0.5, 1);
      const double ua = mann_whitney(a, b).u;
      const double ub = mann_whitney(b, a).u;
      REQUIRE(ua + ub == Catch::Approx(54.0).margin(1e-9));
    }
  }

  SECTION("empty input rejected") {
    REQUIRE_THROWS_AS(mann_whitney({}, {1.0}), ArgumentError);
  }
}

TEST_CASE("exact p matches brute-force enumeration on small tie-free samples") {
  Rng rng(44);
  for (const auto& [n, m] : std::vector<std::pair<int, int>>{{3, 3}, {4, 5}, {6, 4}, {7, 7}}) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> a(n), b(m);
      // Strictly distinct values across both samples.
      std::vector<double> pool;
      for (int i = 0; i < n + m; ++i) pool.push_back(i + rng.uniform01() * 0.5);
      for (int i = 0; i < n; ++i) a[i] = pool[i];
      for (int i = 0; i < m; ++i) b[i] = pool[n + i];
      // Shuffle group membership.
      for (int i = 0; i < n; ++i) {
        const int j = static_cast<int>(rng.below(m));
        std::swap(a[i], b[j]);
      }
      const double got = mann_whitney(a, b).p;
      const double want = enumerate_p(a, b);
      REQUIRE(got == Catch::Approx(want).margin(1e-12));
    }
  }
}

TEST_CASE("normal approximation tracks the exact test at size 15") {
  Rng rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(15), b(15);
    for (double& x : a) x = rng.normal(0, 1);
    for (double& x : b) x = rng.normal(0.6, 1);
    const double exact_p = mann_whitney(a, b).p;  // sizes <= 20, tie-free: exact path

    // Force the approximation by appending far-apart values to push one
    // sample over the exact-size limit, then compare on the original via a
    // scaled clone. Instead, compare directly: build a 21-point version of
    // the same data by duplicating with a distinct offset would change the
    // test; so approximate by hand here.
    const auto approx = [&]() {
      const int n = 15, m = 15;
      std::vector<double> all;
      all.insert(all.end(), a.begin(), a.end());
      all.insert(all.end(), b.begin(), b.end());
      std::vector<double> sorted = all;
      std::sort(sorted.begin(), sorted.end());
      double rank_sum = 0.0;
      for (double x : a) {
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
        rank_sum += static_cast<double>(it - sorted.begin()) + 1.0;
      }
      const double u = rank_sum - 0.5 * n * (n + 1);
      const double mu = 0.5 * n * m;
      const double var = n * m * (n + m + 1) / 12.0;
      const double z = std::max(0.0, std::fabs(u - mu) - 0.5) / std::sqrt(var);
      return std::erfc(z / std::sqrt(2.0));
    }();
    REQUIRE(std::fabs(exact_p - approx) < 0.02);
  }
}

TEST_CASE("stat report glues the pieces together") {
  std::vector<double> worse{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  std::vector<double> better{1, 2, 3, 4, 5, 6, 7, 8, 9, 9.5};
  const StatReport r = make_stat_report(worse, better);
  REQUIRE(r.a12 == 1.0);
  REQUIRE(r.effect_label == EffectSize::kLarge);
  REQUIRE(r.significant);
  REQUIRE(r.p_value < kSignificanceLevel);
  REQUIRE(r.significant == (r.p_value < 0.01));

  const StatReport self = make_stat_report(better, better);
  REQUIRE(self.a12 == Catch::Approx(0.5).margin(1e-12));
  REQUIRE_FALSE(self.significant);
}

TEST_CASE("median matches a sort-and-pick oracle") {
  REQUIRE(median({3.0, 1.0, 2.0}) == 2.0);
  REQUIRE(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  REQUIRE(median({7.0}) == 7.0);
  REQUIRE_THROWS_AS(median({}), ArgumentError);
}
