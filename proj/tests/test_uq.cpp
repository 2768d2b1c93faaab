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

#include <algorithm>
#include <cmath>

#include "ppt/uq.hpp"

using namespace ppt;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.attention = {8, 1, 16, 1};
  c.gru_hidden = 8;
  c.state_dim = 4;
  c.bins = 5;
  c.proj_dim = 6;
  c.window = 4;
  c.input_width = 6;
  return c;
}

Dataset tiny_dataset(int n, uint64_t seed) {
  return generate_elevator_dataset(make_elevator_system("UQ", 0.6, 1.2), n, seed, 4);
}

}  // namespace

TEST_CASE("cs score moments math follows the weighted-sum contract") {
  const std::vector<double> mu{1.0, 2.0, 3.0};
  const std::vector<double> sigma{0.5, 1.0, 2.0};
  const std::vector<double> y{1.2, 2.0, 2.0};

  SECTION("lambda = 1 gives the calibration term exactly") {
    const auto xi = cs_scores_from_moments(mu, sigma, y, 1.0);
    for (size_t i = 0; i < xi.size(); ++i) {
      const double pit = std_normal_cdf((y[i] - mu[i]) / sigma[i]);
      REQUIRE(xi[i] == Catch::Approx(std::fabs(2.0 * pit - 1.0)).margin(1e-12));
    }
  }

  SECTION("lambda = 0 gives the normalized sigma") {
    const auto xi = cs_scores_from_moments(mu, sigma, y, 0.0);
    REQUIRE(xi[0] == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(xi[1] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(xi[2] == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("perfect mean at maximum sigma scores exactly one half") {
    // c = |2 PIT - 1| = 0 at mu = y; s = sigma / sigma_max = 1.
    const auto xi = cs_scores_from_moments({2.0, 0.0}, {2.0, 1.0}, {2.0, 5.0}, 0.5);
    REQUIRE(xi[0] == Catch::Approx(0.5).margin(1e-12));
  }

  SECTION("rejects bad input") {
    REQUIRE_THROWS_AS(cs_scores_from_moments({}, {}, {}, 0.5), ArgumentError);
    REQUIRE_THROWS_AS(cs_scores_from_moments({1.0}, {0.0}, {1.0}, 0.5), NumericalError);
    REQUIRE_THROWS_AS(cs_scores_from_moments({1.0}, {1.0}, {1.0}, 1.5), ArgumentError);
  }
}

TEST_CASE("population std backs both spread-based scores") {
  REQUIRE(population_std({1.0, 3.0}) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(population_std({4.0, 6.0}) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(population_std({2.5, 2.5, 2.5}) == 0.0);
  // Invariant under member-order permutation.
  REQUIRE(population_std({1.0, 2.0, 7.0}) == Catch::Approx(population_std({7.0, 1.0, 2.0})));
}

TEST_CASE("bayesian scoring is seed-deterministic and non-negative") {
  const ModelConfig cfg = tiny_config();
  const Dataset d = tiny_dataset(24, 5);
  IndicatorModel ind(cfg, 77);
  ind.train(d, 1, 16, 78);

  const auto s1 = score_bayesian(ind, d, 4, 0.2, 99);
  const auto s2 = score_bayesian(ind, d, 4, 0.2, 99);
  REQUIRE(s1.xi == s2.xi);
  REQUIRE(s1.wall_time_s > 0.0);
  for (double x : s1.xi) {
    REQUIRE(x >= 0.0);
    REQUIRE(std::isfinite(x));
  }
  REQUIRE_THROWS_AS(score_bayesian(ind, d, 1, 0.2, 99), ArgumentError);
}

TEST_CASE("ensemble members with tied parameters give zero spread") {
  const ModelConfig cfg = tiny_config();
  const Dataset d = tiny_dataset(12, 6);
  // Identical untrained members: every prediction agrees, so xi = 0.
  const IndicatorTrainer tied = [&cfg](const Dataset&, int) {
    return IndicatorModel(cfg, 123);
  };
  const auto s = score_ensemble(d, 3, tied);
  for (double x : s.xi) REQUIRE(x == 0.0);

  const IndicatorTrainer distinct = [&cfg](const Dataset& subset, int member) {
    IndicatorModel m(cfg, 200 + member);
    m.train(subset, 1, 8, 300 + member);
    return m;
  };
  const auto s2 = score_ensemble(d, 3, distinct);
  REQUIRE(s2.wall_time_s > 0.0);
  bool any_positive = false;
  for (double x : s2.xi) any_positive |= x > 0.0;
  REQUIRE(any_positive);

  REQUIRE_THROWS_AS(score_ensemble(d, 13, tied), ArgumentError);
}

TEST_CASE("partition ranges balance contiguously") {
  const auto r = partition_ranges(10, 3);
  REQUIRE(r.size() == 3);
  REQUIRE(r[0] == std::pair<int, int>{0, 4});
  REQUIRE(r[1] == std::pair<int, int>{4, 7});
  REQUIRE(r[2] == std::pair<int, int>{7, 10});
}

TEST_CASE("select_top_k ranks, breaks ties by index, and re-sorts temporally") {
  UncertaintyScores s;
  s.xi = {0.1, 0.9, 0.5};
  REQUIRE(select_top_k(s, 2) == std::vector<int>{1, 2});
  REQUIRE(select_top_k(s, 3) == std::vector<int>{0, 1, 2});

  UncertaintyScores ties;
  ties.xi = {0.4, 0.4, 0.4, 0.4};
  REQUIRE(select_top_k(ties, 3) == std::vector<int>{0, 1, 2});

  REQUIRE_THROWS_AS(select_top_k(s, 0), ArgumentError);
  REQUIRE_THROWS_AS(select_top_k(s, 4), ArgumentError);

  // Scale monotonicity: positive rescaling leaves the selection unchanged.
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    UncertaintyScores base;
    base.xi.resize(20);
    for (double& x : base.xi) x = rng.uniform01();
    UncertaintyScores scaled = base;
    const double c = 0.01 + 10.0 * rng.uniform01();
    for (double& x : scaled.xi) x *= c;
    REQUIRE(select_top_k(base, 7) == select_top_k(scaled, 7));
  }
}

TEST_CASE("precision_at_k counts prefix overlap") {
  const std::vector<int> a{1, 2, 3, 4, 5};
  const std::vector<int> b{3, 9, 1, 8, 7};
  REQUIRE(precision_at_k(a, b, 5) == Catch::Approx(0.4).margin(1e-12));
  REQUIRE(precision_at_k(a, a, 3) == 1.0);
  REQUIRE(precision_at_k({1, 2}, {3, 4}, 2) == 0.0);
  // Symmetry.
  REQUIRE(precision_at_k(a, b, 4) == precision_at_k(b, a, 4));
  REQUIRE_THROWS_AS(precision_at_k(a, b, 6), ArgumentError);
}

TEST_CASE("cs scoring end to end stays bounded and times itself") {
  const ModelConfig cfg = tiny_config();
  const Dataset d = tiny_dataset(20, 9);
  IndicatorModel ind(cfg, 55);
  ind.train(d, 1, 16, 56);
  const auto s = score_cs(ind, d, 0.9);
  REQUIRE(s.xi.size() == 20);
  REQUIRE(s.wall_time_s > 0.0);
  for (double x : s.xi) {
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
  }
}
