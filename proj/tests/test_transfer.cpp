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

#include "ppt/transfer.hpp"
#include "test_util.hpp"

using namespace ppt;
using ppt::ad::Tape;
using ppt::ad::Var;

TEST_CASE("projection maps into (-1, 1) and is odd in its pre-activation") {
  Rng rng(21);
  ProjectionParams p = ProjectionParams::init(5, 3, rng);

  SECTION("zero parameters give zero output") {
    ProjectionParams zero = p;
    for (double& v : zero.w.vec()) v = 0.0;
    for (double& v : zero.b.vec()) v = 0.0;
    Tape t;
    const Mat out = t.value(project(t, t.input(rng.normal_mat(4, 5, 2.0)), zero));
    for (double v : out.vec()) REQUIRE(v == 0.0);
  }

  SECTION("bounded strictly below 1 in magnitude") {
    Tape t;
    const Mat out = t.value(project(t, t.input(rng.normal_mat(6, 5, 3.0)), p));
    for (double v : out.vec()) REQUIRE(std::fabs(v) < 1.0);
  }

  SECTION("negating W and b negates the output") {
    const Mat h = rng.normal_mat(4, 5, 1.0);
    Tape t1;
    const Mat out = t1.value(project(t1, t1.input(h), p));
    ProjectionParams neg = p;
    for (double& v : neg.w.vec()) v = -v;
    for (double& v : neg.b.vec()) v = -v;
    Mat h_neg = h;
    for (double& v : h_neg.vec()) v = -v;
    Tape t2;
    const Mat out2 = t2.value(project(t2, t2.input(h_neg), neg));
    for (size_t i = 0; i < out.size(); ++i) {
      REQUIRE(out2.vec()[i] == Catch::Approx(-out.vec()[i]).margin(1e-12));
    }
  }
}

TEST_CASE("marginal loss is a true KL after row normalization") {
  Rng rng(22);

  SECTION("identical representations give exactly zero") {
    const Mat h = rng.normal_mat(5, 4, 1.0);
    Tape t;
    const double v = t.value(marginal_loss(t, t.input(h), t.input(h)))(0, 0);
    REQUIRE(v == 0.0);
  }

  SECTION("hand-computed two-bin case") {
    // softmax([0, 0]) = [0.5, 0.5]; softmax([0, ln 3]) = [0.25, 0.75].
    Mat hs(1, 2);
    Mat ht(1, 2);
    ht(0, 1) = std::log(3.0);
    Tape t;
    const double v = t.value(marginal_loss(t, t.input(hs), t.input(ht)))(0, 0);
    const double want = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    REQUIRE(v == Catch::Approx(want).margin(1e-9));
    REQUIRE(v == Catch::Approx(0.143841).margin(1e-6));
  }

  SECTION("non-negative on random pairs") {
    for (int trial = 0; trial < 1000; ++trial) {
      const Mat a = rng.normal_mat(3, 5, 2.0);
      const Mat b = rng.normal_mat(3, 5, 2.0);
      Tape t;
      REQUIRE(t.value(marginal_loss(t, t.input(a), t.input(b)))(0, 0) >= -1e-12);
    }
  }

  SECTION("shape mismatch is rejected") {
    Tape t;
    REQUIRE_THROWS_AS(
        marginal_loss(t, t.input(Mat(2, 3)), t.input(Mat(3, 3))), ArgumentError);
  }
}

TEST_CASE("conditional loss is the norm of the mean difference") {
  Rng rng(23);

  SECTION("identical batches give exactly zero") {
    const Mat p = rng.normal_mat(6, 4, 1.0);
    Tape t;
    REQUIRE(t.value(conditional_loss(t, t.input(p), t.input(p)))(0, 0) == 0.0);
  }

  SECTION("unit separation along one axis") {
    Mat ps(2, 2);
    ps(0, 0) = 2.0;  // mean over rows: [1, 0]
    Mat pt(2, 2);    // mean [0, 0]
    Tape t;
    REQUIRE(t.value(conditional_loss(t, t.input(ps), t.input(pt)))(0, 0) ==
            Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("row permutation within a batch changes nothing") {
    const Mat p = rng.normal_mat(5, 3, 1.0);
    Mat permuted(5, 3);
    const int perm[5] = {4, 2, 0, 1, 3};
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) permuted(i, j) = p(perm[i], j);
    const Mat q = rng.normal_mat(4, 3, 1.0);
    Tape t1, t2;
    const double v1 = t1.value(conditional_loss(t1, t1.input(p), t1.input(q)))(0, 0);
    const double v2 = t2.value(conditional_loss(t2, t2.input(permuted), t2.input(q)))(0, 0);
    REQUIRE(v1 == Catch::Approx(v2).margin(1e-12));
  }

  SECTION("symmetry") {
    const Mat a = rng.normal_mat(4, 3, 1.0);
    const Mat b = rng.normal_mat(6, 3, 1.0);
    Tape t1, t2;
    const double ab = t1.value(conditional_loss(t1, t1.input(a), t1.input(b)))(0, 0);
    const double ba = t2.value(conditional_loss(t2, t2.input(b), t2.input(a)))(0, 0);
    REQUIRE(std::fabs(ab - ba) < 1e-9);
  }

  SECTION("empty batch is rejected") {
    Tape t;
    REQUIRE_THROWS_AS(conditional_loss(t, t.input(Mat(0, 3)), t.input(Mat(2, 3))),
                      ArgumentError);
  }
}

TEST_CASE("alignment losses vanish for identical twins under shared projections") {
  ModelConfig cfg;
  cfg.attention = {8, 1, 16, 1};
  cfg.gru_hidden = 8;
  cfg.state_dim = 4;
  cfg.bins = 5;
  cfg.proj_dim = 6;
  cfg.window = 4;
  cfg.input_width = 6;
  StateBounds bounds;
  bounds.lo.assign(cfg.state_dim, -2.0);
  bounds.hi.assign(cfg.state_dim, 2.0);

  TwinState source = TwinState::init(cfg, Domain::kSource, 50);
  TwinState target = source;  // identical parameters
  target.domain = Domain::kTarget;

  AlignmentParams align = AlignmentParams::init(cfg, 51);
  align.proj_tm = align.proj_sm;
  align.proj_tc = align.proj_sc;
  align.proj_pt = align.proj_ps;

  Rng rng(52);
  ModelInput in;
  in.values = rng.normal_mat(cfg.window, cfg.input_width, 1.0);
  in.positions = {0, 1, 2, 3};

  Tape t;
  TwinForward sdt = twin_forward(t, source, cfg, in, bounds);
  TwinForward tdt = twin_forward(t, target, cfg, in, bounds);
  AlignmentLosses losses = alignment_losses(t, sdt, tdt, align);
  REQUIRE(t.value(losses.marginal)(0, 0) == 0.0);
  REQUIRE(t.value(losses.conditional)(0, 0) == 0.0);
}

TEST_CASE("alignment losses stay non-negative when widths change") {
  for (int proj_dim : {6, 12}) {
    ModelConfig cfg;
    cfg.attention = {8, 1, 16, 1};
    cfg.gru_hidden = 8;
    cfg.state_dim = 4;
    cfg.bins = 5;
    cfg.proj_dim = proj_dim;
    cfg.window = 4;
    cfg.input_width = 6;
    StateBounds bounds;
    bounds.lo.assign(cfg.state_dim, -2.0);
    bounds.hi.assign(cfg.state_dim, 2.0);
    TwinState source = TwinState::init(cfg, Domain::kSource, 60);
    TwinState target = TwinState::init(cfg, Domain::kTarget, 61);
    AlignmentParams align = AlignmentParams::init(cfg, 62);
    Rng rng(63);
    ModelInput in;
    in.values = rng.normal_mat(cfg.window, cfg.input_width, 1.0);
    in.positions = {0, 1, 2, 3};
    Tape t;
    TwinForward sdt = twin_forward(t, source, cfg, in, bounds);
    TwinForward tdt = twin_forward(t, target, cfg, in, bounds);
    AlignmentLosses losses = alignment_losses(t, sdt, tdt, align);
    REQUIRE(t.value(losses.marginal)(0, 0) >= 0.0);
    REQUIRE(t.value(losses.conditional)(0, 0) >= 0.0);
  }
}

TEST_CASE("alignment gradients w.r.t. projections match finite differences") {
  Rng rng(24);
  ProjectionParams pa = ProjectionParams::init(4, 3, rng);
  ProjectionParams pb = ProjectionParams::init(4, 3, rng);
  const Mat hs = rng.normal_mat(5, 4, 1.0);
  const Mat ht = rng.normal_mat(5, 4, 1.0);

  std::vector<Mat*> params{&pa.w, &pa.b, &pb.w, &pb.b};
  const auto build = [&](Tape& t) {
    Var ls = marginal_loss(t, project(t, t.input(hs), pa), project(t, t.input(ht), pb));
    Var lc = conditional_loss(t, project(t, t.input(hs), pa), project(t, t.input(ht), pb));
    return t.add(ls, lc);
  };
  const auto loss = [&]() {
    Tape t;
    return t.value(build(t))(0, 0);
  };
  const auto grads = [&]() {
    Tape t;
    t.backward(build(t));
    std::unordered_map<Mat*, Mat> by_ptr;
    for (const auto& [mat, var] : t.bound_params()) {
      auto it = by_ptr.find(mat);
      if (it == by_ptr.end()) {
        by_ptr.emplace(mat, t.grad(var));
      } else {
        const Mat& g = t.grad(var);
        for (size_t i = 0; i < g.size(); ++i) it->second.vec()[i] += g.vec()[i];
      }
    }
    std::vector<Mat> gs;
    for (Mat* m : params) gs.push_back(by_ptr.at(m));
    return gs;
  };
  REQUIRE(ppt::testutil::gradient_check(params, loss, grads) < 1e-3);
}
