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
#include <filesystem>
#include <vector>

#include "ppt/twin.hpp"
#include "test_util.hpp"

using namespace ppt;
using ppt::ad::Tape;
using ppt::ad::Var;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.attention = {8, 2, 16, 1};
  c.gru_hidden = 8;
  c.state_dim = 4;
  c.bins = 5;
  c.proj_dim = 6;
  c.window = 4;
  c.input_width = 6;  // F = 4
  return c;
}

// Plain-arithmetic GRU oracle; also verifies the gates stay inside (0, 1).
Mat manual_gru(const Mat& x, const GruParams& p) {
  const int hidden = p.u_z.rows();
  Mat h(1, hidden);
  Mat seq(x.rows(), hidden);
  const auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int t = 0; t < x.rows(); ++t) {
    Mat xt(1, x.cols());
    for (int j = 0; j < x.cols(); ++j) xt(0, j) = x(t, j);
    Mat z = matmul(xt, p.w_z);
    Mat r = matmul(xt, p.w_r);
    Mat hh = matmul(xt, p.w_h);
    const Mat zu = matmul(h, p.u_z);
    const Mat ru = matmul(h, p.u_r);
    for (int j = 0; j < hidden; ++j) {
      z(0, j) = sigmoid(z(0, j) + zu(0, j) + p.b_z(0, j));
      r(0, j) = sigmoid(r(0, j) + ru(0, j) + p.b_r(0, j));
      REQUIRE(z(0, j) > 0.0);
      REQUIRE(z(0, j) < 1.0);
      REQUIRE(r(0, j) > 0.0);
      REQUIRE(r(0, j) < 1.0);
    }
    Mat rh(1, hidden);
    for (int j = 0; j < hidden; ++j) rh(0, j) = r(0, j) * h(0, j);
    const Mat hu = matmul(rh, p.u_h);
    for (int j = 0; j < hidden; ++j) {
      hh(0, j) = std::tanh(hh(0, j) + hu(0, j) + p.b_h(0, j));
      h(0, j) = (1.0 - z(0, j)) * h(0, j) + z(0, j) * hh(0, j);
      seq(t, j) = h(0, j);
    }
  }
  return seq;
}

}  // namespace

TEST_CASE("discretize and decode follow the boundary rules") {
  const std::vector<double> lo{0.0}, hi{10.0};
  REQUIRE(discretize({0.0}, lo, hi, 10)[0] == 0);
  REQUIRE(discretize({9.99}, lo, hi, 10)[0] == 9);
  REQUIRE(discretize({10.0}, lo, hi, 10)[0] == 9);  // clamped at hi
  REQUIRE(discretize({-5.0}, lo, hi, 10)[0] == 0);  // clamped at lo

  // decode(discretize(x)) within (hi-lo)/(2*bins) of x over a grid.
  const double half_bin = 10.0 / (2 * 10);
  for (double x = 0.0; x < 10.0; x += 0.177) {
    const auto label = discretize({x}, lo, hi, 10);
    const auto back = decode(label, lo, hi, 10);
    REQUIRE(std::fabs(back[0] - x) <= half_bin + 1e-12);
  }

  REQUIRE_THROWS_AS(discretize({1.0}, {5.0}, {5.0}, 10), ConfigError);
  REQUIRE_THROWS_AS(discretize({1.0}, {6.0}, {5.0}, 10), ConfigError);
}

TEST_CASE("gru with zero parameters halves its state and stays at zero") {
  GruParams p;
  p.w_z = Mat(3, 4);
  p.u_z = Mat(4, 4);
  p.b_z = Mat(1, 4);
  p.w_r = Mat(3, 4);
  p.u_r = Mat(4, 4);
  p.b_r = Mat(1, 4);
  p.w_h = Mat(3, 4);
  p.u_h = Mat(4, 4);
  p.b_h = Mat(1, 4);

  Rng rng(3);
  const Mat x = rng.normal_mat(5, 3, 1.0);
  Tape tape;
  const Mat h = tape.value(gru_forward(tape, tape.input(x), p));
  // z = r = 0.5, hh = 0, so h_t = 0.5 h_{t-1}; with h_0 = 0 every state is 0.
  for (double v : h.vec()) REQUIRE(v == 0.0);
}

TEST_CASE("gru matches a plain-arithmetic oracle") {
  Rng rng(4);
  GruParams p = GruParams::init(3, 4, rng);
  const Mat x = rng.normal_mat(6, 3, 1.0);

  Tape tape;
  const Mat got = tape.value(gru_forward(tape, tape.input(x), p));
  const Mat want = manual_gru(x, p);
  REQUIRE(got.rows() == want.rows());
  for (size_t i = 0; i < got.size(); ++i) {
    REQUIRE(got.vec()[i] == Catch::Approx(want.vec()[i]).margin(1e-12));
  }
}

TEST_CASE("dtm forward yields probability rows and in-range decodes") {
  const ModelConfig cfg = tiny_config();
  Rng rng(5);
  DtmParams p = DtmParams::init(cfg, rng);
  StateBounds bounds;
  bounds.lo.assign(cfg.state_dim, -2.0);
  bounds.hi.assign(cfg.state_dim, 2.0);

  Tape tape;
  const Mat cu = rng.normal_mat(4, cfg.attention.d_model, 1.0);
  const DtmOutput out = dtm_forward(tape, tape.input(cu), cfg, p, bounds);

  const Mat& probs = tape.value(out.probs);
  REQUIRE(probs.rows() == cfg.state_dim);
  REQUIRE(probs.cols() == cfg.bins);
  for (int j = 0; j < probs.rows(); ++j) {
    double sum = 0.0;
    for (int b = 0; b < probs.cols(); ++b) sum += probs(j, b);
    REQUIRE(std::fabs(sum - 1.0) < 1e-6);
  }
  for (int j = 0; j < cfg.state_dim; ++j) {
    REQUIRE(out.predicted(0, j) >= bounds.lo[j]);
    REQUIRE(out.predicted(0, j) <= bounds.hi[j]);
    // Midpoints only.
    const double width = (bounds.hi[j] - bounds.lo[j]) / cfg.bins;
    const double offset = (out.predicted(0, j) - bounds.lo[j]) / width - 0.5;
    REQUIRE(std::fabs(offset - std::round(offset)) < 1e-9);
  }
  REQUIRE(tape.value(out.hidden_seq).rows() == 4);
  REQUIRE(tape.value(out.hidden_seq).cols() == cfg.gru_hidden);
}

TEST_CASE("dtc bias-only head and linear-head gradient identity") {
  const ModelConfig cfg = tiny_config();
  Rng rng(6);
  DtcParams p = DtcParams::init(cfg, rng);
  for (double& v : p.w_tau.vec()) v = 0.0;
  p.b_tau(0, 0) = 3.2;

  Tape tape;
  const Mat cu = rng.normal_mat(4, cfg.attention.d_model, 1.0);
  Mat cu_m(1, cfg.state_dim, 0.3);
  const DtcOutput out = dtc_forward(tape, tape.input(cu), cu_m, cfg, p);
  REQUIRE(tape.value(out.tau_hat)(0, 0) == Catch::Approx(3.2).margin(1e-12));

  // d tau / d W_tau = h_T.
  tape.backward(out.tau_hat);
  const Mat& h_seq = tape.value(out.hidden_seq);
  Mat grad_w;
  for (const auto& [mat, var] : tape.bound_params()) {
    if (mat == &p.w_tau) grad_w = tape.grad(var);
  }
  REQUIRE(grad_w.rows() == cfg.gru_hidden);
  for (int j = 0; j < cfg.gru_hidden; ++j) {
    REQUIRE(grad_w(j, 0) == Catch::Approx(h_seq(3, j)).margin(1e-12));
  }
}

TEST_CASE("tau_hat stays finite on random seeded inputs") {
  const ModelConfig cfg = tiny_config();
  StateBounds bounds;
  bounds.lo.assign(cfg.state_dim, -3.0);
  bounds.hi.assign(cfg.state_dim, 3.0);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    TwinState twin = TwinState::init(cfg, Domain::kTarget, seed);
    ModelInput in;
    in.values = rng.normal_mat(cfg.window, cfg.input_width, 1.0);
    in.positions = {0, 1, 2, 3};
    const double tau = predict_tte(twin, cfg, in, bounds);
    REQUIRE(std::isfinite(tau));
  }
}

TEST_CASE("dtm aux loss hits the book values") {
  const int s_dim = 3, bins = 10;
  StateBounds bounds;
  bounds.lo.assign(s_dim, 0.0);
  bounds.hi.assign(s_dim, 1.0);
  const std::vector<double> next{0.05, 0.55, 0.95};  // labels 0, 5, 9

  // Exact one-hot on the true labels -> loss 0 (up to the log-eps guard).
  Tape t1;
  Mat onehot(s_dim, bins);
  onehot(0, 0) = 1.0;
  onehot(1, 5) = 1.0;
  onehot(2, 9) = 1.0;
  // Feed logits that softmax into (numerically) one-hot rows.
  Mat logits(s_dim, bins, -60.0);
  logits(0, 0) = 60.0;
  logits(1, 5) = 60.0;
  logits(2, 9) = 60.0;
  Var p1 = t1.softmax_rows(t1.input(logits));
  REQUIRE(t1.value(dtm_aux_loss(t1, p1, next, bounds, bins))(0, 0) ==
          Catch::Approx(0.0).margin(1e-9));

  // Uniform probabilities -> ln 10.
  Tape t2;
  Var p2 = t2.softmax_rows(t2.input(Mat(s_dim, bins)));
  REQUIRE(t2.value(dtm_aux_loss(t2, p2, next, bounds, bins))(0, 0) ==
          Catch::Approx(std::log(10.0)).epsilon(1e-9));

  // Random probabilities -> non-negative.
  Rng rng(7);
  Tape t3;
  Var p3 = t3.softmax_rows(t3.input(rng.normal_mat(s_dim, bins, 2.0)));
  REQUIRE(t3.value(dtm_aux_loss(t3, p3, next, bounds, bins))(0, 0) >= 0.0);
}

TEST_CASE("full twin gradient check on a tiny config") {
  const ModelConfig cfg = tiny_config();
  StateBounds bounds;
  bounds.lo.assign(cfg.state_dim, -2.0);
  bounds.hi.assign(cfg.state_dim, 2.0);
  TwinState twin = TwinState::init(cfg, Domain::kSource, 17);
  Rng rng(18);
  ModelInput in;
  in.values = rng.normal_mat(cfg.window, cfg.input_width, 0.8);
  in.positions = {0, 1, 2, 3};
  const std::vector<double> next{0.5, -0.5, 1.0, 0.0};

  std::vector<Mat*> params;
  visit_params(twin, "twin", [&params](Mat& m, const std::string&) { params.push_back(&m); });

  const auto forward_loss = [&](Tape& t) {
    TwinForward f = twin_forward(t, twin, cfg, in, bounds);
    Var huberish = t.square(t.add_scalar(f.dtc.tau_hat, -1.3));
    Var aux = dtm_aux_loss(t, f.dtm.probs, next, bounds, cfg.bins);
    return t.add(t.sum_all(huberish), aux);
  };
  const auto loss = [&]() {
    Tape t;
    return t.value(forward_loss(t))(0, 0);
  };
  const auto grads = [&]() {
    Tape t;
    t.backward(forward_loss(t));
    std::vector<Mat> gs;
    std::unordered_map<Mat*, Mat> by_ptr;
    for (const auto& [mat, var] : t.bound_params()) by_ptr.emplace(mat, t.grad(var));
    gs.reserve(params.size());
    for (Mat* m : params) gs.push_back(by_ptr.at(m));
    return gs;
  };
  REQUIRE(ppt::testutil::gradient_check(params, loss, grads) < 1e-3);
}

TEST_CASE("checkpoints round-trip and reject mismatched configs") {
  const ModelConfig cfg = tiny_config();
  const Dataset d = generate_elevator_dataset(make_elevator_system("Ck", 0.6, 1.0), 30, 9, 4);
  TwinPair pair = TwinPair::init(cfg, StateBounds::from_dataset(d, cfg.state_dim), 33);

  const auto path = std::filesystem::temp_directory_path() / "ppt_ckpt.json";
  save_checkpoint(pair, path.string());
  TwinPair back = load_checkpoint(path.string());

  REQUIRE(model_config_to_json(back.cfg) == model_config_to_json(pair.cfg));
  REQUIRE(back.bounds.lo == pair.bounds.lo);
  bool all_equal = true;
  std::vector<double> flat_a, flat_b;
  visit_params(pair.source, "s", [&flat_a](Mat& m, const std::string&) {
    flat_a.insert(flat_a.end(), m.vec().begin(), m.vec().end());
  });
  visit_params(back.source, "s", [&flat_b](Mat& m, const std::string&) {
    flat_b.insert(flat_b.end(), m.vec().begin(), m.vec().end());
  });
  REQUIRE(flat_a == flat_b);
  REQUIRE(all_equal);

  ModelConfig other = cfg;
  other.gru_hidden = 12;
  REQUIRE_THROWS_AS(require_same_config(other, back.cfg, "tune"), ConfigError);

  // Tampered format tag.
  {
    std::ofstream out(path);
    out << "{\"format\":\"bogus\"}";
  }
  REQUIRE_THROWS_AS(load_checkpoint(path.string()), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("parameter counts are fixed by the config") {
  const ModelConfig cfg = tiny_config();
  TwinState a = TwinState::init(cfg, Domain::kSource, 1);
  TwinState b = TwinState::init(cfg, Domain::kSource, 2);
  REQUIRE(param_count(a) == param_count(b));
  REQUIRE(param_count(a) > 0);
}
