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

#ifndef PPT_TWIN_HPP_
#define PPT_TWIN_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppt/attention.hpp"
#include "ppt/datagen.hpp"
#include "ppt/errors.hpp"
#include "ppt/graph.hpp"
#include "ppt/mat.hpp"
#include "ppt/rng.hpp"

namespace ppt {

struct ModelConfig {
  AttentionConfig attention;
  int gru_hidden = 16;
  int state_dim = 8;  // S: width of the DTM's next-state prediction
  int bins = 10;
  int proj_dim = 32;
  int batch_size = 1;
  int window = 8;       // omega
  int input_width = 10;  // F + tte channel + mask channel
  double learning_rate = 1e-3;
  int patience = 5;

  void validate() const {
    attention.validate();
    if (bins < 2) throw ConfigError("bins must be >= 2");
    if (gru_hidden < 1 || state_dim < 1 || proj_dim < 1) {
      throw ConfigError("gru_hidden, state_dim and proj_dim must be >= 1");
    }
    if (window < 1) throw ConfigError("window must be >= 1");
    if (input_width < 3) throw ConfigError("input_width must cover features + tte + mask");
  }

  static ModelConfig elevator_profile(int F = kElevatorDefaultF) {
    ModelConfig c;
    c.attention = {16, 1, 128, 1};
    c.gru_hidden = 16;
    c.state_dim = F;
    c.proj_dim = 32;
    c.input_width = F + 2;
    return c;
  }

  static ModelConfig ads_profile() {
    ModelConfig c;
    c.attention = {128, 32, 1024, 24};
    c.gru_hidden = 64;
    c.state_dim = kAdsF;
    c.proj_dim = 128;
    c.input_width = kAdsF + 2;
    return c;
  }

  // Shrunk dimensions so a full pipeline runs in minutes on a laptop CPU.
  static ModelConfig desk_profile(int F = kElevatorDefaultF) {
    ModelConfig c;
    c.attention = {16, 2, 64, 2};
    c.gru_hidden = 16;
    c.state_dim = F;
    c.proj_dim = 16;
    c.input_width = F + 2;
    return c;
  }
};

// label_j = clamp(floor(bins * (x_j - lo_j) / (hi_j - lo_j)), 0, bins-1)
inline std::vector<int> discretize(const std::vector<double>& x, const std::vector<double>& lo,
                                   const std::vector<double>& hi, int bins) {
  if (bins < 2) throw ConfigError("discretize: bins must be >= 2");
  if (x.size() != lo.size() || x.size() != hi.size()) {
    throw ArgumentError("discretize: dimension mismatch");
  }
  std::vector<int> labels(x.size());
  for (size_t j = 0; j < x.size(); ++j) {
    if (lo[j] >= hi[j]) {
      throw ConfigError("discretize: lo >= hi in dimension " + std::to_string(j));
    }
    const double pos = std::floor(bins * (x[j] - lo[j]) / (hi[j] - lo[j]));
    labels[j] = static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
  }
  return labels;
}

inline std::vector<double> decode(const std::vector<int>& labels, const std::vector<double>& lo,
                                  const std::vector<double>& hi, int bins) {
  if (bins < 2) throw ConfigError("decode: bins must be >= 2");
  std::vector<double> x(labels.size());
  for (size_t j = 0; j < labels.size(); ++j) {
    if (lo[j] >= hi[j]) {
      throw ConfigError("decode: lo >= hi in dimension " + std::to_string(j));
    }
    x[j] = lo[j] + (labels[j] + 0.5) * (hi[j] - lo[j]) / bins;
  }
  return x;
}

// Per-dimension discretization bounds, taken from a training split and then
// frozen.
struct StateBounds {
  std::vector<double> lo, hi;

  static StateBounds from_dataset(const Dataset& d, int state_dim) {
    if (state_dim > d.F) {
      throw ConfigError("state_dim " + std::to_string(state_dim) + " exceeds feature width " +
                        std::to_string(d.F));
    }
    StateBounds b;
    b.lo.assign(state_dim, 0.0);
    b.hi.assign(state_dim, 1.0);
    if (d.samples.empty()) return b;
    for (int j = 0; j < state_dim; ++j) {
      double lo = d.samples[0].features[j];
      double hi = lo;
      for (const Sample& s : d.samples) {
        lo = std::min(lo, s.features[j]);
        hi = std::max(hi, s.features[j]);
      }
      if (hi - lo < 1e-9) hi = lo + 1.0;
      b.lo[j] = lo;
      b.hi[j] = hi;
    }
    return b;
  }
};

struct GruParams {
  Mat w_z, u_z, b_z;
  Mat w_r, u_r, b_r;
  Mat w_h, u_h, b_h;

  static GruParams init(int in, int hidden, Rng& rng) {
    GruParams p;
    p.w_z = xavier(in, hidden, rng);
    p.u_z = xavier(hidden, hidden, rng);
    p.b_z = Mat(1, hidden);
    p.w_r = xavier(in, hidden, rng);
    p.u_r = xavier(hidden, hidden, rng);
    p.b_r = Mat(1, hidden);
    p.w_h = xavier(in, hidden, rng);
    p.u_h = xavier(hidden, hidden, rng);
    p.b_h = Mat(1, hidden);
    return p;
  }
};

template <class F>
void visit_params(GruParams& p, const std::string& prefix, F&& f) {
  f(p.w_z, prefix + ".w_z");
  f(p.u_z, prefix + ".u_z");
  f(p.b_z, prefix + ".b_z");
  f(p.w_r, prefix + ".w_r");
  f(p.u_r, prefix + ".u_r");
  f(p.b_r, prefix + ".b_r");
  f(p.w_h, prefix + ".w_h");
  f(p.u_h, prefix + ".u_h");
  f(p.b_h, prefix + ".b_h");
}

// Gated recurrence over the rows of x:
//   z_t = sigma(x_t W_z + h_{t-1} U_z + b_z)
//   r_t = sigma(x_t W_r + h_{t-1} U_r + b_r)
//   hh_t = tanh(x_t W_h + (r_t . h_{t-1}) U_h + b_h)
//   h_t = (1 - z_t) . h_{t-1} + z_t . hh_t,  h_0 = 0
// Returns the (T, hidden) sequence of hidden states.
inline ad::Var gru_forward(ad::Tape& tape, ad::Var x, GruParams& p) {
  const int t_len = tape.value(x).rows();
  const int hidden = p.u_z.rows();

  ad::Var wz = tape.param(p.w_z), uz = tape.param(p.u_z), bz = tape.param(p.b_z);
  ad::Var wr = tape.param(p.w_r), ur = tape.param(p.u_r), br = tape.param(p.b_r);
  ad::Var wh = tape.param(p.w_h), uh = tape.param(p.u_h), bh = tape.param(p.b_h);

  ad::Var h = tape.input(Mat(1, hidden));
  ad::Var seq;
  for (int t = 0; t < t_len; ++t) {
    ad::Var xt = tape.slice_rows(x, t, t + 1);
    ad::Var z = tape.sigmoid(
        tape.add_rowvec(tape.add(tape.matmul(xt, wz), tape.matmul(h, uz)), bz));
    ad::Var r = tape.sigmoid(
        tape.add_rowvec(tape.add(tape.matmul(xt, wr), tape.matmul(h, ur)), br));
    ad::Var hh = tape.tanh_(tape.add_rowvec(
        tape.add(tape.matmul(xt, wh), tape.matmul(tape.mul(r, h), uh)), bh));
    ad::Var one_minus_z = tape.add_scalar(tape.scale(z, -1.0), 1.0);
    h = tape.add(tape.mul(one_minus_z, h), tape.mul(z, hh));
    seq = (t == 0) ? h : tape.concat_rows(seq, h);
  }
  tape.assert_finite(seq, "gru");
  return seq;
}

// DTM: transformer stack -> GRU -> 3x3 convolution over the hidden map ->
// linear head on the last convolved row -> per-dimension bin probabilities.
struct DtmParams {
  std::vector<MhsaParams> stack;
  GruParams gru;
  Mat conv_kernel;
  Mat w_head, b_head;

  static DtmParams init(const ModelConfig& cfg, Rng& rng) {
    DtmParams p;
    p.stack.reserve(cfg.attention.n_layers);
    for (int l = 0; l < cfg.attention.n_layers; ++l) {
      p.stack.push_back(MhsaParams::init(cfg.attention, rng));
    }
    p.gru = GruParams::init(cfg.attention.d_model, cfg.gru_hidden, rng);
    p.conv_kernel = xavier(3, 3, rng);
    p.w_head = xavier(cfg.gru_hidden, cfg.state_dim * cfg.bins, rng);
    p.b_head = Mat(1, cfg.state_dim * cfg.bins);
    return p;
  }
};

template <class F>
void visit_params(DtmParams& p, const std::string& prefix, F&& f) {
  for (size_t l = 0; l < p.stack.size(); ++l) {
    visit_params(p.stack[l], prefix + ".stack" + std::to_string(l), f);
  }
  visit_params(p.gru, prefix + ".gru", f);
  f(p.conv_kernel, prefix + ".conv_kernel");
  f(p.w_head, prefix + ".w_head");
  f(p.b_head, prefix + ".b_head");
}

struct DtmOutput {
  ad::Var hidden_seq;  // H^G_M: (T, gru_hidden)
  ad::Var probs;       // P: (S, bins), rows sum to 1
  Mat predicted;       // CU_M: (1, S) bin midpoints, detached
};

inline DtmOutput dtm_forward(ad::Tape& tape, ad::Var cu, const ModelConfig& cfg, DtmParams& p,
                             const StateBounds& bounds) {
  ad::Var z = transformer_stack(tape, cu, cfg.attention, p.stack);
  ad::Var h = gru_forward(tape, z, p.gru);
  ad::Var conv = tape.conv2d_same3(h, tape.param(p.conv_kernel));
  const int t_len = tape.value(h).rows();
  ad::Var last = tape.slice_rows(conv, t_len - 1, t_len);
  ad::Var logits = tape.linear(last, tape.param(p.w_head), tape.param(p.b_head));
  ad::Var probs = tape.softmax_rows(tape.reshape(logits, cfg.state_dim, cfg.bins));
  tape.assert_finite(probs, "dtm head");

  // argmax decode is non-differentiable; CU_M enters the DTC detached.
  const Mat& pv = tape.value(probs);
  std::vector<int> labels(cfg.state_dim);
  for (int j = 0; j < cfg.state_dim; ++j) {
    int best = 0;
    for (int b = 1; b < cfg.bins; ++b) {
      if (pv(j, b) > pv(j, best)) best = b;
    }
    labels[j] = best;
  }
  const std::vector<double> midpoints = decode(labels, bounds.lo, bounds.hi, cfg.bins);
  Mat cu_m(1, cfg.state_dim);
  for (int j = 0; j < cfg.state_dim; ++j) cu_m(0, j) = midpoints[j];
  return DtmOutput{h, probs, std::move(cu_m)};
}

// DTC: [CU | broadcast CU_M] -> input projection -> transformer stack ->
// GRU -> final hidden state -> scalar TTE estimate.
struct DtcParams {
  Mat w_in, b_in;
  std::vector<MhsaParams> stack;
  GruParams gru;
  Mat w_tau, b_tau;

  static DtcParams init(const ModelConfig& cfg, Rng& rng) {
    DtcParams p;
    p.w_in = xavier(cfg.attention.d_model + cfg.state_dim, cfg.attention.d_model, rng);
    p.b_in = Mat(1, cfg.attention.d_model);
    p.stack.reserve(cfg.attention.n_layers);
    for (int l = 0; l < cfg.attention.n_layers; ++l) {
      p.stack.push_back(MhsaParams::init(cfg.attention, rng));
    }
    p.gru = GruParams::init(cfg.attention.d_model, cfg.gru_hidden, rng);
    p.w_tau = xavier(cfg.gru_hidden, 1, rng);
    p.b_tau = Mat(1, 1);
    return p;
  }
};

template <class F>
void visit_params(DtcParams& p, const std::string& prefix, F&& f) {
  f(p.w_in, prefix + ".w_in");
  f(p.b_in, prefix + ".b_in");
  for (size_t l = 0; l < p.stack.size(); ++l) {
    visit_params(p.stack[l], prefix + ".stack" + std::to_string(l), f);
  }
  visit_params(p.gru, prefix + ".gru", f);
  f(p.w_tau, prefix + ".w_tau");
  f(p.b_tau, prefix + ".b_tau");
}

struct DtcOutput {
  ad::Var hidden_seq;  // H^G_C
  ad::Var tau_hat;     // (1, 1)
};

inline DtcOutput dtc_forward(ad::Tape& tape, ad::Var cu, const Mat& cu_m, const ModelConfig& cfg,
                             DtcParams& p) {
  const int t_len = tape.value(cu).rows();
  if (cu_m.rows() != 1 || cu_m.cols() != cfg.state_dim) {
    throw ArgumentError("dtc_forward: CU_M must be (1, state_dim), got " + cu_m.shape_str());
  }
  ad::Var x = tape.concat_cols(cu, tape.broadcast_rows(tape.input(cu_m), t_len));
  ad::Var x1 = tape.linear(x, tape.param(p.w_in), tape.param(p.b_in));
  ad::Var z = transformer_stack(tape, x1, cfg.attention, p.stack);
  ad::Var h = gru_forward(tape, z, p.gru);
  ad::Var h_last = tape.slice_rows(h, t_len - 1, t_len);
  ad::Var tau = tape.linear(h_last, tape.param(p.w_tau), tape.param(p.b_tau));
  tape.assert_finite(tau, "dtc head");
  return DtcOutput{h, tau};
}

// Mean over state dimensions of the cross-entropy against the discretized
// ground-truth successor. Supplies the DTM's training signal.
inline ad::Var dtm_aux_loss(ad::Tape& tape, ad::Var probs, const std::vector<double>& next_state,
                            const StateBounds& bounds, int bins) {
  const Mat& pv = tape.value(probs);
  const std::vector<int> labels = discretize(next_state, bounds.lo, bounds.hi, bins);
  Mat onehot(pv.rows(), pv.cols());
  for (int j = 0; j < pv.rows(); ++j) onehot(j, labels[j]) = 1.0;
  ad::Var picked = tape.mul(tape.log_eps(probs, 1e-12), tape.input(std::move(onehot)));
  return tape.scale(tape.sum_all(picked), -1.0 / pv.rows());
}

enum class Domain { kSource, kTarget };

// One domain's twin: the contextualizer feeding both halves, the DTM
// (next-state simulator) and the DTC (TTE predictor).
struct TwinState {
  Domain domain = Domain::kSource;
  ContextualizerParams ctx;
  DtmParams dtm;
  DtcParams dtc;

  static TwinState init(const ModelConfig& cfg, Domain domain, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    TwinState s;
    s.domain = domain;
    s.ctx = ContextualizerParams::init(cfg.input_width, cfg.attention, rng);
    s.dtm = DtmParams::init(cfg, rng);
    s.dtc = DtcParams::init(cfg, rng);
    return s;
  }
};

template <class F>
void visit_params(TwinState& s, const std::string& prefix, F&& f) {
  visit_params(s.ctx, prefix + ".ctx", f);
  visit_params(s.dtm, prefix + ".dtm", f);
  visit_params(s.dtc, prefix + ".dtc", f);
}

inline size_t param_count(TwinState& s) {
  size_t n = 0;
  visit_params(s, "", [&n](Mat& m, const std::string&) { n += m.size(); });
  return n;
}

// Model input rows: [features..., tte_channel, mask_channel]. The slot whose
// TTE the model must produce is masked (value zeroed, mask bit 1), as are
// padded rows.
struct ModelInput {
  Mat values;                         // (omega, F + 2)
  std::vector<long long> positions;   // original time indices
};

inline ModelInput build_model_input(const Window& w, int feature_width) {
  const int t_len = static_cast<int>(w.samples.size());
  ModelInput in;
  in.values = Mat(t_len, feature_width + 2);
  in.positions.resize(t_len);
  for (int i = 0; i < t_len; ++i) {
    const Sample& s = w.samples[i];
    in.positions[i] = s.t;
    for (int j = 0; j < feature_width; ++j) in.values(i, j) = s.features[j];
    const bool masked = w.pad_mask[i] != 0 || i == t_len - 1;
    in.values(i, feature_width) = masked ? 0.0 : s.tte;
    in.values(i, feature_width + 1) = masked ? 1.0 : 0.0;
  }
  return in;
}

// Selection sequence input: the top-K samples in temporal order; only the
// last row's TTE is masked (it is the prediction target).
inline ModelInput build_selection_input(const Dataset& d, const std::vector<int>& indices) {
  if (indices.empty()) throw ArgumentError("build_selection_input: empty selection");
  const int t_len = static_cast<int>(indices.size());
  ModelInput in;
  in.values = Mat(t_len, d.F + 2);
  in.positions.resize(t_len);
  for (int i = 0; i < t_len; ++i) {
    const Sample& s = d.samples[indices[i]];
    in.positions[i] = s.t;
    for (int j = 0; j < d.F; ++j) in.values(i, j) = s.features[j];
    const bool masked = (i == t_len - 1);
    in.values(i, d.F) = masked ? 0.0 : s.tte;
    in.values(i, d.F + 1) = masked ? 1.0 : 0.0;
  }
  return in;
}

struct TwinForward {
  ad::Var cu;
  DtmOutput dtm;
  DtcOutput dtc;
};

inline TwinForward twin_forward(ad::Tape& tape, TwinState& twin, const ModelConfig& cfg,
                                const ModelInput& in, const StateBounds& bounds) {
  ad::Var cu = contextualize(tape, in.values, in.positions, cfg.attention, twin.ctx);
  DtmOutput dtm = dtm_forward(tape, cu, cfg, twin.dtm, bounds);
  DtcOutput dtc = dtc_forward(tape, cu, dtm.predicted, cfg, twin.dtc);
  return TwinForward{cu, std::move(dtm), std::move(dtc)};
}

// Full inference path for one window: contextualize -> DTM -> DTC -> tau.
inline double predict_tte(TwinState& twin, const ModelConfig& cfg, const ModelInput& in,
                          const StateBounds& bounds, uint64_t* work = nullptr) {
  ad::Tape tape;
  TwinForward f = twin_forward(tape, twin, cfg, in, bounds);
  if (work != nullptr) *work += tape.work();
  return tape.value(f.dtc.tau_hat)(0, 0);
}

// ---------------------------------------------------------------------------
// Checkpoints: cfg + both twins + frozen bounds, JSON with a format tag.

struct TwinPair {
  ModelConfig cfg;
  TwinState source;
  TwinState target;
  StateBounds bounds;

  static TwinPair init(const ModelConfig& cfg, const StateBounds& bounds, uint64_t seed) {
    TwinPair p;
    p.cfg = cfg;
    p.source = TwinState::init(cfg, Domain::kSource, Rng::derive(seed, "sdt-init"));
    p.target = TwinState::init(cfg, Domain::kTarget, Rng::derive(seed, "tdt-init"));
    p.bounds = bounds;
    return p;
  }
};

inline constexpr const char* kCheckpointFormat = "ppt-checkpoint-v1";

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.attention.d_model;
  j["n_heads"] = c.attention.n_heads;
  j["dim_feedforward"] = c.attention.dim_feedforward;
  j["n_layers"] = c.attention.n_layers;
  j["gru_hidden"] = c.gru_hidden;
  j["state_dim"] = c.state_dim;
  j["bins"] = c.bins;
  j["proj_dim"] = c.proj_dim;
  j["batch_size"] = c.batch_size;
  j["window"] = c.window;
  j["input_width"] = c.input_width;
  j["learning_rate"] = c.learning_rate;
  j["patience"] = c.patience;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.attention.d_model = j.at("d_model").get<int>();
  c.attention.n_heads = j.at("n_heads").get<int>();
  c.attention.dim_feedforward = j.at("dim_feedforward").get<int>();
  c.attention.n_layers = j.at("n_layers").get<int>();
  c.gru_hidden = j.at("gru_hidden").get<int>();
  c.state_dim = j.at("state_dim").get<int>();
  c.bins = j.at("bins").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.window = j.at("window").get<int>();
  c.input_width = j.at("input_width").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.patience = j.at("patience").get<int>();
  return c;
}

inline void save_checkpoint(TwinPair& pair, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["cfg"] = model_config_to_json(pair.cfg);
  j["lo"] = pair.bounds.lo;
  j["hi"] = pair.bounds.hi;
  for (auto* twin : {&pair.source, &pair.target}) {
    nlohmann::ordered_json params;
    visit_params(*twin, twin == &pair.source ? "source" : "target",
                 [&params](Mat& m, const std::string& name) {
                   params[name] = m.vec();
                 });
    j[twin == &pair.source ? "source" : "target"] = std::move(params);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out << j.dump() << '\n';
}

inline TwinPair load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint '" + path + "': " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) {
    throw ParseError("checkpoint '" + path + "' has unsupported format tag '" +
                     j.value("format", "<missing>") + "'");
  }
  const ModelConfig cfg = model_config_from_json(j.at("cfg"));
  StateBounds bounds;
  bounds.lo = j.at("lo").get<std::vector<double>>();
  bounds.hi = j.at("hi").get<std::vector<double>>();
  TwinPair pair = TwinPair::init(cfg, bounds, 0);
  for (auto* twin : {&pair.source, &pair.target}) {
    const char* key = twin == &pair.source ? "source" : "target";
    const nlohmann::json& params = j.at(key);
    visit_params(*twin, key, [&params, &path](Mat& m, const std::string& name) {
      auto it = params.find(name);
      if (it == params.end()) {
        throw ParseError("checkpoint '" + path + "' lacks parameter '" + name + "'");
      }
      std::vector<double> v = it->get<std::vector<double>>();
      if (v.size() != m.size()) {
        throw ParseError("checkpoint '" + path + "' parameter '" + name +
                         "' has wrong size (cfg mismatch)");
      }
      m.vec() = std::move(v);
    });
  }
  return pair;
}

inline void require_same_config(const ModelConfig& a, const ModelConfig& b, const char* what) {
  if (model_config_to_json(a) != model_config_to_json(b)) {
    throw ConfigError(std::string(what) + ": model config mismatch with checkpoint");
  }
}

}  // namespace ppt

#endif  // PPT_TWIN_HPP_
