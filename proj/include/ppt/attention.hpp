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

#ifndef PPT_ATTENTION_HPP_
#define PPT_ATTENTION_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "ppt/errors.hpp"
#include "ppt/graph.hpp"
#include "ppt/mat.hpp"
#include "ppt/rng.hpp"

namespace ppt {

struct AttentionConfig {
  int d_model = 16;
  int n_heads = 1;
  int dim_feedforward = 128;
  int n_layers = 1;

  void validate() const {
    if (d_model < 1 || n_heads < 1 || dim_feedforward < 1 || n_layers < 1) {
      throw ConfigError("attention config fields must all be >= 1");
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    }
  }
};

// Dropout is off everywhere except when a block serves as a Bayesian
// indicator; then the uq module passes a context with an Rng.
struct DropoutCtx {
  double p = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && p > 0.0; }
};

inline Mat xavier(int rows, int cols, Rng& rng) {
  return rng.normal_mat(rows, cols, std::sqrt(2.0 / (rows + cols)));
}

// One MHSA block: per-head QKV projections, scaled dot-product attention,
// output projection, then a two-layer ReLU feed-forward added residually.
struct MhsaParams {
  Mat w_q, b_q, w_k, b_k, w_v, b_v;
  Mat w_o, b_o;
  Mat w_ffn1, b_ffn1, w_ffn2, b_ffn2;

  static MhsaParams init(const AttentionConfig& cfg, Rng& rng) {
    const int d = cfg.d_model;
    const int dff = cfg.dim_feedforward;
    MhsaParams p;
    p.w_q = xavier(d, d, rng);
    p.b_q = Mat(1, d);
    p.w_k = xavier(d, d, rng);
    p.b_k = Mat(1, d);
    p.w_v = xavier(d, d, rng);
    p.b_v = Mat(1, d);
    p.w_o = xavier(d, d, rng);
    p.b_o = Mat(1, d);
    p.w_ffn1 = xavier(d, dff, rng);
    p.b_ffn1 = Mat(1, dff);
    p.w_ffn2 = xavier(dff, d, rng);
    p.b_ffn2 = Mat(1, d);
    return p;
  }
};

template <class F>
void visit_params(MhsaParams& p, const std::string& prefix, F&& f) {
  f(p.w_q, prefix + ".w_q");
  f(p.b_q, prefix + ".b_q");
  f(p.w_k, prefix + ".w_k");
  f(p.b_k, prefix + ".b_k");
  f(p.w_v, prefix + ".w_v");
  f(p.b_v, prefix + ".b_v");
  f(p.w_o, prefix + ".w_o");
  f(p.b_o, prefix + ".b_o");
  f(p.w_ffn1, prefix + ".w_ffn1");
  f(p.b_ffn1, prefix + ".b_ffn1");
  f(p.w_ffn2, prefix + ".w_ffn2");
  f(p.b_ffn2, prefix + ".b_ffn2");
}

// Sinusoidal position rows over geometric frequencies; column pairs hold
// sin/cos of pos * 10000^(-2k/d). Width equals d_in.
inline Mat positional_rows(const std::vector<long long>& positions, int d_in) {
  Mat pe(static_cast<int>(positions.size()), d_in);
  for (int i = 0; i < pe.rows(); ++i) {
    const double pos = static_cast<double>(positions[i]);
    for (int j = 0; j < d_in; ++j) {
      const int k = j / 2;
      const double freq = std::pow(10000.0, -2.0 * k / d_in);
      pe(i, j) = (j % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

// Appends the position vector to each row: (T, d_in) -> (T, 2*d_in). When no
// positions are given, rows are numbered 0..T-1.
inline Mat positional_encode(const Mat& u, const std::vector<long long>* positions = nullptr) {
  if (u.rows() < 1) throw ArgumentError("positional_encode: empty input");
  std::vector<long long> default_pos;
  if (positions == nullptr) {
    default_pos.resize(u.rows());
    for (int i = 0; i < u.rows(); ++i) default_pos[i] = i;
    positions = &default_pos;
  }
  if (static_cast<int>(positions->size()) != u.rows()) {
    throw ArgumentError("positional_encode: positions size mismatch");
  }
  const Mat pe = positional_rows(*positions, u.cols());
  Mat out(u.rows(), 2 * u.cols());
  for (int i = 0; i < u.rows(); ++i) {
    for (int j = 0; j < u.cols(); ++j) {
      out(i, j) = u(i, j);
      out(i, u.cols() + j) = pe(i, j);
    }
  }
  return out;
}

inline ad::Var apply_dropout(ad::Tape& tape, ad::Var x, const DropoutCtx* dropout) {
  if (dropout == nullptr || !dropout->active()) return x;
  const Mat& v = tape.value(x);
  Mat mask(v.rows(), v.cols());
  const double keep = 1.0 - dropout->p;
  for (double& m : mask.vec()) {
    m = dropout->rng->uniform01() < dropout->p ? 0.0 : 1.0 / keep;
  }
  return tape.mul(x, tape.input(std::move(mask)));
}

// U_att = concat_h softmax(Q_h K_h^T / sqrt(d_k)) V_h, projected back to
// d_model; block output is U_att + FFN(U_att).
inline ad::Var mhsa_block(ad::Tape& tape, ad::Var u, const AttentionConfig& cfg, MhsaParams& p,
                          const DropoutCtx* dropout = nullptr) {
  cfg.validate();
  if (tape.value(u).cols() != cfg.d_model) {
    throw ArgumentError("mhsa_block: input width " + std::to_string(tape.value(u).cols()) +
                        " != d_model " + std::to_string(cfg.d_model));
  }
  const int d_k = cfg.d_model / cfg.n_heads;

  ad::Var q = tape.linear(u, tape.param(p.w_q), tape.param(p.b_q));
  ad::Var k = tape.linear(u, tape.param(p.w_k), tape.param(p.b_k));
  ad::Var v = tape.linear(u, tape.param(p.w_v), tape.param(p.b_v));

  ad::Var heads;
  for (int h = 0; h < cfg.n_heads; ++h) {
    const int c0 = h * d_k;
    const int c1 = c0 + d_k;
    ad::Var qh = tape.slice_cols(q, c0, c1);
    ad::Var kh = tape.slice_cols(k, c0, c1);
    ad::Var vh = tape.slice_cols(v, c0, c1);
    ad::Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(d_k));
    ad::Var attn = tape.softmax_rows(scores);
    ad::Var oh = tape.matmul(attn, vh);
    heads = (h == 0) ? oh : tape.concat_cols(heads, oh);
  }
  ad::Var u_att = tape.linear(heads, tape.param(p.w_o), tape.param(p.b_o));
  tape.assert_finite(u_att, "attention");

  ad::Var hidden = tape.relu(tape.linear(u_att, tape.param(p.w_ffn1), tape.param(p.b_ffn1)));
  hidden = apply_dropout(tape, hidden, dropout);
  ad::Var u_ffn = tape.linear(hidden, tape.param(p.w_ffn2), tape.param(p.b_ffn2));
  ad::Var out = tape.add(u_att, u_ffn);
  tape.assert_finite(out, "feed-forward residual");
  return out;
}

inline ad::Var transformer_stack(ad::Tape& tape, ad::Var u, const AttentionConfig& cfg,
                                 std::vector<MhsaParams>& layers,
                                 const DropoutCtx* dropout = nullptr) {
  if (cfg.n_layers < 1) throw ArgumentError("transformer_stack: n_layers must be >= 1");
  if (static_cast<int>(layers.size()) != cfg.n_layers) {
    throw ArgumentError("transformer_stack: have " + std::to_string(layers.size()) +
                        " layers, config says " + std::to_string(cfg.n_layers));
  }
  ad::Var x = u;
  for (MhsaParams& layer : layers) x = mhsa_block(tape, x, cfg, layer, dropout);
  return x;
}

// Input embedding + a single MHSA block, producing the contextualized
// uncertain-sample matrix CU. Positions come from the samples' original time
// indices.
struct ContextualizerParams {
  Mat w_embed, b_embed;
  MhsaParams block;

  static ContextualizerParams init(int input_width, const AttentionConfig& cfg, Rng& rng) {
    ContextualizerParams p;
    p.w_embed = xavier(2 * input_width, cfg.d_model, rng);
    p.b_embed = Mat(1, cfg.d_model);
    p.block = MhsaParams::init(cfg, rng);
    return p;
  }
};

template <class F>
void visit_params(ContextualizerParams& p, const std::string& prefix, F&& f) {
  f(p.w_embed, prefix + ".w_embed");
  f(p.b_embed, prefix + ".b_embed");
  visit_params(p.block, prefix + ".block", f);
}

inline ad::Var contextualize(ad::Tape& tape, const Mat& samples,
                             const std::vector<long long>& positions, const AttentionConfig& cfg,
                             ContextualizerParams& p, const DropoutCtx* dropout = nullptr) {
  const Mat encoded = positional_encode(samples, &positions);
  ad::Var x = tape.input(encoded);
  ad::Var embedded = tape.linear(x, tape.param(p.w_embed), tape.param(p.b_embed));
  return mhsa_block(tape, embedded, cfg, p.block, dropout);
}

}  // namespace ppt

#endif  // PPT_ATTENTION_HPP_
