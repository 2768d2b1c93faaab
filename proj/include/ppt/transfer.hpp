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

#ifndef PPT_TRANSFER_HPP_
#define PPT_TRANSFER_HPP_

#include <string>

#include "ppt/attention.hpp"
#include "ppt/errors.hpp"
#include "ppt/graph.hpp"
#include "ppt/mat.hpp"
#include "ppt/rng.hpp"
#include "ppt/twin.hpp"

namespace ppt {

constexpr double kLogEps = 1e-12;
constexpr double kNormEps = 1e-12;

// proj(H) = tanh(H W_P + b_P); output entries lie strictly in (-1, 1).
struct ProjectionParams {
  Mat w, b;

  static ProjectionParams init(int input_width, int proj_dim, Rng& rng) {
    ProjectionParams p;
    p.w = xavier(input_width, proj_dim, rng);
    p.b = Mat(1, proj_dim);
    return p;
  }
};

template <class F>
void visit_params(ProjectionParams& p, const std::string& prefix, F&& f) {
  f(p.w, prefix + ".w");
  f(p.b, prefix + ".b");
}

inline ad::Var project(ad::Tape& tape, ad::Var h, ProjectionParams& p) {
  if (tape.value(h).cols() != p.w.rows()) {
    throw ArgumentError("project: input width " + std::to_string(tape.value(h).cols()) +
                        " != W_P rows " + std::to_string(p.w.rows()));
  }
  return tape.tanh_(tape.linear(h, tape.param(p.w), tape.param(p.b)));
}

// KL divergence between the two representation sequences: every timestep is
// softmax-normalized into a distribution, then
//   (1/T) sum_t sum_d p_S log(p_S / p_T)
// with an epsilon guard inside the logs.
inline ad::Var marginal_loss(ad::Tape& tape, ad::Var h_source, ad::Var h_target) {
  const Mat& s = tape.value(h_source);
  const Mat& t = tape.value(h_target);
  if (!s.same_shape(t)) {
    throw ArgumentError("marginal_loss: shape mismatch " + s.shape_str() + " vs " +
                        t.shape_str());
  }
  ad::Var p_s = tape.softmax_rows(h_source);
  ad::Var p_t = tape.softmax_rows(h_target);
  ad::Var log_ratio = tape.sub(tape.log_eps(p_s, kLogEps), tape.log_eps(p_t, kLogEps));
  return tape.scale(tape.sum_all(tape.mul(p_s, log_ratio)), 1.0 / s.rows());
}

// Linear-kernel MMD: the L2 norm of the difference between the two batch
// means. The epsilon only guards the gradient at zero; the value itself is
// exactly 0 for identical batches.
inline ad::Var conditional_loss(ad::Tape& tape, ad::Var p_source, ad::Var p_target) {
  const Mat& s = tape.value(p_source);
  const Mat& t = tape.value(p_target);
  if (s.rows() < 1 || t.rows() < 1) throw ArgumentError("conditional_loss: empty batch");
  if (s.cols() != t.cols()) {
    throw ArgumentError("conditional_loss: width mismatch " + s.shape_str() + " vs " +
                        t.shape_str());
  }
  ad::Var diff = tape.sub(tape.mean_rows(p_source), tape.mean_rows(p_target));
  return tape.l2norm_eps(diff, kNormEps);
}

// Six unshared projections: four for the marginal GRU-representation pairs,
// two for the conditional prediction pair.
struct AlignmentParams {
  ProjectionParams proj_sm, proj_tm, proj_sc, proj_tc;
  ProjectionParams proj_ps, proj_pt;

  static AlignmentParams init(const ModelConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    AlignmentParams a;
    a.proj_sm = ProjectionParams::init(cfg.gru_hidden, cfg.proj_dim, rng);
    a.proj_tm = ProjectionParams::init(cfg.gru_hidden, cfg.proj_dim, rng);
    a.proj_sc = ProjectionParams::init(cfg.gru_hidden, cfg.proj_dim, rng);
    a.proj_tc = ProjectionParams::init(cfg.gru_hidden, cfg.proj_dim, rng);
    a.proj_ps = ProjectionParams::init(cfg.bins, cfg.proj_dim, rng);
    a.proj_pt = ProjectionParams::init(cfg.bins, cfg.proj_dim, rng);
    return a;
  }
};

template <class F>
void visit_params(AlignmentParams& a, const std::string& prefix, F&& f) {
  visit_params(a.proj_sm, prefix + ".proj_sm", f);
  visit_params(a.proj_tm, prefix + ".proj_tm", f);
  visit_params(a.proj_sc, prefix + ".proj_sc", f);
  visit_params(a.proj_tc, prefix + ".proj_tc", f);
  visit_params(a.proj_ps, prefix + ".proj_ps", f);
  visit_params(a.proj_pt, prefix + ".proj_pt", f);
}

struct AlignmentLosses {
  ad::Var marginal;     // mar(H_SM, H_TM) + mar(H_SC, H_TC)
  ad::Var conditional;  // cond(P_S, P_T)
};

inline AlignmentLosses alignment_losses(ad::Tape& tape, const TwinForward& sdt,
                                        const TwinForward& tdt, AlignmentParams& params) {
  ad::Var mar_m = marginal_loss(tape, project(tape, sdt.dtm.hidden_seq, params.proj_sm),
                                project(tape, tdt.dtm.hidden_seq, params.proj_tm));
  ad::Var mar_c = marginal_loss(tape, project(tape, sdt.dtc.hidden_seq, params.proj_sc),
                                project(tape, tdt.dtc.hidden_seq, params.proj_tc));
  ad::Var cond = conditional_loss(tape, project(tape, sdt.dtm.probs, params.proj_ps),
                                  project(tape, tdt.dtm.probs, params.proj_pt));
  return AlignmentLosses{tape.add(mar_m, mar_c), cond};
}

}  // namespace ppt

#endif  // PPT_TRANSFER_HPP_
