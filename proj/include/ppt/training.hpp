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

#ifndef PPT_TRAINING_HPP_
#define PPT_TRAINING_HPP_

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ppt/datagen.hpp"
#include "ppt/errors.hpp"
#include "ppt/optim.hpp"
#include "ppt/transfer.hpp"
#include "ppt/twin.hpp"
#include "ppt/uq.hpp"
#include "ppt/vclock.hpp"

namespace ppt {

struct TrainConfig {
  double alpha = 1.0;  // DTM auxiliary-loss weight
  double beta = 1.0;   // prompt-loss weight
  double delta = 1.0;  // Huber transition point
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int patience = 5;
  int max_epochs = 200;
  double min_delta = 1e-6;
  bool freeze_source = false;
  bool use_tl = true;
  bool use_uq = true;
  bool use_pt = true;
  bool prompt_loss_huber = false;  // sensitivity switch for the prompt loss form

  void validate() const {
    if (delta <= 0.0) throw ConfigError("train delta must be > 0");
    if (patience < 1) throw ConfigError("train patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("train max_epochs must be >= 1");
  }
};

// 0.5 r^2 for |r| <= delta, else delta |r| - 0.5 delta^2.
inline double huber(double y, double y_hat, double delta = 1.0) {
  if (delta <= 0.0) throw ArgumentError("huber: delta must be > 0");
  const double r = y - y_hat;
  const double a = std::fabs(r);
  if (a <= delta) return 0.5 * r * r;
  return delta * a - 0.5 * delta * delta;
}

// (tau - tau_plus)^2 - (tau - tau_minus)^2; sign-free by design.
inline double prompt_loss(double tau, double tau_plus, double tau_minus) {
  const double p = tau - tau_plus;
  const double m = tau - tau_minus;
  return p * p - m * m;
}

inline ad::Var huber_var(ad::Tape& tape, double y, ad::Var tau_hat, double delta) {
  if (delta <= 0.0) throw ArgumentError("huber: delta must be > 0");
  const double r = y - tape.value(tau_hat)(0, 0);
  ad::Var diff = tape.add_scalar(tape.scale(tau_hat, -1.0), y);
  if (std::fabs(r) <= delta) return tape.scale(tape.square(diff), 0.5);
  const double sign = r >= 0.0 ? 1.0 : -1.0;
  return tape.add_scalar(tape.scale(diff, sign * delta), -0.5 * delta * delta);
}

enum class Polarity { kPositive, kNegative };

// Cloze template over a history window: the TTE channel is masked at the
// current slot i and the previous slot i-1.
struct PromptTemplate {
  Mat values;
  std::vector<long long> positions;
};

// A filled prompt: slot i-1 carries either the true TTE (positive) or the
// source DTC's prediction (negative); slot i stays masked.
struct Prompt {
  Mat values;
  std::vector<long long> positions;
  double filled_value = 0.0;
  Polarity polarity = Polarity::kPositive;
};

inline PromptTemplate make_prompt(const Window& w, int feature_width) {
  const int omega = static_cast<int>(w.samples.size());
  if (omega < 2) throw ArgumentError("make_prompt: window length must be >= 2");
  ModelInput in = build_model_input(w, feature_width);  // masks slot i
  // Mask slot i-1 as well.
  in.values(omega - 2, feature_width) = 0.0;
  in.values(omega - 2, feature_width + 1) = 1.0;
  return PromptTemplate{std::move(in.values), std::move(in.positions)};
}

inline Prompt fill_prompt(const PromptTemplate& tmpl, double value, Polarity polarity) {
  const int omega = tmpl.values.rows();
  const int fw = tmpl.values.cols() - 2;
  if (tmpl.values(omega - 2, fw + 1) != 1.0) {
    throw ArgumentError("fill_prompt: slot i-1 is not masked");
  }
  Prompt p;
  p.values = tmpl.values;
  p.positions = tmpl.positions;
  p.values(omega - 2, fw) = value;
  p.values(omega - 2, fw + 1) = 0.0;
  p.filled_value = value;
  p.polarity = polarity;
  return p;
}

inline Prompt fill_prompt(const Prompt&, double, Polarity) {
  throw ArgumentError("fill_prompt: prompt already filled");
}

struct EpochRecord {
  double huber_source = 0.0;
  double huber_target = 0.0;
  double mar = 0.0;
  double cond = 0.0;
  double prompt = 0.0;  // beta-weighted contribution
  double aux = 0.0;     // alpha-weighted contribution
  double total = 0.0;
  double epoch_time_s = 0.0;

  double huber() const { return huber_source + huber_target; }
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  double convergence_time_s = 0.0;
  int stopped_epoch = 0;
};

inline double convergence_time(const TrainRecord& record) {
  if (record.epochs.empty()) throw ArgumentError("convergence_time: training never started");
  return record.convergence_time_s;
}

inline void save_train_record_csv(const TrainRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,huber,mar,cond,prompt,aux,total,epoch_time_s\n";
  for (size_t e = 0; e < record.epochs.size(); ++e) {
    const EpochRecord& r = record.epochs[e];
    out << (e + 1) << ',' << format9(r.huber()) << ',' << format9(r.mar) << ','
        << format9(r.cond) << ',' << format9(r.prompt) << ',' << format9(r.aux) << ','
        << format9(r.total) << ',' << format9(r.epoch_time_s) << '\n';
  }
}

// Stops after `patience` consecutive epochs without improvement > min_delta
// over the running best.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  bool update(double loss) {
    if (loss < best_ - min_delta_) {
      best_ = loss;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return stale_ >= patience_;
  }

  double best() const { return best_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

// UQ selection for both domains of a pair, plus the derived training inputs.
struct SelectionContext {
  std::vector<int> source_idx, target_idx;
  ModelInput source_input, target_input;
  double source_tte = 0.0, target_tte = 0.0;  // Huber targets (last selected)
  std::vector<double> source_next, target_next;  // successor state, may be empty
  double uq_wall_s = 0.0;
};

namespace detail {

inline std::vector<int> first_k_indices(int k, int n) {
  if (k < 1 || k > n) throw ArgumentError("selection: K out of range");
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  return idx;
}

inline UncertaintyScores score_dataset(const Dataset& d, const ModelConfig& mcfg,
                                       const UQConfig& ucfg, uint64_t seed) {
  switch (ucfg.method) {
    case UqMethod::kCs: {
      IndicatorModel ind(mcfg, Rng::derive(seed, "indicator-init"));
      ind.train(d, ucfg.indicator_epochs, ucfg.indicator_train_cap,
                Rng::derive(seed, "indicator-train"));
      return score_cs(ind, d, ucfg.lambda);
    }
    case UqMethod::kBayesian: {
      IndicatorModel ind(mcfg, Rng::derive(seed, "indicator-init"));
      ind.train(d, ucfg.indicator_epochs, ucfg.indicator_train_cap,
                Rng::derive(seed, "indicator-train"));
      return score_bayesian(ind, d, ucfg.n_bayes, ucfg.dropout_p,
                            Rng::derive(seed, "bayes-passes"));
    }
    default: {
      const IndicatorTrainer trainer = [&](const Dataset& subset, int member) {
        IndicatorModel m(mcfg, Rng::derive(seed, "ensemble-init-" + std::to_string(member)));
        m.train(subset, ucfg.indicator_epochs, ucfg.indicator_train_cap,
                Rng::derive(seed, "ensemble-train-" + std::to_string(member)));
        return m;
      };
      return score_ensemble(d, ucfg.n_ensemble, trainer);
    }
  }
}

inline std::vector<double> successor_state(const Dataset& d, int last_idx, int state_dim) {
  const int next = last_idx + 1;
  if (next >= static_cast<int>(d.samples.size())) return {};
  std::vector<double> s(state_dim);
  for (int j = 0; j < state_dim; ++j) s[j] = d.samples[next].features[j];
  return s;
}

}  // namespace detail

inline SelectionContext make_selection(const EvolutionPair& pair, const ModelConfig& mcfg,
                                       const UQConfig& ucfg, bool use_uq, bool need_source,
                                       uint64_t seed) {
  SelectionContext ctx;
  const int k_src = std::min<int>(ucfg.K, static_cast<int>(pair.source.size()));
  const int k_tgt = std::min<int>(ucfg.K, static_cast<int>(pair.target.size()));

  if (need_source) {
    if (use_uq) {
      const UncertaintyScores s =
          detail::score_dataset(pair.source, mcfg, ucfg, Rng::derive(seed, "uq/source"));
      ctx.source_idx = select_top_k(s, k_src);
      ctx.uq_wall_s += s.wall_time_s;
    } else {
      ctx.source_idx = detail::first_k_indices(k_src, static_cast<int>(pair.source.size()));
    }
    ctx.source_input = build_selection_input(pair.source, ctx.source_idx);
    ctx.source_tte = pair.source.samples[ctx.source_idx.back()].tte;
    ctx.source_next = detail::successor_state(pair.source, ctx.source_idx.back(), mcfg.state_dim);
  }

  if (use_uq) {
    const UncertaintyScores s =
        detail::score_dataset(pair.target, mcfg, ucfg, Rng::derive(seed, "uq/target"));
    ctx.target_idx = select_top_k(s, k_tgt);
    ctx.uq_wall_s += s.wall_time_s;
  } else {
    ctx.target_idx = detail::first_k_indices(k_tgt, static_cast<int>(pair.target.size()));
  }
  ctx.target_input = build_selection_input(pair.target, ctx.target_idx);
  ctx.target_tte = pair.target.samples[ctx.target_idx.back()].tte;
  ctx.target_next = detail::successor_state(pair.target, ctx.target_idx.back(), mcfg.state_dim);
  return ctx;
}

struct PretrainResult {
  TwinPair twins;
  AlignmentParams alignment;
  double time_pretrain_s = 0.0;
  std::vector<TrainRecord> pair_records;
  double uq_wall_s = 0.0;
};

// Algorithm-1 pretraining over source/target dataset pairs: per pair, UQ
// selection, contextualized forwards of both twins, and gradient descent on
//   L = huber_S + huber_T + L_mar + L_cond + alpha * L_aux
// until early stopping. The pretraining time aggregates the per-pair
// convergence times.
inline PretrainResult pretrain(const std::vector<EvolutionPair>& pairs, const ModelConfig& mcfg,
                               const UQConfig& ucfg, const TrainConfig& tcfg, uint64_t seed) {
  if (pairs.empty()) throw ArgumentError("pretrain: no pairs");
  mcfg.validate();
  ucfg.validate();
  tcfg.validate();

  // State bounds are taken from the first pair's source split and frozen.
  const StateBounds bounds = StateBounds::from_dataset(pairs[0].source, mcfg.state_dim);
  PretrainResult res;
  res.twins = TwinPair::init(mcfg, bounds, seed);
  res.alignment = AlignmentParams::init(mcfg, Rng::derive(seed, "pretrain-projections"));
  Adam opt(tcfg.learning_rate, tcfg.clip_norm);

  for (size_t p = 0; p < pairs.size(); ++p) {
    const EvolutionPair& pair = pairs[p];
    const SelectionContext sel = make_selection(
        pair, mcfg, ucfg, tcfg.use_uq, /*need_source=*/true,
        Rng::derive(seed, "pretrain-pair-" + std::to_string(p)));
    res.uq_wall_s += sel.uq_wall_s;

    TrainRecord record;
    EarlyStopper stopper(tcfg.patience, tcfg.min_delta);
    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
      ad::Tape tape;
      TwinForward sdt = twin_forward(tape, res.twins.source, mcfg, sel.source_input, bounds);
      TwinForward tdt = twin_forward(tape, res.twins.target, mcfg, sel.target_input, bounds);

      ad::Var huber_s = huber_var(tape, sel.source_tte, sdt.dtc.tau_hat, tcfg.delta);
      ad::Var huber_t = huber_var(tape, sel.target_tte, tdt.dtc.tau_hat, tcfg.delta);
      ad::Var l_huber = tape.add(huber_s, huber_t);
      AlignmentLosses align = alignment_losses(tape, sdt, tdt, res.alignment);

      ad::Var total = tape.add(l_huber, tape.add(align.marginal, align.conditional));
      double aux_value = 0.0;
      if (tcfg.alpha != 0.0) {
        ad::Var aux = tape.input(Mat(1, 1));
        bool have_aux = false;
        if (!sel.source_next.empty()) {
          ad::Var a = dtm_aux_loss(tape, sdt.dtm.probs, sel.source_next, bounds, mcfg.bins);
          aux = have_aux ? tape.add(aux, a) : a;
          have_aux = true;
        }
        if (!sel.target_next.empty()) {
          ad::Var a = dtm_aux_loss(tape, tdt.dtm.probs, sel.target_next, bounds, mcfg.bins);
          aux = have_aux ? tape.add(aux, a) : a;
          have_aux = true;
        }
        if (have_aux) {
          ad::Var weighted = tape.scale(aux, tcfg.alpha);
          aux_value = tape.value(weighted)(0, 0);
          total = tape.add(total, weighted);
        }
      }

      EpochRecord er;
      er.huber_source = tape.value(huber_s)(0, 0);
      er.huber_target = tape.value(huber_t)(0, 0);
      er.mar = tape.value(align.marginal)(0, 0);
      er.cond = tape.value(align.conditional)(0, 0);
      er.aux = aux_value;
      er.total = tape.value(total)(0, 0);
      if (!std::isfinite(er.total)) {
        throw TrainingError("pretraining diverged on pair '" + pair.label + "' at epoch " +
                            std::to_string(epoch + 1));
      }

      tape.backward(total);
      opt.step(tape);

      // First epoch carries the selection cost so per-epoch durations still
      // sum to the convergence time exactly.
      er.epoch_time_s = work_to_seconds(tape.work());
      if (epoch == 0) er.epoch_time_s += sel.uq_wall_s;
      record.epochs.push_back(er);
      record.convergence_time_s += er.epoch_time_s;
      record.stopped_epoch = epoch + 1;
      if (stopper.update(er.total)) break;
    }
    res.time_pretrain_s += record.convergence_time_s;
    res.pair_records.push_back(std::move(record));
  }
  return res;
}

struct TuneResult {
  TwinPair twins;
  double time_s = 0.0;
  TrainRecord record;
  double uq_wall_s = 0.0;
};

namespace detail {

inline std::unordered_set<Mat*> collect_params(TwinState& twin) {
  std::unordered_set<Mat*> set;
  visit_params(twin, "", [&set](Mat& m, const std::string&) { set.insert(&m); });
  return set;
}

// Shared loop behind prompt tuning and the fine-tuning baseline. Streams the
// target data; per step the combined objective is
//   L = huber_S + huber_T + L_mar + L_cond + beta * L_prompt
// with the source/alignment terms dropped when transfer learning is off and
// the prompt term dropped when beta is 0.
inline TuneResult tune_impl(const TwinPair& pretrained, const EvolutionPair& pair,
                            const ModelConfig& mcfg, const UQConfig& ucfg,
                            const TrainConfig& tcfg, double beta, bool build_prompts,
                            uint64_t seed) {
  mcfg.validate();
  ucfg.validate();
  tcfg.validate();
  if (pair.target.samples.size() < 2) {
    throw ArgumentError("tune: target stream needs at least 2 samples");
  }

  TuneResult res;
  res.twins = pretrained;
  const StateBounds& bounds = res.twins.bounds;

  const SelectionContext sel = make_selection(pair, mcfg, ucfg, tcfg.use_uq, tcfg.use_tl,
                                              Rng::derive(seed, "tune-selection"));
  res.uq_wall_s = sel.uq_wall_s;
  AlignmentParams alignment = AlignmentParams::init(mcfg, Rng::derive(seed, "tune-projections"));
  Adam opt(tcfg.learning_rate, tcfg.clip_norm);

  std::unordered_set<Mat*> frozen;
  if (tcfg.freeze_source) frozen = collect_params(res.twins.source);

  const int n_target = static_cast<int>(pair.target.samples.size());
  TrainRecord record;
  EarlyStopper stopper(tcfg.patience, tcfg.min_delta);
  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    EpochRecord er;
    uint64_t epoch_work = 0;
    int steps = 0;
    for (int i = 1; i < n_target; ++i, ++steps) {
      ad::Tape tape;

      ad::Var l_total;
      TwinForward tdt = twin_forward(tape, res.twins.target, mcfg, sel.target_input, bounds);
      ad::Var huber_t = huber_var(tape, sel.target_tte, tdt.dtc.tau_hat, tcfg.delta);
      er.huber_target += tape.value(huber_t)(0, 0);
      if (tcfg.use_tl) {
        TwinForward sdt = twin_forward(tape, res.twins.source, mcfg, sel.source_input, bounds);
        ad::Var huber_s = huber_var(tape, sel.source_tte, sdt.dtc.tau_hat, tcfg.delta);
        AlignmentLosses align = alignment_losses(tape, sdt, tdt, alignment);
        l_total = tape.add(tape.add(huber_s, huber_t),
                           tape.add(align.marginal, align.conditional));
        er.huber_source += tape.value(huber_s)(0, 0);
        er.mar += tape.value(align.marginal)(0, 0);
        er.cond += tape.value(align.conditional)(0, 0);
      } else {
        l_total = huber_t;
      }

      if (build_prompts && beta != 0.0) {
        const double tau_true = pair.target.samples[i].tte;
        const double tau_prev_true = pair.target.samples[i - 1].tte;
        const PromptTemplate tmpl = make_prompt(window(pair.target, i, mcfg.window), pair.target.F);

        // Negative fill: the source DTC's answer for the shifted window
        // ending at i-1, detached from the gradient path.
        uint64_t sdtc_work = 0;
        const ModelInput prev_win =
            build_model_input(window(pair.target, i - 1, mcfg.window), pair.target.F);
        const double tau_prev_pred =
            predict_tte(res.twins.source, mcfg, prev_win, bounds, &sdtc_work);
        epoch_work += sdtc_work;

        const Prompt rho_plus = fill_prompt(tmpl, tau_prev_true, Polarity::kPositive);
        const Prompt rho_minus = fill_prompt(tmpl, tau_prev_pred, Polarity::kNegative);

        const ModelInput in_plus{rho_plus.values, rho_plus.positions};
        const ModelInput in_minus{rho_minus.values, rho_minus.positions};
        TwinForward f_plus = twin_forward(tape, res.twins.target, mcfg, in_plus, bounds);
        TwinForward f_minus = twin_forward(tape, res.twins.target, mcfg, in_minus, bounds);

        ad::Var l_prompt;
        if (tcfg.prompt_loss_huber) {
          l_prompt = tape.sub(huber_var(tape, tau_true, f_plus.dtc.tau_hat, tcfg.delta),
                              huber_var(tape, tau_true, f_minus.dtc.tau_hat, tcfg.delta));
        } else {
          ad::Var dp = tape.add_scalar(tape.scale(f_plus.dtc.tau_hat, -1.0), tau_true);
          ad::Var dm = tape.add_scalar(tape.scale(f_minus.dtc.tau_hat, -1.0), tau_true);
          l_prompt = tape.sub(tape.square(dp), tape.square(dm));
        }
        ad::Var weighted = tape.scale(l_prompt, beta);
        er.prompt += tape.value(weighted)(0, 0);
        l_total = tape.add(l_total, weighted);
      }

      const double step_total = tape.value(l_total)(0, 0);
      if (!std::isfinite(step_total)) {
        throw TrainingError("tuning diverged on pair '" + pair.label + "' at epoch " +
                            std::to_string(epoch + 1) + ", step " + std::to_string(i));
      }
      er.total += step_total;

      tape.backward(l_total);
      opt.step(tape, frozen.empty() ? nullptr : &frozen);
      epoch_work += tape.work();
    }

    const double inv = 1.0 / steps;
    er.huber_source *= inv;
    er.huber_target *= inv;
    er.mar *= inv;
    er.cond *= inv;
    er.prompt *= inv;
    er.total *= inv;
    er.epoch_time_s = work_to_seconds(epoch_work);
    if (epoch == 0) er.epoch_time_s += sel.uq_wall_s;
    record.epochs.push_back(er);
    record.convergence_time_s += er.epoch_time_s;
    record.stopped_epoch = epoch + 1;
    if (stopper.update(er.total)) break;
  }
  res.record = std::move(record);
  res.time_s = res.record.convergence_time_s;
  return res;
}

}  // namespace detail

// Algorithm-2 prompt tuning on the real evolution pair.
inline TuneResult prompt_tune(const TwinPair& pretrained, const EvolutionPair& pair,
                              const ModelConfig& mcfg, const UQConfig& ucfg,
                              const TrainConfig& tcfg, uint64_t seed) {
  const bool prompts = tcfg.use_pt && tcfg.beta != 0.0;
  return detail::tune_impl(pretrained, pair, mcfg, ucfg, tcfg,
                           prompts ? tcfg.beta : 0.0, prompts, seed);
}

// RQ4 baseline: identical loop with beta pinned to 0 and no prompts built.
inline TuneResult fine_tune(const TwinPair& pretrained, const EvolutionPair& pair,
                            const ModelConfig& mcfg, const UQConfig& ucfg,
                            const TrainConfig& tcfg, uint64_t seed) {
  return detail::tune_impl(pretrained, pair, mcfg, ucfg, tcfg, 0.0, false, seed);
}

}  // namespace ppt

#endif  // PPT_TRAINING_HPP_
