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

#ifndef PPT_UQ_HPP_
#define PPT_UQ_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ppt/attention.hpp"
#include "ppt/datagen.hpp"
#include "ppt/errors.hpp"
#include "ppt/graph.hpp"
#include "ppt/optim.hpp"
#include "ppt/twin.hpp"
#include "ppt/vclock.hpp"

namespace ppt {

enum class UqMethod { kCs, kBayesian, kEnsemble };

inline const char* uq_method_name(UqMethod m) {
  switch (m) {
    case UqMethod::kCs: return "cs";
    case UqMethod::kBayesian: return "bayesian";
    default: return "ensemble";
  }
}

struct UQConfig {
  UqMethod method = UqMethod::kCs;
  double lambda = 0.9;      // CS weight between calibration and sharpness
  int n_bayes = 10;         // dropout passes N_B
  double dropout_p = 0.1;
  int n_ensemble = 5;       // ensemble members N^E
  int K = 32;               // selection count
  int indicator_epochs = 3;
  int indicator_train_cap = 512;  // per-epoch training-step budget

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("uq lambda must lie in [0,1]");
    if (n_bayes < 2) throw ConfigError("uq n_bayes must be >= 2");
    if (n_ensemble < 2) throw ConfigError("uq n_ensemble must be >= 2");
    if (dropout_p <= 0.0 || dropout_p >= 1.0) throw ConfigError("uq dropout_p must lie in (0,1)");
    if (K < 1) throw ConfigError("uq K must be >= 1");
  }
};

struct UncertaintyScores {
  std::vector<double> xi;
  UqMethod method = UqMethod::kCs;
  double wall_time_s = 0.0;  // tau_UQ
};

// Predictor with the DTC's layer structure (transformer -> GRU -> linear
// head) and a two-output head (mu, log sigma) trained with Gaussian negative
// log-likelihood, so CS scoring has a per-sample predictive distribution.
class IndicatorModel {
 public:
  IndicatorModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    w_embed_ = xavier(2 * cfg.input_width, cfg.attention.d_model, rng);
    b_embed_ = Mat(1, cfg.attention.d_model);
    stack_.reserve(cfg.attention.n_layers);
    for (int l = 0; l < cfg.attention.n_layers; ++l) {
      stack_.push_back(MhsaParams::init(cfg.attention, rng));
    }
    gru_ = GruParams::init(cfg.attention.d_model, cfg.gru_hidden, rng);
    w_head_ = xavier(cfg.gru_hidden, 2, rng);
    b_head_ = Mat(1, 2);
  }

  // Gaussian NLL on sliding windows; large datasets are strided down to the
  // per-epoch step budget.
  void train(const Dataset& d, int epochs, int step_cap, uint64_t seed) {
    if (d.samples.empty()) throw ArgumentError("indicator train: empty dataset");
    Adam opt(cfg_.learning_rate, 5.0);
    const int n = static_cast<int>(d.samples.size());
    const int stride = std::max(1, n / std::max(1, step_cap));
    Rng offsets(Rng::derive(seed, "indicator/offsets"));
    for (int e = 0; e < epochs; ++e) {
      const int off = static_cast<int>(offsets.below(static_cast<uint64_t>(stride)));
      for (int i = off; i < n; i += stride) {
        ad::Tape tape;
        ad::Var head = forward(tape, d, i, nullptr);
        ad::Var mu = tape.slice_cols(head, 0, 1);
        ad::Var log_sigma = tape.slice_cols(head, 1, 2);
        // 0.5 * (y - mu)^2 * exp(-2s) + s
        ad::Var resid = tape.add_scalar(tape.scale(mu, -1.0), d.samples[i].tte);
        ad::Var precision = tape.exp_(tape.scale(log_sigma, -2.0));
        ad::Var nll =
            tape.add(tape.scale(tape.mul(tape.square(resid), precision), 0.5), log_sigma);
        tape.backward(nll);
        opt.step(tape);
        work_ += tape.work();
        trained_ = true;
      }
    }
  }

  struct MuSigma {
    double mu;
    double sigma;
  };

  MuSigma predict(const Dataset& d, int i) {
    ad::Tape tape;
    ad::Var head = forward(tape, d, i, nullptr);
    work_ += tape.work();
    const Mat& h = tape.value(head);
    const double s = std::clamp(h(0, 1), -10.0, 10.0);
    return MuSigma{h(0, 0), std::exp(s)};
  }

  // One stochastic pass with dropout active at inference.
  double predict_stochastic(const Dataset& d, int i, double p, Rng& rng) {
    DropoutCtx ctx{p, &rng};
    ad::Tape tape;
    ad::Var head = forward(tape, d, i, &ctx);
    work_ += tape.work();
    return tape.value(head)(0, 0);
  }

  bool trained() const { return trained_; }
  uint64_t work() const { return work_; }

 private:
  ad::Var forward(ad::Tape& tape, const Dataset& d, int i, const DropoutCtx* dropout) {
    const ModelInput in = build_model_input(window(d, i, cfg_.window), d.F);
    const Mat encoded = positional_encode(in.values, &in.positions);
    ad::Var x = tape.linear(tape.input(encoded), tape.param(w_embed_), tape.param(b_embed_));
    ad::Var z = transformer_stack(tape, x, cfg_.attention, stack_, dropout);
    ad::Var h = gru_forward(tape, z, gru_);
    const int t_len = tape.value(h).rows();
    ad::Var h_last = tape.slice_rows(h, t_len - 1, t_len);
    return tape.linear(h_last, tape.param(w_head_), tape.param(b_head_));
  }

  ModelConfig cfg_;
  Mat w_embed_, b_embed_;
  std::vector<MhsaParams> stack_;
  GruParams gru_;
  Mat w_head_, b_head_;
  bool trained_ = false;
  uint64_t work_ = 0;
};

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// xi_i = lambda * c_i + (1 - lambda) * s_i with the calibration term
// c = |2 PIT - 1| (PIT under the predictive normal) and the sharpness term
// s = sigma divided by the dataset maximum, so both lie in [0, 1].
inline std::vector<double> cs_scores_from_moments(const std::vector<double>& mu,
                                                  const std::vector<double>& sigma,
                                                  const std::vector<double>& y, double lambda) {
  if (mu.empty()) throw ArgumentError("cs scores: empty input");
  if (mu.size() != sigma.size() || mu.size() != y.size()) {
    throw ArgumentError("cs scores: length mismatch");
  }
  if (lambda < 0.0 || lambda > 1.0) throw ArgumentError("cs scores: lambda must lie in [0,1]");
  for (size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] <= 0.0) {
      throw NumericalError("cs scores: non-positive sigma at sample " + std::to_string(i));
    }
  }
  const double sigma_max = *std::max_element(sigma.begin(), sigma.end());
  std::vector<double> xi(mu.size());
  for (size_t i = 0; i < mu.size(); ++i) {
    const double pit = std_normal_cdf((y[i] - mu[i]) / sigma[i]);
    const double calibration = std::fabs(2.0 * pit - 1.0);
    xi[i] = lambda * calibration + (1.0 - lambda) * (sigma[i] / sigma_max);
  }
  return xi;
}

inline UncertaintyScores score_cs(IndicatorModel& ind, const Dataset& d, double lambda) {
  if (d.samples.empty()) throw ArgumentError("score_cs: empty dataset");
  const uint64_t work_before = ind.work();
  const int n = static_cast<int>(d.samples.size());
  std::vector<double> mu(n), sigma(n), y(n);
  for (int i = 0; i < n; ++i) {
    const auto ms = ind.predict(d, i);
    mu[i] = ms.mu;
    sigma[i] = ms.sigma;
    y[i] = d.samples[i].tte;
  }
  UncertaintyScores out;
  out.method = UqMethod::kCs;
  out.xi = cs_scores_from_moments(mu, sigma, y, lambda);
  out.wall_time_s = work_to_seconds(ind.work() - work_before);
  return out;
}

inline double population_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / n);
}

// MC dropout: xi_i is the population standard deviation of N_B stochastic
// forward passes.
inline UncertaintyScores score_bayesian(IndicatorModel& ind, const Dataset& d, int n_bayes,
                                        double dropout_p, uint64_t seed) {
  if (d.samples.empty()) throw ArgumentError("score_bayesian: empty dataset");
  if (n_bayes < 2) throw ArgumentError("score_bayesian: N_B must be >= 2");
  const uint64_t work_before = ind.work();
  const int n = static_cast<int>(d.samples.size());
  std::vector<std::vector<double>> preds(n, std::vector<double>(n_bayes));
  for (int b = 0; b < n_bayes; ++b) {
    Rng rng(Rng::derive(seed, "bayes-pass-" + std::to_string(b)));
    for (int i = 0; i < n; ++i) {
      preds[i][b] = ind.predict_stochastic(d, i, dropout_p, rng);
    }
  }
  UncertaintyScores out;
  out.method = UqMethod::kBayesian;
  out.xi.resize(n);
  for (int i = 0; i < n; ++i) out.xi[i] = population_std(preds[i]);
  out.wall_time_s = work_to_seconds(ind.work() - work_before);
  return out;
}

// Contiguous balanced split: the first n % k parts get the extra sample.
inline std::vector<std::pair<int, int>> partition_ranges(int n, int k) {
  std::vector<std::pair<int, int>> ranges;
  ranges.reserve(k);
  const int base = n / k;
  const int extra = n % k;
  int start = 0;
  for (int p = 0; p < k; ++p) {
    const int len = base + (p < extra ? 1 : 0);
    ranges.emplace_back(start, start + len);
    start += len;
  }
  return ranges;
}

using IndicatorTrainer = std::function<IndicatorModel(const Dataset& subset, int member)>;

// Ensemble UQ: train one indicator per contiguous subset, score every sample
// with every member, xi_i = population standard deviation across members.
inline UncertaintyScores score_ensemble(const Dataset& d, int n_ensemble,
                                        const IndicatorTrainer& trainer) {
  if (d.samples.empty()) throw ArgumentError("score_ensemble: empty dataset");
  if (n_ensemble < 2) throw ArgumentError("score_ensemble: N_E must be >= 2");
  if (static_cast<int>(d.samples.size()) < n_ensemble) {
    throw ArgumentError("score_ensemble: dataset smaller than N_E");
  }
  const int n = static_cast<int>(d.samples.size());
  uint64_t work = 0;
  std::vector<std::vector<double>> preds(n, std::vector<double>(n_ensemble));
  const auto ranges = partition_ranges(n, n_ensemble);
  for (int m = 0; m < n_ensemble; ++m) {
    Dataset subset;
    subset.system = d.system;
    subset.F = d.F;
    subset.feature_means = d.feature_means;
    subset.feature_stds = d.feature_stds;
    subset.samples.assign(d.samples.begin() + ranges[m].first,
                          d.samples.begin() + ranges[m].second);
    IndicatorModel member = trainer(subset, m);
    for (int i = 0; i < n; ++i) preds[i][m] = member.predict(d, i).mu;
    work += member.work();
  }
  UncertaintyScores out;
  out.method = UqMethod::kEnsemble;
  out.xi.resize(n);
  for (int i = 0; i < n; ++i) out.xi[i] = population_std(preds[i]);
  out.wall_time_s = work_to_seconds(work);
  return out;
}

// Full descending ranking: by score, ties broken by smaller index.
inline std::vector<int> rank_by_score(const UncertaintyScores& s) {
  std::vector<int> idx(s.xi.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&s](int a, int b) { return s.xi[a] > s.xi[b]; });
  return idx;
}

// Indices of the K largest scores, handed onwards in temporal order so the
// attention module sees an ordered sequence.
inline std::vector<int> select_top_k(const UncertaintyScores& s, int k) {
  const int n = static_cast<int>(s.xi.size());
  if (k < 1 || k > n) {
    throw ArgumentError("select_top_k: K=" + std::to_string(k) + " out of range [1, " +
                        std::to_string(n) + "]");
  }
  std::vector<int> ranked = rank_by_score(s);
  ranked.resize(k);
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

// Score export: CSV of index,xi plus a JSON record for the comparison report.
inline void save_scores_csv(const UncertaintyScores& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "index,xi\n";
  for (size_t i = 0; i < s.xi.size(); ++i) out << i << ',' << format9(s.xi[i]) << '\n';
}

inline std::string scores_record_json(const UncertaintyScores& s, int k) {
  std::string out = "{\"method\":\"";
  out += uq_method_name(s.method);
  out += "\",\"wall_time_s\":";
  out += format9(s.wall_time_s);
  out += ",\"K\":";
  out += std::to_string(k);
  out += "}";
  return out;
}

// |top-K(a) intersect top-K(b)| / K over the two rankings' prefixes.
inline double precision_at_k(const std::vector<int>& a, const std::vector<int>& b, int k) {
  if (k < 1 || k > static_cast<int>(a.size()) || k > static_cast<int>(b.size())) {
    throw ArgumentError("precision_at_k: K out of range");
  }
  std::vector<int> ka(a.begin(), a.begin() + k);
  std::vector<int> kb(b.begin(), b.begin() + k);
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  std::vector<int> common;
  std::set_intersection(ka.begin(), ka.end(), kb.begin(), kb.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / k;
}

}  // namespace ppt

#endif  // PPT_UQ_HPP_
