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

#ifndef PPT_EVAL_HPP_
#define PPT_EVAL_HPP_

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppt/datagen.hpp"
#include "ppt/errors.hpp"
#include "ppt/stats.hpp"
#include "ppt/training.hpp"

namespace ppt {

enum class Variant { kPpt, kWoTl, kWoUq, kWoPt, kFinetune };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kPpt: return "ppt";
    case Variant::kWoTl: return "w_o_tl";
    case Variant::kWoUq: return "w_o_uq";
    case Variant::kWoPt: return "w_o_pt";
    default: return "finetune";
  }
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "ppt") return Variant::kPpt;
  if (s == "w_o_tl") return Variant::kWoTl;
  if (s == "w_o_uq") return Variant::kWoUq;
  if (s == "w_o_pt") return Variant::kWoPt;
  if (s == "finetune") return Variant::kFinetune;
  throw ConfigError("unknown variant '" + s + "'");
}

struct RunRecord {
  std::string evolution;
  Variant variant = Variant::kPpt;
  UqMethod uq_method = UqMethod::kCs;
  uint64_t seed = 0;
  double target_huber = 0.0;
  double convergence_time_s = 0.0;  // tuning-phase convergence
  double uq_wall_time_s = 0.0;
  std::string status = "ok";
  // Reported in summary.json only; not a results.csv column.
  double pretrain_time_s = 0.0;
};

// Mean Huber loss of the target twin over every held-out window.
inline double evaluate(TwinPair& twins, const Dataset& test, double delta) {
  if (test.samples.empty()) throw ArgumentError("evaluate: empty test set");
  double sum = 0.0;
  for (int i = 0; i < static_cast<int>(test.samples.size()); ++i) {
    const ModelInput in = build_model_input(window(test, i, twins.cfg.window), test.F);
    const double tau_hat = predict_tte(twins.target, twins.cfg, in, twins.bounds);
    sum += huber(test.samples[i].tte, tau_hat, delta);
  }
  return sum / static_cast<double>(test.samples.size());
}

struct EvolutionCase {
  std::string label;
  std::vector<EvolutionPair> pretrain_pairs;
  EvolutionPair tune_pair;
  Dataset test;
};

struct ExperimentPlan {
  std::vector<EvolutionCase> cases;
  std::vector<Variant> variants{Variant::kPpt, Variant::kWoTl, Variant::kWoUq, Variant::kWoPt,
                                Variant::kFinetune};
  ModelConfig model;
  UQConfig uq;
  TrainConfig train;
  int repeats = 30;
  uint64_t base_seed = 1;
  int jobs = 1;
};

struct CellComparison {
  std::string evolution;
  Variant variant = Variant::kPpt;
  StatReport report;
};

struct UqComparison {
  std::string evolution;
  // precision[k]["cs_vs_bayesian"] etc.
  std::map<int, std::map<std::string, double>> precision;
  std::map<std::string, double> wall_time_s;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<CellComparison> comparisons;
  std::vector<UqComparison> uq_comparisons;
  // Timing comparison of prompt tuning vs fine-tuning per evolution.
  std::vector<CellComparison> timing_comparisons;
  // Base-seed tuning loss curve per "evolution|variant".
  std::map<std::string, std::vector<double>> loss_curves;
};

namespace detail {

struct SingleRun {
  RunRecord record;
  std::vector<double> loss_curve;
};

inline SingleRun run_single(const EvolutionCase& c, Variant variant, const ModelConfig& mcfg,
                            const UQConfig& ucfg, const TrainConfig& base_train, uint64_t seed) {
  TrainConfig tcfg = base_train;
  tcfg.use_tl = variant != Variant::kWoTl;
  tcfg.use_uq = base_train.use_uq && variant != Variant::kWoUq;
  tcfg.use_pt = base_train.use_pt && variant != Variant::kWoPt && variant != Variant::kFinetune;

  SingleRun out;
  out.record.evolution = c.label;
  out.record.variant = variant;
  out.record.uq_method = ucfg.method;
  out.record.seed = seed;
  try {
    TwinPair twins = [&] {
      if (tcfg.use_tl) {
        PretrainResult pre = pretrain(c.pretrain_pairs, mcfg, ucfg, tcfg, seed);
        out.record.pretrain_time_s = pre.time_pretrain_s;
        out.record.uq_wall_time_s += pre.uq_wall_s;
        return std::move(pre.twins);
      }
      // No transfer learning: the target twin starts from scratch and sees
      // only target-domain data; bounds come from the tuning split.
      return TwinPair::init(mcfg, StateBounds::from_dataset(c.tune_pair.target, mcfg.state_dim),
                            seed);
    }();

    const TuneResult tuned = tcfg.use_pt
                                 ? prompt_tune(twins, c.tune_pair, mcfg, ucfg, tcfg, seed)
                                 : fine_tune(twins, c.tune_pair, mcfg, ucfg, tcfg, seed);
    out.record.convergence_time_s = tuned.time_s;
    out.record.uq_wall_time_s += tuned.uq_wall_s;

    TwinPair result = tuned.twins;
    out.record.target_huber = evaluate(result, c.test, tcfg.delta);
    for (const EpochRecord& e : tuned.record.epochs) out.loss_curve.push_back(e.total);
  } catch (const std::exception& e) {
    out.record.status = std::string("failed: ") + e.what();
  }
  return out;
}

inline IndicatorModel shared_indicator(const Dataset& d, const ModelConfig& mcfg,
                                       const UQConfig& ucfg, uint64_t seed) {
  IndicatorModel ind(mcfg, Rng::derive(seed, "uqcmp-init"));
  ind.train(d, ucfg.indicator_epochs, ucfg.indicator_train_cap, Rng::derive(seed, "uqcmp-train"));
  return ind;
}

}  // namespace detail

// Pairwise Precision@K and wall times of the three UQ methods on a shared
// indicator and dataset.
inline UqComparison compare_uq_methods(const std::string& evolution, const Dataset& d,
                                       const ModelConfig& mcfg, const UQConfig& ucfg,
                                       uint64_t seed) {
  UqComparison cmp;
  cmp.evolution = evolution;
  IndicatorModel ind = detail::shared_indicator(d, mcfg, ucfg, seed);

  const UncertaintyScores cs = score_cs(ind, d, ucfg.lambda);
  const UncertaintyScores bayes =
      score_bayesian(ind, d, ucfg.n_bayes, ucfg.dropout_p, Rng::derive(seed, "uqcmp-bayes"));
  const IndicatorTrainer trainer = [&](const Dataset& subset, int member) {
    IndicatorModel m(mcfg, Rng::derive(seed, "uqcmp-ens-init-" + std::to_string(member)));
    m.train(subset, ucfg.indicator_epochs, ucfg.indicator_train_cap,
            Rng::derive(seed, "uqcmp-ens-train-" + std::to_string(member)));
    return m;
  };
  const UncertaintyScores ens = score_ensemble(d, ucfg.n_ensemble, trainer);

  cmp.wall_time_s["cs"] = cs.wall_time_s;
  cmp.wall_time_s["bayesian"] = bayes.wall_time_s;
  cmp.wall_time_s["ensemble"] = ens.wall_time_s;

  const std::vector<int> r_cs = rank_by_score(cs);
  const std::vector<int> r_b = rank_by_score(bayes);
  const std::vector<int> r_e = rank_by_score(ens);
  for (int k : {1, 3, 10}) {
    if (k > static_cast<int>(d.samples.size())) continue;
    cmp.precision[k]["cs_vs_bayesian"] = precision_at_k(r_cs, r_b, k);
    cmp.precision[k]["cs_vs_ensemble"] = precision_at_k(r_cs, r_e, k);
    cmp.precision[k]["bayesian_vs_ensemble"] = precision_at_k(r_b, r_e, k);
  }
  return cmp;
}

// Executes every (evolution, variant) cell `repeats` times with seeds
// base_seed..base_seed+repeats-1 and derives the variant-vs-PPT statistics.
inline ExperimentResult run_experiment(const ExperimentPlan& plan) {
  if (plan.cases.empty()) throw ArgumentError("run_experiment: no evolution cases");
  if (plan.repeats < 1) throw ArgumentError("run_experiment: repeats must be >= 1");

  struct Cell {
    int case_idx;
    Variant variant;
    std::vector<detail::SingleRun> runs;
  };
  std::vector<Cell> cells;
  for (int ci = 0; ci < static_cast<int>(plan.cases.size()); ++ci) {
    for (Variant v : plan.variants) cells.push_back(Cell{ci, v, {}});
  }

  const auto run_cell = [&plan](Cell& cell) {
    const EvolutionCase& c = plan.cases[cell.case_idx];
    for (int r = 0; r < plan.repeats; ++r) {
      const uint64_t seed = plan.base_seed + static_cast<uint64_t>(r);
      cell.runs.push_back(
          detail::run_single(c, cell.variant, plan.model, plan.uq, plan.train, seed));
      if (cell.runs.back().record.status != "ok") break;  // abort the cell
    }
  };

  if (plan.jobs <= 1) {
    for (Cell& cell : cells) run_cell(cell);
  } else {
    std::vector<std::thread> workers;
    std::atomic<size_t> next{0};
    const int jobs = std::min<int>(plan.jobs, static_cast<int>(cells.size()));
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&cells, &next, &run_cell] {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(cells[i]);
        }
      });
    }
    for (std::thread& t : workers) t.join();
  }

  ExperimentResult result;
  for (const Cell& cell : cells) {
    for (const detail::SingleRun& run : cell.runs) result.records.push_back(run.record);
    if (!cell.runs.empty() && cell.runs.front().record.seed == plan.base_seed) {
      result.loss_curves[plan.cases[cell.case_idx].label + "|" + variant_name(cell.variant)] =
          cell.runs.front().loss_curve;
    }
  }

  // Variant-vs-PPT statistics per evolution over the per-run Huber losses.
  const auto hubers_of = [&](int case_idx, Variant v) {
    std::vector<double> out;
    for (const Cell& cell : cells) {
      if (cell.case_idx != case_idx || cell.variant != v) continue;
      for (const detail::SingleRun& run : cell.runs) {
        if (run.record.status == "ok") out.push_back(run.record.target_huber);
      }
    }
    return out;
  };
  const auto times_of = [&](int case_idx, Variant v) {
    std::vector<double> out;
    for (const Cell& cell : cells) {
      if (cell.case_idx != case_idx || cell.variant != v) continue;
      for (const detail::SingleRun& run : cell.runs) {
        if (run.record.status == "ok") out.push_back(run.record.convergence_time_s);
      }
    }
    return out;
  };

  const bool have_ppt =
      std::find(plan.variants.begin(), plan.variants.end(), Variant::kPpt) != plan.variants.end();
  for (int ci = 0; ci < static_cast<int>(plan.cases.size()); ++ci) {
    if (!have_ppt) break;
    const std::vector<double> ppt = hubers_of(ci, Variant::kPpt);
    if (ppt.empty()) continue;
    for (Variant v : plan.variants) {
      if (v == Variant::kPpt) continue;
      const std::vector<double> other = hubers_of(ci, v);
      if (other.empty()) continue;
      result.comparisons.push_back(
          CellComparison{plan.cases[ci].label, v, make_stat_report(other, ppt)});
    }
    // Prompt tuning vs fine-tuning wall-time comparison.
    const std::vector<double> pt_times = times_of(ci, Variant::kPpt);
    const std::vector<double> ft_times = times_of(ci, Variant::kFinetune);
    if (!pt_times.empty() && !ft_times.empty()) {
      result.timing_comparisons.push_back(CellComparison{
          plan.cases[ci].label, Variant::kFinetune, make_stat_report(pt_times, ft_times)});
    }
  }

  for (const EvolutionCase& c : plan.cases) {
    result.uq_comparisons.push_back(
        compare_uq_methods(c.label, c.tune_pair.target, plan.model, plan.uq, plan.base_seed));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report emission

namespace detail {

inline std::string sanitize_filename(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    out += (std::isalnum(c) != 0) ? static_cast<char>(c) : '_';
  }
  return out;
}

inline std::string curve_svg(const std::vector<double>& ys, const std::string& title) {
  const int width = 480, height = 320, pad = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  svg << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">" << title << "</text>\n";
  svg << "<line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad
      << "\" y2=\"" << height - pad << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
      << height - pad << "\" stroke=\"black\"/>\n";
  if (!ys.empty()) {
    double lo = ys[0], hi = ys[0];
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    svg << "<polyline fill=\"none\" stroke=\"blue\" points=\"";
    for (size_t i = 0; i < ys.size(); ++i) {
      const double x =
          pad + (width - 2.0 * pad) * (ys.size() == 1 ? 0.5 : static_cast<double>(i) /
                                                                  (ys.size() - 1));
      const double y = height - pad - (height - 2.0 * pad) * (ys[i] - lo) / (hi - lo);
      svg << format9(x) << ',' << format9(y) << ' ';
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace detail

inline void write_results_csv(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "evolution,variant,uq_method,seed,target_huber,convergence_time_s,uq_wall_time_s,"
         "status\n";
  for (const RunRecord& r : records) {
    out << r.evolution << ',' << variant_name(r.variant) << ',' << uq_method_name(r.uq_method)
        << ',' << r.seed << ',' << format9(r.target_huber) << ','
        << format9(r.convergence_time_s) << ',' << format9(r.uq_wall_time_s) << ',' << r.status
        << '\n';
  }
}

inline std::vector<RunRecord> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty results file");
  std::vector<RunRecord> records;
  std::string line;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8) throw ParseError("results row " + std::to_string(row) + " malformed");
    RunRecord r;
    r.evolution = cells[0];
    r.variant = variant_from_name(cells[1]);
    r.uq_method = cells[2] == "cs"         ? UqMethod::kCs
                  : cells[2] == "bayesian" ? UqMethod::kBayesian
                                           : UqMethod::kEnsemble;
    r.seed = std::stoull(cells[3]);
    r.target_huber = std::strtod(cells[4].c_str(), nullptr);
    r.convergence_time_s = std::strtod(cells[5].c_str(), nullptr);
    r.uq_wall_time_s = std::strtod(cells[6].c_str(), nullptr);
    // A failure reason may itself contain commas; rejoin.
    std::string status = cells[7];
    for (size_t i = 8; i < cells.size(); ++i) status += "," + cells[i];
    r.status = status;
    records.push_back(std::move(r));
  }
  return records;
}

inline nlohmann::ordered_json summary_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;

  // Per-cell aggregates.
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  std::vector<std::pair<std::string, std::string>> seen;
  for (const RunRecord& r : result.records) {
    const std::pair<std::string, std::string> key{r.evolution, variant_name(r.variant)};
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    std::vector<double> hubers, times, pretrain_times, uq_times;
    int failed = 0;
    for (const RunRecord& q : result.records) {
      if (q.evolution != r.evolution || q.variant != r.variant) continue;
      if (q.status == "ok") {
        hubers.push_back(q.target_huber);
        times.push_back(q.convergence_time_s);
        pretrain_times.push_back(q.pretrain_time_s);
        uq_times.push_back(q.uq_wall_time_s);
      } else {
        ++failed;
      }
    }
    nlohmann::ordered_json cell;
    cell["evolution"] = r.evolution;
    cell["variant"] = variant_name(r.variant);
    cell["runs_ok"] = hubers.size();
    cell["runs_failed"] = failed;
    if (!hubers.empty()) {
      cell["median_target_huber"] = median(hubers);
      cell["median_convergence_time_s"] = median(times);
      cell["median_pretrain_time_s"] = median(pretrain_times);
      cell["median_uq_wall_time_s"] = median(uq_times);
    }
    const auto cmp = std::find_if(
        result.comparisons.begin(), result.comparisons.end(), [&](const CellComparison& c) {
          return c.evolution == r.evolution && c.variant == r.variant;
        });
    if (cmp != result.comparisons.end()) {
      cell["vs_ppt"] = {{"u_statistic", cmp->report.u_statistic},
                        {"p_value", cmp->report.p_value},
                        {"a12", cmp->report.a12},
                        {"significant", cmp->report.significant},
                        {"effect", effect_size_name(cmp->report.effect_label)}};
    }
    cells.push_back(std::move(cell));
  }
  j["cells"] = std::move(cells);

  nlohmann::ordered_json timing = nlohmann::ordered_json::array();
  for (const CellComparison& c : result.timing_comparisons) {
    timing.push_back({{"evolution", c.evolution},
                      {"prompt_tune_vs_finetune_p", c.report.p_value},
                      {"a12", c.report.a12},
                      {"significant", c.report.significant},
                      {"effect", effect_size_name(c.report.effect_label)}});
  }
  j["timing"] = std::move(timing);

  nlohmann::ordered_json uq = nlohmann::ordered_json::array();
  for (const UqComparison& c : result.uq_comparisons) {
    nlohmann::ordered_json entry;
    entry["evolution"] = c.evolution;
    nlohmann::ordered_json precision;
    for (const auto& [k, pairs] : c.precision) {
      nlohmann::ordered_json row;
      for (const auto& [name, v] : pairs) row[name] = v;
      precision["precision_at_" + std::to_string(k)] = std::move(row);
    }
    entry["precision"] = std::move(precision);
    nlohmann::ordered_json walls;
    for (const auto& [name, v] : c.wall_time_s) walls[name] = v;
    entry["uq_wall_time_s"] = std::move(walls);
    uq.push_back(std::move(entry));
  }
  j["uq"] = std::move(uq);
  j["record_count"] = result.records.size();
  return j;
}

// Writes results.csv, summary.json, and one loss-curve SVG per cell.
inline void emit_report(const ExperimentResult& result, const std::string& out_dir) {
  if (result.records.empty()) throw ArgumentError("emit_report: no records");
  std::filesystem::create_directories(out_dir);
  write_results_csv(result.records, out_dir + "/results.csv");

  std::ofstream sj(out_dir + "/summary.json");
  if (!sj) throw IoError("cannot open summary.json for writing");
  sj << summary_json(result).dump(2) << '\n';

  for (const auto& [key, curve] : result.loss_curves) {
    if (curve.empty()) continue;
    const std::string name = "loss_" + detail::sanitize_filename(key) + ".svg";
    std::ofstream svg(out_dir + "/" + name);
    svg << detail::curve_svg(curve, key);
  }
}

// Rebuilds the statistical summary from a records file (the `report`
// command); loss curves are not recoverable from the CSV, so no SVGs.
inline ExperimentResult result_from_records(std::vector<RunRecord> records) {
  ExperimentResult result;
  result.records = std::move(records);

  std::vector<std::string> evolutions;
  for (const RunRecord& r : result.records) {
    if (std::find(evolutions.begin(), evolutions.end(), r.evolution) == evolutions.end()) {
      evolutions.push_back(r.evolution);
    }
  }
  const auto collect = [&](const std::string& evo, Variant v, auto field) {
    std::vector<double> out;
    for (const RunRecord& r : result.records) {
      if (r.evolution == evo && r.variant == v && r.status == "ok") out.push_back(field(r));
    }
    return out;
  };
  for (const std::string& evo : evolutions) {
    const std::vector<double> ppt =
        collect(evo, Variant::kPpt, [](const RunRecord& r) { return r.target_huber; });
    if (ppt.empty()) continue;
    for (Variant v : {Variant::kWoTl, Variant::kWoUq, Variant::kWoPt, Variant::kFinetune}) {
      const std::vector<double> other =
          collect(evo, v, [](const RunRecord& r) { return r.target_huber; });
      if (other.empty()) continue;
      result.comparisons.push_back(CellComparison{evo, v, make_stat_report(other, ppt)});
    }
    const std::vector<double> pt_times =
        collect(evo, Variant::kPpt, [](const RunRecord& r) { return r.convergence_time_s; });
    const std::vector<double> ft_times =
        collect(evo, Variant::kFinetune, [](const RunRecord& r) { return r.convergence_time_s; });
    if (!pt_times.empty() && !ft_times.empty()) {
      result.timing_comparisons.push_back(
          CellComparison{evo, Variant::kFinetune, make_stat_report(pt_times, ft_times)});
    }
  }
  return result;
}

}  // namespace ppt

#endif  // PPT_EVAL_HPP_
