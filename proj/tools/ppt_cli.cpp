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

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ppt/ppt.hpp"

namespace fs = std::filesystem;

namespace {

struct CliState {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed_override;
  std::optional<int> jobs_override;
  std::vector<std::string> overrides;
};

ppt::RunConfig resolve_config(const CliState& state) {
  nlohmann::json j = state.config_path.empty() ? nlohmann::json::object()
                                               : ppt::load_config_file(state.config_path);
  for (const std::string& assignment : state.overrides) {
    ppt::apply_override(j, assignment);
  }
  ppt::RunConfig cfg = ppt::parse_run_config(j);
  if (state.seed_override) cfg.seed = *state.seed_override;
  if (state.jobs_override) cfg.jobs = *state.jobs_override;
  cfg.validate();
  return cfg;
}

fs::path data_dir(const CliState& s) { return fs::path(s.out_dir) / "data"; }
fs::path ckpt_dir(const CliState& s) { return fs::path(s.out_dir) / "checkpoints"; }
fs::path records_dir(const CliState& s) { return fs::path(s.out_dir) / "records"; }

void require_file(const fs::path& p, const char* hint) {
  if (!fs::exists(p)) {
    throw ppt::ConfigError(std::string(hint) + ": missing '" + p.string() + "'");
  }
}

std::vector<ppt::EvolutionPair> load_pretrain_pairs(const CliState& state,
                                                    const ppt::RunConfig& cfg) {
  std::vector<ppt::EvolutionPair> pairs;
  for (int p = 0; p < cfg.data.n_pretrain_pairs; ++p) {
    const fs::path src = data_dir(state) / ("pre_src_" + std::to_string(p) + ".csv");
    const fs::path tgt = data_dir(state) / ("pre_tgt_" + std::to_string(p) + ".csv");
    require_file(src, "pretrain needs gen-data output");
    require_file(tgt, "pretrain needs gen-data output");
    pairs.push_back(
        ppt::make_evolution_pair(ppt::load_dataset(src.string()), ppt::load_dataset(tgt.string())));
  }
  return pairs;
}

int cmd_gen_data(const CliState& state) {
  const ppt::RunConfig cfg = resolve_config(state);
  fs::create_directories(data_dir(state));
  const ppt::EvolutionCase c = ppt::provision_case(cfg.data, cfg.seed);

  std::vector<std::string> artifacts;
  const auto save = [&artifacts](const ppt::Dataset& d, const fs::path& p) {
    ppt::save_dataset(d, p.string());
    artifacts.push_back(p.string());
  };
  save(c.tune_pair.source, data_dir(state) / "source.csv");
  save(c.tune_pair.target, data_dir(state) / "target.csv");
  save(c.test, data_dir(state) / "test.csv");
  for (size_t p = 0; p < c.pretrain_pairs.size(); ++p) {
    save(c.pretrain_pairs[p].source, data_dir(state) / ("pre_src_" + std::to_string(p) + ".csv"));
    save(c.pretrain_pairs[p].target, data_dir(state) / ("pre_tgt_" + std::to_string(p) + ".csv"));
  }
  ppt::write_manifest("gen-data", cfg, artifacts,
                      (fs::path(state.out_dir) / "manifest_gen_data.json").string());
  std::cout << "wrote " << artifacts.size() << " dataset files under " << data_dir(state).string()
            << "\n";
  return 0;
}

int cmd_pretrain(const CliState& state) {
  const ppt::RunConfig cfg = resolve_config(state);
  const std::vector<ppt::EvolutionPair> pairs = load_pretrain_pairs(state, cfg);
  if (pairs.empty()) {
    throw ppt::ConfigError("pretrain: data.n_pretrain_pairs is 0, nothing to pretrain on");
  }

  const auto t0 = std::chrono::steady_clock::now();
  ppt::PretrainResult res = ppt::pretrain(pairs, cfg.model, cfg.uq, cfg.train, cfg.seed);
  const auto elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(ckpt_dir(state));
  fs::create_directories(records_dir(state));
  const fs::path ckpt = ckpt_dir(state) / "pretrained.json";
  ppt::save_checkpoint(res.twins, ckpt.string());
  std::vector<std::string> artifacts{ckpt.string()};
  for (size_t p = 0; p < res.pair_records.size(); ++p) {
    const fs::path rec = records_dir(state) / ("pretrain_pair_" + std::to_string(p) + ".csv");
    ppt::save_train_record_csv(res.pair_records[p], rec.string());
    artifacts.push_back(rec.string());
  }
  ppt::write_manifest("pretrain", cfg, artifacts,
                      (fs::path(state.out_dir) / "manifest_pretrain.json").string());
  std::cout << "time_pretrain_s " << ppt::format9(res.time_pretrain_s) << "\n";
  std::cerr << "real elapsed: " << elapsed << " s\n";
  return 0;
}

int cmd_tune(const CliState& state) {
  const ppt::RunConfig cfg = resolve_config(state);
  const fs::path ckpt = ckpt_dir(state) / "pretrained.json";
  require_file(ckpt, "tune needs a pretrained checkpoint");
  for (const char* f : {"source.csv", "target.csv", "test.csv"}) {
    require_file(data_dir(state) / f, "tune needs gen-data output");
  }

  ppt::TwinPair pre = ppt::load_checkpoint(ckpt.string());
  ppt::require_same_config(cfg.model, pre.cfg, "tune");
  const ppt::EvolutionPair pair =
      ppt::make_evolution_pair(ppt::load_dataset((data_dir(state) / "source.csv").string()),
                               ppt::load_dataset((data_dir(state) / "target.csv").string()));
  const ppt::Dataset test = ppt::load_dataset((data_dir(state) / "test.csv").string());

  const auto t0 = std::chrono::steady_clock::now();
  ppt::TuneResult res = cfg.train.use_pt
                            ? ppt::prompt_tune(pre, pair, cfg.model, cfg.uq, cfg.train, cfg.seed)
                            : ppt::fine_tune(pre, pair, cfg.model, cfg.uq, cfg.train, cfg.seed);
  const auto elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(records_dir(state));
  const fs::path tuned = ckpt_dir(state) / "tuned.json";
  ppt::save_checkpoint(res.twins, tuned.string());
  const fs::path rec = records_dir(state) / "tune_record.csv";
  ppt::save_train_record_csv(res.record, rec.string());
  ppt::write_manifest("tune", cfg, {tuned.string(), rec.string()},
                      (fs::path(state.out_dir) / "manifest_tune.json").string());

  ppt::TwinPair twins = res.twins;
  std::cout << "time_tune_s " << ppt::format9(res.time_s) << "\n";
  std::cout << "test_huber " << ppt::format9(ppt::evaluate(twins, test, cfg.train.delta)) << "\n";
  std::cerr << "real elapsed: " << elapsed << " s\n";
  return 0;
}

int cmd_ablate(const CliState& state) {
  const ppt::RunConfig cfg = resolve_config(state);
  ppt::ExperimentPlan plan;
  plan.cases.push_back(ppt::provision_case(cfg.data, cfg.seed));
  plan.variants = cfg.variants;
  plan.model = cfg.model;
  plan.uq = cfg.uq;
  plan.train = cfg.train;
  plan.repeats = cfg.repeats;
  plan.base_seed = cfg.seed;
  plan.jobs = cfg.jobs;

  const auto t0 = std::chrono::steady_clock::now();
  const ppt::ExperimentResult result = ppt::run_experiment(plan);
  const auto elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(state.out_dir);
  ppt::emit_report(result, state.out_dir);
  ppt::write_manifest(
      "ablate", cfg,
      {(fs::path(state.out_dir) / "results.csv").string(),
       (fs::path(state.out_dir) / "summary.json").string()},
      (fs::path(state.out_dir) / "manifest_ablate.json").string());
  std::cout << "records " << result.records.size() << "\n";
  std::cerr << "real elapsed: " << elapsed << " s\n";
  return 0;
}

int cmd_uq_compare(const CliState& state) {
  const ppt::RunConfig cfg = resolve_config(state);
  ppt::Dataset target;
  const fs::path target_file = data_dir(state) / "target.csv";
  if (fs::exists(target_file)) {
    target = ppt::load_dataset(target_file.string());
  } else {
    target = ppt::generate_for(cfg.data, cfg.data.target, cfg.data.n_target,
                               ppt::Rng::derive(cfg.seed, "target"));
  }

  fs::create_directories(state.out_dir);
  const ppt::UqComparison cmp =
      ppt::compare_uq_methods(cfg.data.target.name, target, cfg.model, cfg.uq, cfg.seed);

  // Per-method score exports.
  ppt::IndicatorModel ind(cfg.model, ppt::Rng::derive(cfg.seed, "uqcmp-init"));
  ind.train(target, cfg.uq.indicator_epochs, cfg.uq.indicator_train_cap,
            ppt::Rng::derive(cfg.seed, "uqcmp-train"));
  std::vector<std::string> artifacts;
  const auto export_scores = [&](const ppt::UncertaintyScores& s) {
    const std::string base =
        (fs::path(state.out_dir) / ("uq_scores_" + std::string(ppt::uq_method_name(s.method))))
            .string();
    ppt::save_scores_csv(s, base + ".csv");
    std::ofstream rec(base + ".json");
    rec << ppt::scores_record_json(s, cfg.uq.K) << "\n";
    artifacts.push_back(base + ".csv");
    artifacts.push_back(base + ".json");
  };
  export_scores(ppt::score_cs(ind, target, cfg.uq.lambda));
  export_scores(ppt::score_bayesian(ind, target, cfg.uq.n_bayes, cfg.uq.dropout_p,
                                    ppt::Rng::derive(cfg.seed, "uqcmp-bayes")));
  const ppt::IndicatorTrainer trainer = [&](const ppt::Dataset& subset, int member) {
    ppt::IndicatorModel m(cfg.model,
                          ppt::Rng::derive(cfg.seed, "uqcmp-ens-init-" + std::to_string(member)));
    m.train(subset, cfg.uq.indicator_epochs, cfg.uq.indicator_train_cap,
            ppt::Rng::derive(cfg.seed, "uqcmp-ens-train-" + std::to_string(member)));
    return m;
  };
  export_scores(ppt::score_ensemble(target, cfg.uq.n_ensemble, trainer));

  nlohmann::ordered_json j;
  j["evolution"] = cmp.evolution;
  for (const auto& [k, pairs] : cmp.precision) {
    nlohmann::ordered_json row;
    for (const auto& [name, v] : pairs) row[name] = v;
    j["precision_at_" + std::to_string(k)] = std::move(row);
  }
  nlohmann::ordered_json walls;
  for (const auto& [name, v] : cmp.wall_time_s) walls[name] = v;
  j["uq_wall_time_s"] = std::move(walls);
  const fs::path out_json = fs::path(state.out_dir) / "uq_compare.json";
  std::ofstream out(out_json);
  out << j.dump(2) << "\n";
  out.close();
  artifacts.push_back(out_json.string());

  ppt::write_manifest("uq-compare", cfg, artifacts,
                      (fs::path(state.out_dir) / "manifest_uq_compare.json").string());
  std::cout << "uq comparison written to " << out_json.string() << "\n";
  return 0;
}

int cmd_report(const CliState& state, const std::string& in_path) {
  const ppt::RunConfig cfg = resolve_config(state);
  require_file(in_path, "report needs a results.csv");
  const ppt::ExperimentResult result =
      ppt::result_from_records(ppt::read_results_csv(in_path));
  fs::create_directories(state.out_dir);
  ppt::emit_report(result, state.out_dir);
  ppt::write_manifest(
      "report", cfg,
      {(fs::path(state.out_dir) / "results.csv").string(),
       (fs::path(state.out_dir) / "summary.json").string()},
      (fs::path(state.out_dir) / "manifest_report.json").string());
  std::cout << "summary written to " << (fs::path(state.out_dir) / "summary.json").string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CliState state;
  const char* env_out = std::getenv("PPT_OUT_DIR");
  state.out_dir = env_out != nullptr ? env_out : "out";

  CLI::App app{"PPT: uncertainty-aware prompt-tuned transfer learning for digital-twin "
               "time-to-event analysis"};
  app.require_subcommand(1);
  app.add_option("--config", state.config_path, "JSON config file");
  uint64_t seed_val = 0;
  auto* seed_opt = app.add_option("--seed", seed_val, "seed override");
  int jobs_val = 1;
  auto* jobs_opt = app.add_option("--jobs", jobs_val, "worker parallelism");
  app.add_option("--out", state.out_dir, "output directory (default $PPT_OUT_DIR or ./out)");
  app.add_option("--set", state.overrides, "config override KEY=VALUE (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "generate synthetic datasets");
  auto* pre = app.add_subcommand("pretrain", "run Algorithm-1 pretraining over synthetic pairs");
  auto* tune = app.add_subcommand("tune", "prompt-tune (or fine-tune) on the evolution pair");
  auto* abl = app.add_subcommand("ablate", "run the variant x repeats experiment matrix");
  auto* uqc = app.add_subcommand("uq-compare", "compare the three UQ methods on one dataset");
  auto* rep = app.add_subcommand("report", "regenerate summary.json from a results.csv");
  std::string report_in;
  rep->add_option("--in", report_in, "input results.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*seed_opt) state.seed_override = seed_val;
  if (*jobs_opt) state.jobs_override = jobs_val;

  try {
    if (gen->parsed()) return cmd_gen_data(state);
    if (pre->parsed()) return cmd_pretrain(state);
    if (tune->parsed()) return cmd_tune(state);
    if (abl->parsed()) return cmd_ablate(state);
    if (uqc->parsed()) return cmd_uq_compare(state);
    if (rep->parsed()) return cmd_report(state, report_in);
  } catch (const ppt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ppt::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const ppt::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 1;
  } catch (const ppt::IndexError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
