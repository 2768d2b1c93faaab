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

#ifndef PPT_CONFIG_HPP_
#define PPT_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppt/datagen.hpp"
#include "ppt/errors.hpp"
#include "ppt/eval.hpp"
#include "ppt/training.hpp"
#include "ppt/twin.hpp"
#include "ppt/uq.hpp"

namespace ppt {

struct SystemSpec {
  std::string name;
  std::map<std::string, double> cps_params;
  std::map<std::string, double> env_params;

  SubjectSystem to_subject_system() const { return SubjectSystem{name, cps_params, env_params}; }
};

struct DataConfig {
  std::string generator = "elevator";  // or "ads"
  int F = kElevatorDefaultF;
  int n_source = 2000;
  int n_target = 200;
  int n_test = 200;
  int n_pretrain_pairs = 3;
  int pretrain_n = 400;
  SystemSpec source{"SourceSys", {{"dispatcher_quality", 0.9}}, {{"traffic_intensity", 1.2}}};
  SystemSpec target{"TargetSys", {{"dispatcher_quality", 0.4}}, {{"traffic_intensity", 0.8}}};

  void validate() const {
    if (generator != "elevator" && generator != "ads") {
      throw ConfigError("data.generator must be 'elevator' or 'ads'");
    }
    if (n_source < 2 || n_target < 2 || n_test < 1) {
      throw ConfigError("data sizes must be positive (n_source/n_target >= 2)");
    }
    if (n_pretrain_pairs < 0 || pretrain_n < 2) {
      throw ConfigError("data.n_pretrain_pairs must be >= 0 and pretrain_n >= 2");
    }
    if (source.name == target.name) {
      throw ConfigError("data.source and data.target must name different systems");
    }
  }
};

struct RunConfig {
  std::string profile = "desk";
  ModelConfig model = ModelConfig::desk_profile();
  UQConfig uq;
  TrainConfig train;
  DataConfig data;
  uint64_t seed = 1;
  int repeats = 30;
  int jobs = 1;
  std::vector<Variant> variants{Variant::kPpt, Variant::kWoTl, Variant::kWoUq, Variant::kWoPt,
                                Variant::kFinetune};

  void validate() const {
    model.validate();
    uq.validate();
    train.validate();
    data.validate();
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (variants.empty()) throw ConfigError("variants must not be empty");
    const int feature_width = data.generator == "ads" ? kAdsF : data.F;
    if (model.input_width != feature_width + 2) {
      throw ConfigError("model.input_width must equal F + 2 (" +
                        std::to_string(feature_width + 2) + "), got " +
                        std::to_string(model.input_width));
    }
    if (model.state_dim > feature_width) {
      throw ConfigError("model.state_dim must not exceed the feature width");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (known.find(key) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read_into(const nlohmann::json& obj, const char* key, T& dst) {
  if (obj.contains(key)) {
    try {
      dst = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("bad value for '") + key + "'");
    }
  }
}

inline SystemSpec parse_system(const nlohmann::json& obj, const std::string& where) {
  reject_unknown_keys(obj, {"name", "cps_params", "env_params"}, where);
  SystemSpec s;
  if (!obj.contains("name")) throw ConfigError(where + " needs a 'name'");
  s.name = obj.at("name").get<std::string>();
  if (obj.contains("cps_params")) {
    s.cps_params = obj.at("cps_params").get<std::map<std::string, double>>();
  }
  if (obj.contains("env_params")) {
    s.env_params = obj.at("env_params").get<std::map<std::string, double>>();
  }
  return s;
}

}  // namespace detail

inline ModelConfig profile_model_config(const std::string& profile, const DataConfig& data) {
  const int f = data.generator == "ads" ? kAdsF : data.F;
  if (profile == "elevator") return ModelConfig::elevator_profile(f);
  if (profile == "ads") {
    ModelConfig c = ModelConfig::ads_profile();
    c.input_width = f + 2;
    c.state_dim = std::min(c.state_dim, f);
    return c;
  }
  if (profile == "desk") return ModelConfig::desk_profile(f);
  throw ConfigError("unknown profile '" + profile + "' (want elevator, ads, or desk)");
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"profile", "model", "uq", "train", "data", "seed", "repeats",
                               "jobs", "variants"},
                              "config root");
  RunConfig cfg;
  detail::read_into(j, "profile", cfg.profile);

  if (j.contains("data")) {
    const nlohmann::json& d = j.at("data");
    detail::reject_unknown_keys(d,
                                {"generator", "F", "n_source", "n_target", "n_test",
                                 "n_pretrain_pairs", "pretrain_n", "source", "target"},
                                "data");
    detail::read_into(d, "generator", cfg.data.generator);
    detail::read_into(d, "F", cfg.data.F);
    detail::read_into(d, "n_source", cfg.data.n_source);
    detail::read_into(d, "n_target", cfg.data.n_target);
    detail::read_into(d, "n_test", cfg.data.n_test);
    detail::read_into(d, "n_pretrain_pairs", cfg.data.n_pretrain_pairs);
    detail::read_into(d, "pretrain_n", cfg.data.pretrain_n);
    if (d.contains("source")) cfg.data.source = detail::parse_system(d.at("source"), "data.source");
    if (d.contains("target")) cfg.data.target = detail::parse_system(d.at("target"), "data.target");
  }
  if (cfg.data.generator == "ads") {
    // ADS systems default to the canonical Simple -> Complex evolution.
    if (!j.contains("data") || !j.at("data").contains("source")) {
      cfg.data.source = SystemSpec{"Simple", {}, {}};
    }
    if (!j.contains("data") || !j.at("data").contains("target")) {
      cfg.data.target = SystemSpec{"Complex", {}, {}};
    }
  }

  cfg.model = profile_model_config(cfg.profile, cfg.data);
  if (j.contains("model")) {
    const nlohmann::json& m = j.at("model");
    detail::reject_unknown_keys(m,
                                {"d_model", "n_heads", "dim_feedforward", "n_layers",
                                 "gru_hidden", "state_dim", "bins", "proj_dim", "batch_size",
                                 "window", "input_width", "learning_rate", "patience"},
                                "model");
    detail::read_into(m, "d_model", cfg.model.attention.d_model);
    detail::read_into(m, "n_heads", cfg.model.attention.n_heads);
    detail::read_into(m, "dim_feedforward", cfg.model.attention.dim_feedforward);
    detail::read_into(m, "n_layers", cfg.model.attention.n_layers);
    detail::read_into(m, "gru_hidden", cfg.model.gru_hidden);
    detail::read_into(m, "state_dim", cfg.model.state_dim);
    detail::read_into(m, "bins", cfg.model.bins);
    detail::read_into(m, "proj_dim", cfg.model.proj_dim);
    detail::read_into(m, "batch_size", cfg.model.batch_size);
    detail::read_into(m, "window", cfg.model.window);
    detail::read_into(m, "input_width", cfg.model.input_width);
    detail::read_into(m, "learning_rate", cfg.model.learning_rate);
    detail::read_into(m, "patience", cfg.model.patience);
  }

  if (j.contains("uq")) {
    const nlohmann::json& u = j.at("uq");
    detail::reject_unknown_keys(u,
                                {"method", "lambda", "n_bayes", "dropout_p", "n_ensemble", "K",
                                 "indicator_epochs", "indicator_train_cap"},
                                "uq");
    if (u.contains("method")) {
      const std::string m = u.at("method").get<std::string>();
      if (m == "cs") {
        cfg.uq.method = UqMethod::kCs;
      } else if (m == "bayesian") {
        cfg.uq.method = UqMethod::kBayesian;
      } else if (m == "ensemble") {
        cfg.uq.method = UqMethod::kEnsemble;
      } else {
        throw ConfigError("uq.method must be cs, bayesian, or ensemble");
      }
    }
    detail::read_into(u, "lambda", cfg.uq.lambda);
    detail::read_into(u, "n_bayes", cfg.uq.n_bayes);
    detail::read_into(u, "dropout_p", cfg.uq.dropout_p);
    detail::read_into(u, "n_ensemble", cfg.uq.n_ensemble);
    detail::read_into(u, "K", cfg.uq.K);
    detail::read_into(u, "indicator_epochs", cfg.uq.indicator_epochs);
    detail::read_into(u, "indicator_train_cap", cfg.uq.indicator_train_cap);
  }

  if (j.contains("train")) {
    const nlohmann::json& t = j.at("train");
    detail::reject_unknown_keys(t,
                                {"alpha", "beta", "delta", "learning_rate", "clip_norm",
                                 "patience", "max_epochs", "min_delta", "freeze_source",
                                 "use_tl", "use_uq", "use_pt", "prompt_loss_huber"},
                                "train");
    detail::read_into(t, "alpha", cfg.train.alpha);
    detail::read_into(t, "beta", cfg.train.beta);
    detail::read_into(t, "delta", cfg.train.delta);
    detail::read_into(t, "learning_rate", cfg.train.learning_rate);
    detail::read_into(t, "clip_norm", cfg.train.clip_norm);
    detail::read_into(t, "patience", cfg.train.patience);
    detail::read_into(t, "max_epochs", cfg.train.max_epochs);
    detail::read_into(t, "min_delta", cfg.train.min_delta);
    detail::read_into(t, "freeze_source", cfg.train.freeze_source);
    detail::read_into(t, "use_tl", cfg.train.use_tl);
    detail::read_into(t, "use_uq", cfg.train.use_uq);
    detail::read_into(t, "use_pt", cfg.train.use_pt);
    detail::read_into(t, "prompt_loss_huber", cfg.train.prompt_loss_huber);
  }

  detail::read_into(j, "seed", cfg.seed);
  detail::read_into(j, "repeats", cfg.repeats);
  detail::read_into(j, "jobs", cfg.jobs);
  if (j.contains("variants")) {
    cfg.variants.clear();
    for (const auto& v : j.at("variants")) {
      cfg.variants.push_back(variant_from_name(v.get<std::string>()));
    }
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["profile"] = cfg.profile;
  j["model"] = model_config_to_json(cfg.model);
  j["uq"] = {{"method", uq_method_name(cfg.uq.method)},
             {"lambda", cfg.uq.lambda},
             {"n_bayes", cfg.uq.n_bayes},
             {"dropout_p", cfg.uq.dropout_p},
             {"n_ensemble", cfg.uq.n_ensemble},
             {"K", cfg.uq.K},
             {"indicator_epochs", cfg.uq.indicator_epochs},
             {"indicator_train_cap", cfg.uq.indicator_train_cap}};
  j["train"] = {{"alpha", cfg.train.alpha},
                {"beta", cfg.train.beta},
                {"delta", cfg.train.delta},
                {"learning_rate", cfg.train.learning_rate},
                {"clip_norm", cfg.train.clip_norm},
                {"patience", cfg.train.patience},
                {"max_epochs", cfg.train.max_epochs},
                {"min_delta", cfg.train.min_delta},
                {"freeze_source", cfg.train.freeze_source},
                {"use_tl", cfg.train.use_tl},
                {"use_uq", cfg.train.use_uq},
                {"use_pt", cfg.train.use_pt},
                {"prompt_loss_huber", cfg.train.prompt_loss_huber}};
  j["data"] = {{"generator", cfg.data.generator},
               {"F", cfg.data.F},
               {"n_source", cfg.data.n_source},
               {"n_target", cfg.data.n_target},
               {"n_test", cfg.data.n_test},
               {"n_pretrain_pairs", cfg.data.n_pretrain_pairs},
               {"pretrain_n", cfg.data.pretrain_n},
               {"source",
                {{"name", cfg.data.source.name},
                 {"cps_params", cfg.data.source.cps_params},
                 {"env_params", cfg.data.source.env_params}}},
               {"target",
                {{"name", cfg.data.target.name},
                 {"cps_params", cfg.data.target.cps_params},
                 {"env_params", cfg.data.target.env_params}}}};
  j["seed"] = cfg.seed;
  j["repeats"] = cfg.repeats;
  j["jobs"] = cfg.jobs;
  std::vector<std::string> names;
  for (Variant v : cfg.variants) names.emplace_back(variant_name(v));
  j["variants"] = names;
  return j;
}

// Dotted-path override, e.g. "train.beta=0.5" or "uq.method=ensemble".
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects KEY=VALUE, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("bad --set path '" + path + "'");
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      if (parsed.is_discarded()) {
        (*node)[key] = value;  // plain string
      } else {
        (*node)[key] = parsed;
      }
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  return j;
}

// ---------------------------------------------------------------------------
// Dataset provisioning for a run config

struct ProvisionedData {
  EvolutionCase experiment_case;
};

inline Dataset generate_for(const DataConfig& data, const SystemSpec& spec, int n,
                            uint64_t seed) {
  const SubjectSystem sys = spec.to_subject_system();
  if (data.generator == "ads") return generate_ads_dataset(sys, n, seed);
  return generate_elevator_dataset(sys, n, seed, data.F);
}

// Auxiliary pretraining systems: the evolution pair's endpoints with jittered
// parameters, giving related but distinct domains.
inline std::pair<SystemSpec, SystemSpec> pretrain_systems(const DataConfig& data, int pair_index,
                                                          uint64_t seed) {
  Rng rng(Rng::derive(seed, "pretrain-sys-" + std::to_string(pair_index)));
  SystemSpec src = data.source;
  SystemSpec tgt = data.target;
  src.name = "PreS" + std::to_string(pair_index);
  tgt.name = "PreT" + std::to_string(pair_index);
  const auto jitter = [&rng](std::map<std::string, double>& params, const std::string& key,
                             double rel, double lo, double hi) {
    auto it = params.find(key);
    if (it == params.end()) return;
    it->second = std::clamp(it->second * (1.0 + rel * (2.0 * rng.uniform01() - 1.0)), lo, hi);
  };
  for (SystemSpec* s : {&src, &tgt}) {
    jitter(s->cps_params, "dispatcher_quality", 0.25, 0.0, 1.0);
    jitter(s->env_params, "traffic_intensity", 0.3, 0.05, 100.0);
    jitter(s->env_params, "npc_mean", 0.3, 0.1, 100.0);
    jitter(s->env_params, "npc_std", 0.3, 0.0, 100.0);
  }
  return {std::move(src), std::move(tgt)};
}

inline EvolutionCase provision_case(const DataConfig& data, uint64_t seed) {
  EvolutionCase c;
  for (int p = 0; p < data.n_pretrain_pairs; ++p) {
    const auto [src_sys, tgt_sys] = pretrain_systems(data, p, seed);
    Dataset src = generate_for(data, src_sys, data.pretrain_n,
                               Rng::derive(seed, "pre-src-" + std::to_string(p)));
    Dataset tgt = generate_for(data, tgt_sys, data.pretrain_n,
                               Rng::derive(seed, "pre-tgt-" + std::to_string(p)));
    c.pretrain_pairs.push_back(make_evolution_pair(std::move(src), std::move(tgt)));
  }
  Dataset source = generate_for(data, data.source, data.n_source, Rng::derive(seed, "source"));
  Dataset target = generate_for(data, data.target, data.n_target, Rng::derive(seed, "target"));
  c.tune_pair = make_evolution_pair(std::move(source), std::move(target));
  c.label = c.tune_pair.label;
  c.test = generate_for(data, data.target, data.n_test, Rng::derive(seed, "test"));
  return c;
}

// ---------------------------------------------------------------------------
// Manifests

inline uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file '" + path + "'");
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

inline void write_manifest(const std::string& command, const RunConfig& cfg,
                           const std::vector<std::string>& artifacts, const std::string& path) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = run_config_to_json(cfg);
  nlohmann::ordered_json hashes;
  for (const std::string& artifact : artifacts) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv64:%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(artifact)));
    hashes[std::filesystem::path(artifact).filename().string()] = buf;
  }
  j["artifacts"] = std::move(hashes);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace ppt

#endif  // PPT_CONFIG_HPP_
