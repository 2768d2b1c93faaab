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

#ifndef PPT_DATAGEN_HPP_
#define PPT_DATAGEN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppt/errors.hpp"
#include "ppt/rng.hpp"

namespace ppt {

// One timestamped CPS observation: feature vector plus the time-to-event
// label tau (seconds, >= 0).
struct Sample {
  long long t = 0;
  std::vector<double> features;
  double tte = 0.0;
};

// A CPS together with its operating environment: cps_params holds the
// controllable coefficients (dispatcher quality etc.), env_params the
// environment profile (traffic intensity, NPC density, ...).
struct SubjectSystem {
  std::string name;
  std::map<std::string, double> cps_params;
  std::map<std::string, double> env_params;
};

struct Dataset {
  SubjectSystem system;
  std::vector<Sample> samples;
  int F = 0;
  std::optional<uint64_t> seed;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;

  size_t size() const { return samples.size(); }
};

struct EvolutionPair {
  Dataset source;
  Dataset target;
  std::string label;  // "A→B"
};

inline EvolutionPair make_evolution_pair(Dataset source, Dataset target) {
  if (source.F != target.F) {
    throw ArgumentError("evolution pair: feature widths differ (" + std::to_string(source.F) +
                        " vs " + std::to_string(target.F) + ")");
  }
  if (source.system.name == target.system.name) {
    throw ArgumentError("evolution pair: source and target share the name '" +
                        source.system.name + "'");
  }
  std::string label = source.system.name + "→" + target.system.name;
  return EvolutionPair{std::move(source), std::move(target), std::move(label)};
}

// All serialized floats carry 9 significant digits; quantizing at generation
// time makes the CSV codec lossless.
inline double round9(double x) {
  if (!std::isfinite(x)) return x;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return std::strtod(buf, nullptr);
}

inline std::string format9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

inline double require_param(const std::map<std::string, double>& params, const std::string& key,
                            const char* which) {
  auto it = params.find(key);
  if (it == params.end()) {
    throw ConfigError(std::string(which) + " is missing required key '" + key + "'");
  }
  return it->second;
}

namespace detail {

// Per-dataset z-score; constant columns keep std 1. Statistics land in the
// metadata so raw values stay recoverable.
inline void standardize(Dataset& d) {
  const int F = d.F;
  d.feature_means.assign(F, 0.0);
  d.feature_stds.assign(F, 1.0);
  if (d.samples.empty()) return;
  const double n = static_cast<double>(d.samples.size());
  for (int j = 0; j < F; ++j) {
    double sum = 0.0;
    for (const Sample& s : d.samples) sum += s.features[j];
    const double mean = sum / n;
    double sq = 0.0;
    for (const Sample& s : d.samples) {
      const double dlt = s.features[j] - mean;
      sq += dlt * dlt;
    }
    double sd = std::sqrt(sq / n);
    if (sd < 1e-12) sd = 1.0;
    d.feature_means[j] = round9(mean);
    d.feature_stds[j] = round9(sd);
    for (Sample& s : d.samples) s.features[j] = round9((s.features[j] - mean) / sd);
  }
  for (Sample& s : d.samples) s.tte = round9(s.tte);
}

}  // namespace detail

constexpr int kElevatorDefaultF = 8;
constexpr int kAdsF = 19;
constexpr double kDefaultTteMax = 60.0;

inline SubjectSystem make_elevator_system(std::string name, double dispatcher_quality,
                                          double traffic_intensity) {
  SubjectSystem s;
  s.name = std::move(name);
  s.cps_params["dispatcher_quality"] = dispatcher_quality;
  s.env_params["traffic_intensity"] = traffic_intensity;
  return s;
}

inline SubjectSystem make_ads_system(std::string name, double npc_mean, double npc_std) {
  SubjectSystem s;
  s.name = std::move(name);
  s.env_params["npc_mean"] = npc_mean;
  s.env_params["npc_std"] = npc_std;
  return s;
}

// Synthetic elevator TTE data from a single-server queueing process.
//
// Passenger k arrives after an exponential inter-arrival gap; the service
// backlog follows the Lindley recursion W_{k+1} = max(0, W_k + S_k - a_{k+1})
// with service time S_k derived from passenger attributes. The label is
//   tte_k = (2 - dispatcher_quality) * W_k + noise_k,
// noise_k scaled by the boarding/alighting attributes. The backlog itself
// never depends on dispatcher_quality, so lowering quality can only raise the
// mean label (holding the seed fixed).
//
// Feature schema (first F emitted, extras beyond 8 are standard-normal):
//   arrival_floor, destination_floor, mass, boarding_time, alighting_time,
//   queue_length, hod_sin, hod_cos.
inline Dataset generate_elevator_dataset(const SubjectSystem& system, int n, uint64_t seed,
                                         int F = kElevatorDefaultF) {
  if (n < 1) throw ConfigError("generate_elevator_dataset: n must be >= 1, got " +
                               std::to_string(n));
  if (F < 3) throw ConfigError("generate_elevator_dataset: F must be >= 3");
  const double dq = require_param(system.cps_params, "dispatcher_quality", "cps_params");
  if (dq < 0.0 || dq > 1.0) {
    throw ConfigError("dispatcher_quality must lie in [0,1], got " + std::to_string(dq));
  }
  const double intensity = require_param(system.env_params, "traffic_intensity", "env_params");
  if (intensity <= 0.0) throw ConfigError("traffic_intensity must be > 0");

  Rng arrivals(Rng::derive(seed, "elevator/arrivals"));
  Rng attributes(Rng::derive(seed, "elevator/attributes"));
  Rng noise(Rng::derive(seed, "elevator/noise"));

  Dataset d;
  d.system = system;
  d.F = F;
  d.seed = seed;
  d.samples.reserve(n);

  double arrival_time = 0.0;
  double backlog = 0.0;
  for (int k = 0; k < n; ++k) {
    const double gap = arrivals.exponential(intensity);
    arrival_time += gap;
    if (k > 0) backlog = std::max(0.0, backlog - gap);

    const int arrival_floor = static_cast<int>(attributes.below(10));
    const int dest_floor =
        static_cast<int>((arrival_floor + 1 + attributes.below(9)) % 10);
    const double mass = std::clamp(attributes.normal(75.0, 15.0), 20.0, 150.0);
    const double boarding = 1.0 + 0.02 * mass + std::fabs(attributes.normal(0.0, 0.3));
    const double alighting = 0.8 + 0.015 * mass + std::fabs(attributes.normal(0.0, 0.2));
    const double queue_len = std::min(20.0, std::floor(backlog / 4.0));
    const double hod = std::fmod(8.5 + arrival_time / 3600.0, 24.0);
    const double hod_sin = std::sin(2.0 * 3.14159265358979323846 * hod / 24.0);
    const double hod_cos = std::cos(2.0 * 3.14159265358979323846 * hod / 24.0);

    const double service =
        2.5 * std::abs(dest_floor - arrival_floor) + boarding + alighting;

    const double label_noise = 0.1 * (boarding + alighting) * std::fabs(noise.normal(0.0, 1.0));
    const double tte = (2.0 - dq) * backlog + label_noise;

    Sample s;
    s.t = k;
    s.tte = tte;
    std::vector<double> schema = {static_cast<double>(arrival_floor),
                                  static_cast<double>(dest_floor),
                                  mass,
                                  boarding,
                                  alighting,
                                  queue_len,
                                  hod_sin,
                                  hod_cos};
    s.features.resize(F);
    for (int j = 0; j < F; ++j) {
      s.features[j] = j < static_cast<int>(schema.size()) ? schema[j]
                                                          : attributes.normal(0.0, 1.0);
    }
    d.samples.push_back(std::move(s));

    backlog += service;
  }
  detail::standardize(d);
  return d;
}

namespace detail {

inline double ads_default(const SubjectSystem& sys, const std::string& key) {
  // Descriptive NPC-count statistics for the two canonical scenario sets.
  if (sys.name == "Simple") return key == "npc_mean" ? 4.81 : 3.59;
  if (sys.name == "Complex") return key == "npc_mean" ? 6.51 : 3.96;
  throw ConfigError("env_params is missing required key '" + key + "'");
}

}  // namespace detail

// Synthetic driving-scenario TTE data. Each scenario draws an NPC count from
// a rounded normal truncated at 0 and 19 kinematic features; the label is the
// time-to-collision nearest_dist / closing_speed, clipped to [0, tte_max].
inline Dataset generate_ads_dataset(const SubjectSystem& system, int n, uint64_t seed) {
  if (n < 1) throw ConfigError("generate_ads_dataset: n must be >= 1, got " + std::to_string(n));
  double npc_mean, npc_std;
  if (system.env_params.count("npc_mean")) {
    npc_mean = system.env_params.at("npc_mean");
  } else {
    npc_mean = detail::ads_default(system, "npc_mean");
  }
  if (system.env_params.count("npc_std")) {
    npc_std = system.env_params.at("npc_std");
  } else {
    npc_std = detail::ads_default(system, "npc_std");
  }
  if (npc_mean <= 0.0) throw ConfigError("npc_mean must be > 0");
  if (npc_std < 0.0) throw ConfigError("npc_std must be >= 0");
  const auto env = [&](const std::string& key, double dflt) {
    auto it = system.env_params.find(key);
    return it == system.env_params.end() ? dflt : it->second;
  };
  const double closing_mean = env("closing_mean", 5.0);
  const double closing_std = env("closing_std", 4.0);
  const double tte_max = env("tte_max", kDefaultTteMax);

  Rng rng(Rng::derive(seed, "ads/scenarios"));

  Dataset d;
  d.system = system;
  d.F = kAdsF;
  d.seed = seed;
  d.samples.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double npc_draw = rng.normal(npc_mean, npc_std);
    const double npc_count = std::max(0.0, std::round(npc_draw));

    const double ego_speed = rng.uniform(5.0, 30.0);
    const double ego_accel = rng.normal(0.0, 1.5);
    const double ego_heading = rng.uniform(-3.14, 3.14);
    const double ego_lane_offset = rng.normal(0.0, 0.5);
    const double ego_yaw_rate = rng.normal(0.0, 0.2);
    const double ego_pos_x = rng.uniform(0.0, 500.0);
    const double ego_pos_y = rng.uniform(0.0, 500.0);
    const double npc_density = npc_count / 50.0;
    const double nearest_dist =
        rng.uniform(5.0, 120.0) / (1.0 + 0.05 * npc_count);
    const double nearest_speed = rng.uniform(0.0, 30.0);
    const double nearest_accel = rng.normal(0.0, 2.0);
    const double nearest_heading = rng.uniform(-3.14, 3.14);
    const double closing_speed =
        closing_std == 0.0 ? std::max(0.0, closing_mean)
                           : std::max(0.0, rng.normal(closing_mean, closing_std));
    const double rel_heading = rng.uniform(-3.14, 3.14);
    const double time_headway = nearest_dist / std::max(ego_speed, 0.1);
    const double scenario_len = rng.uniform(10.0, 60.0);
    const double weather_coef = rng.uniform(0.0, 1.0);
    const double road_curvature = rng.normal(0.0, 0.05);

    const double tte = closing_speed > 1e-9
                           ? std::clamp(nearest_dist / closing_speed, 0.0, tte_max)
                           : tte_max;

    Sample s;
    s.t = k;
    s.tte = tte;
    s.features = {ego_speed,     ego_accel,     ego_heading,  ego_lane_offset,
                  ego_yaw_rate,  ego_pos_x,     ego_pos_y,    npc_count,
                  npc_density,   nearest_dist,  nearest_speed, nearest_accel,
                  nearest_heading, closing_speed, rel_heading,  time_headway,
                  scenario_len,  weather_coef,  road_curvature};
    d.samples.push_back(std::move(s));
  }
  detail::standardize(d);
  return d;
}

namespace detail {

inline std::string meta_path_for(const std::string& csv_path) {
  std::string p = csv_path;
  if (p.size() > 4 && p.substr(p.size() - 4) == ".csv") p.resize(p.size() - 4);
  return p + ".meta.json";
}

}  // namespace detail

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "t";
  for (int j = 0; j < d.F; ++j) out << ",f" << j;
  out << ",tte\n";
  for (const Sample& s : d.samples) {
    out << s.t;
    for (int j = 0; j < d.F; ++j) out << ',' << format9(s.features[j]);
    out << ',' << format9(s.tte) << '\n';
  }
  out.close();

  nlohmann::ordered_json meta;
  meta["system_name"] = d.system.name;
  meta["F"] = d.F;
  if (d.seed) {
    meta["seed"] = *d.seed;
  } else {
    meta["seed"] = nullptr;
  }
  meta["cps_params"] = d.system.cps_params;
  meta["env_params"] = d.system.env_params;
  meta["feature_means"] = d.feature_means;
  meta["feature_stds"] = d.feature_stds;
  std::ofstream mout(detail::meta_path_for(path));
  if (!mout) throw IoError("cannot open metadata sidecar for '" + path + "'");
  mout << meta.dump(2) << '\n';
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty dataset file '" + path + "'");
  if (!header.empty() && header.back() == '\r') header.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 3 || cols.front() != "t" || cols.back() != "tte") {
    throw ParseError("malformed header: want 't,f0,...,tte', got '" + header + "'");
  }
  const int F = static_cast<int>(cols.size()) - 2;
  for (int j = 0; j < F; ++j) {
    if (cols[j + 1] != "f" + std::to_string(j)) {
      throw ParseError("malformed header: column " + std::to_string(j + 1) + " is '" +
                       cols[j + 1] + "', want 'f" + std::to_string(j) + "'");
    }
  }

  Dataset d;
  d.F = F;
  std::string line;
  int row = 0;
  long long prev_t = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != F + 2) {
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " fields, want " + std::to_string(F + 2));
    }
    Sample s;
    try {
      size_t pos = 0;
      s.t = std::stoll(cells[0], &pos);
      if (pos != cells[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("bad time index '" + cells[0] + "' at row " + std::to_string(row));
    }
    if (row > 1 && s.t <= prev_t) {
      throw ParseError("non-monotone t at row " + std::to_string(row));
    }
    prev_t = s.t;
    s.features.resize(F);
    for (int j = 0; j < F + 1; ++j) {
      const std::string& c = cells[j + 1];
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end != c.c_str() + c.size() || c.empty()) {
        throw ParseError("bad numeric field '" + c + "' at row " + std::to_string(row));
      }
      if (!std::isfinite(v)) {
        throw ParseError("non-finite field at row " + std::to_string(row));
      }
      if (j < F) {
        s.features[j] = v;
      } else {
        s.tte = v;
      }
    }
    if (s.tte < 0.0) throw ParseError("negative tte at row " + std::to_string(row));
    d.samples.push_back(std::move(s));
  }

  const std::string meta_path = detail::meta_path_for(path);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream min(meta_path);
    nlohmann::json meta;
    try {
      min >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad metadata sidecar '" + meta_path + "': " + e.what());
    }
    d.system.name = meta.at("system_name").get<std::string>();
    if (static_cast<int>(meta.at("F").get<int>()) != F) {
      throw ParseError("metadata F=" + std::to_string(meta.at("F").get<int>()) +
                       " disagrees with header F=" + std::to_string(F));
    }
    if (!meta.at("seed").is_null()) d.seed = meta.at("seed").get<uint64_t>();
    d.system.cps_params = meta.at("cps_params").get<std::map<std::string, double>>();
    d.system.env_params = meta.at("env_params").get<std::map<std::string, double>>();
    d.feature_means = meta.at("feature_means").get<std::vector<double>>();
    d.feature_stds = meta.at("feature_stds").get<std::vector<double>>();
  } else {
    // Raw ingested CSV: standardize now, synthesize metadata.
    d.system.name = std::filesystem::path(path).stem().string();
    detail::standardize(d);
  }
  return d;
}

// History window ending at index i, always of length omega: indices
// max(0, i-omega+1)..i, left-padded with zero samples whose mask bit is set.
struct Window {
  std::vector<Sample> samples;
  std::vector<uint8_t> pad_mask;  // 1 on padded slots
};

inline Window window(const Dataset& d, int i, int omega) {
  if (omega < 1) throw ArgumentError("window: omega must be >= 1");
  if (i < 0 || static_cast<size_t>(i) >= d.samples.size()) {
    throw IndexError("window: index " + std::to_string(i) + " out of range [0, " +
                     std::to_string(d.samples.size()) + ")");
  }
  Window w;
  w.samples.resize(omega);
  w.pad_mask.assign(omega, 0);
  const int first = i - omega + 1;
  for (int k = 0; k < omega; ++k) {
    const int idx = first + k;
    if (idx < 0) {
      w.samples[k].t = 0;
      w.samples[k].features.assign(d.F, 0.0);
      w.samples[k].tte = 0.0;
      w.pad_mask[k] = 1;
    } else {
      w.samples[k] = d.samples[idx];
    }
  }
  return w;
}

}  // namespace ppt

#endif  // PPT_DATAGEN_HPP_
