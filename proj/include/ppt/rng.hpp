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

#ifndef PPT_RNG_HPP_
#define PPT_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

#include "ppt/mat.hpp"

namespace ppt {

// Deterministic PRNG with hand-rolled distribution transforms so that output
// streams are bit-identical across platforms and standard library versions.
// Generator: xoshiro256++ seeded through splitmix64.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  // Independent substream for a named purpose. Skipping one purpose entirely
  // must not shift the draws of another.
  static uint64_t derive(uint64_t seed, std::string_view tag) {
    uint64_t x = seed ^ fnv1a64(tag);
    return splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform01_open0() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; the second value is discarded to keep the Rng stateless
    // between calls.
    const double u1 = uniform01_open0();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * kPi * u2);
  }

  double exponential(double rate) { return -std::log(uniform01_open0()) / rate; }

  Mat normal_mat(int rows, int cols, double stddev) {
    Mat m(rows, cols);
    for (double& v : m.vec()) v = normal(0.0, stddev);
    return m;
  }

  Mat uniform_mat(int rows, int cols, double lo, double hi) {
    Mat m(rows, cols);
    for (double& v : m.vec()) v = uniform(lo, hi);
    return m;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace ppt

#endif  // PPT_RNG_HPP_
