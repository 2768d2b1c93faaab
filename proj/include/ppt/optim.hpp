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

#ifndef PPT_OPTIM_HPP_
#define PPT_OPTIM_HPP_

#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ppt/graph.hpp"
#include "ppt/mat.hpp"

namespace ppt {

// Adam with global gradient-norm clipping. State is keyed by parameter
// storage address, so the same optimizer instance can be fed a fresh tape
// every step as long as the model structs stay put.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double clip_norm = 5.0)
      : lr_(lr), clip_norm_(clip_norm) {}

  // Parameters listed in `frozen` keep their values (and accumulate no Adam
  // state).
  void step(const ad::Tape& tape, const std::unordered_set<Mat*>* frozen = nullptr) {
    // Collapse duplicate bindings (a parameter may appear in several forward
    // passes on one tape); iteration order follows first binding.
    std::vector<Mat*> order;
    std::unordered_map<Mat*, Mat> grads;
    for (const auto& [p, v] : tape.bound_params()) {
      if (frozen != nullptr && frozen->count(p) != 0) continue;
      auto it = grads.find(p);
      if (it == grads.end()) {
        grads.emplace(p, tape.grad(v));
        order.push_back(p);
      } else {
        const Mat& g = tape.grad(v);
        for (size_t i = 0; i < g.size(); ++i) it->second.vec()[i] += g.vec()[i];
      }
    }

    double sq = 0.0;
    for (Mat* p : order)
      for (double g : grads[p].vec()) sq += g * g;
    const double norm = std::sqrt(sq);
    const double scale = (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (Mat* p : order) {
      State& st = state_[p];
      if (st.m.size() != p->size()) {
        st.m = Mat(p->rows(), p->cols());
        st.v = Mat(p->rows(), p->cols());
      }
      const Mat& g = grads[p];
      for (size_t i = 0; i < p->size(); ++i) {
        const double gi = g.vec()[i] * scale;
        st.m.vec()[i] = kBeta1 * st.m.vec()[i] + (1.0 - kBeta1) * gi;
        st.v.vec()[i] = kBeta2 * st.v.vec()[i] + (1.0 - kBeta2) * gi * gi;
        const double mhat = st.m.vec()[i] / bc1;
        const double vhat = st.v.vec()[i] / bc2;
        p->vec()[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  struct State {
    Mat m;
    Mat v;
  };

  double lr_;
  double clip_norm_;
  long t_ = 0;
  std::unordered_map<Mat*, State> state_;
};

}  // namespace ppt

#endif  // PPT_OPTIM_HPP_
