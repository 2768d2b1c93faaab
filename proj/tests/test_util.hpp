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

#ifndef PPT_TESTS_TEST_UTIL_HPP_
#define PPT_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "ppt/mat.hpp"

namespace ppt::testutil {

// Central-difference check of analytic gradients. `loss` evaluates the
// scalar objective from the parameters' current values; `analytic` returns
// one gradient per parameter. The error metric is the blockwise relative L2
// distance.
inline double gradient_check(std::vector<Mat*> params, const std::function<double()>& loss,
                             const std::function<std::vector<Mat>()>& analytic,
                             double eps = 1e-4) {
  const std::vector<Mat> an = analytic();
  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Mat fd(params[p]->rows(), params[p]->cols());
    for (size_t i = 0; i < params[p]->size(); ++i) {
      const double orig = params[p]->vec()[i];
      params[p]->vec()[i] = orig + eps;
      const double up = loss();
      params[p]->vec()[i] = orig - eps;
      const double down = loss();
      params[p]->vec()[i] = orig;
      fd.vec()[i] = (up - down) / (2.0 * eps);
    }
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < fd.size(); ++i) {
      const double d = fd.vec()[i] - an[p].vec()[i];
      num += d * d;
      den += fd.vec()[i] * fd.vec()[i] + an[p].vec()[i] * an[p].vec()[i];
    }
    const double err = std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ppt::testutil

#endif  // PPT_TESTS_TEST_UTIL_HPP_
