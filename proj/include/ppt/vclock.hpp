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

#ifndef PPT_VCLOCK_HPP_
#define PPT_VCLOCK_HPP_

#include <cstdint>

namespace ppt {

// All recorded timings are derived from tape work units through this fixed
// rate, which keeps every emitted artifact byte-reproducible across runs and
// machines. Real elapsed time is reported on stderr only.
constexpr double kSecondsPerWorkUnit = 2e-9;

inline double work_to_seconds(uint64_t work) {
  return static_cast<double>(work) * kSecondsPerWorkUnit;
}

}  // namespace ppt

#endif  // PPT_VCLOCK_HPP_
