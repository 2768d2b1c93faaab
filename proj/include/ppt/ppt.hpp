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

#ifndef PPT_PPT_HPP_
#define PPT_PPT_HPP_

#include "ppt/attention.hpp"
#include "ppt/config.hpp"
#include "ppt/datagen.hpp"
#include "ppt/errors.hpp"
#include "ppt/eval.hpp"
#include "ppt/graph.hpp"
#include "ppt/mat.hpp"
#include "ppt/optim.hpp"
#include "ppt/rng.hpp"
#include "ppt/stats.hpp"
#include "ppt/training.hpp"
#include "ppt/transfer.hpp"
#include "ppt/twin.hpp"
#include "ppt/uq.hpp"
#include "ppt/vclock.hpp"

#endif  // PPT_PPT_HPP_
