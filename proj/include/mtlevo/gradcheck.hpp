// Copyright 2026 The mtlevo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mtlevo/autodiff.hpp"

namespace mtlevo {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool passed = false;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
  Mode mode = Mode::kTrain;
};

/// Builds the loss with build(graph), compares every analytic parameter
/// gradient against central finite differences. The graph is rebuilt with
/// the same seed for every evaluation, so dropout masks stay fixed. A
/// builder whose loss differs between two identical builds is rejected with
/// StateError.
GradCheckReport grad_check(const std::function<Var(Graph&)>& build, double tolerance,
                           const GradCheckOptions& options = {});

}  // namespace mtlevo
