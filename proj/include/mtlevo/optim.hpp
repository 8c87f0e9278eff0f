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

#include <span>

#include "mtlevo/autodiff.hpp"

namespace mtlevo {

struct AdamConfig {
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
};

/// One bias-corrected Adam update over params, then clears their gradients.
/// Aliased entries (same storage) are updated once. Throws NumericError
/// naming the parameter when a gradient is not finite; nothing is modified
/// in that case.
void adam_step(std::span<const Param> params, Real learning_rate, const AdamConfig& config = {});

void zero_grads(std::span<const Param> params);

}  // namespace mtlevo
