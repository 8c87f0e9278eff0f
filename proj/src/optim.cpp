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
#include "mtlevo/optim.hpp"

#include <cmath>
#include <unordered_set>

#include "mtlevo/error.hpp"

namespace mtlevo {

void adam_step(std::span<const Param> params, Real learning_rate, const AdamConfig& config) {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a non-negative finite number");
  }
  std::vector<ParamStorage*> unique;
  std::unordered_set<const ParamStorage*> seen;
  for (const Param& p : params) {
    if (p && seen.insert(p.get()).second) unique.push_back(p.get());
  }
  for (const ParamStorage* p : unique) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter " + std::to_string(p->id) +
                         (p->name.empty() ? "" : " (" + p->name + ")"));
    }
  }
  for (ParamStorage* p : unique) {
    p->step_count += 1;
    const Real t = static_cast<Real>(p->step_count);
    const Real c1 = 1.0 - std::pow(config.beta1, t);
    const Real c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const Real g = p->grad[i];
      p->adam_m[i] = config.beta1 * p->adam_m[i] + (1.0 - config.beta1) * g;
      p->adam_v[i] = config.beta2 * p->adam_v[i] + (1.0 - config.beta2) * g * g;
      const Real m_hat = p->adam_m[i] / c1;
      const Real v_hat = p->adam_v[i] / c2;
      p->value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
    p->grad.fill(0.0);
  }
}

void zero_grads(std::span<const Param> params) {
  for (const Param& p : params) {
    if (p) p->grad.fill(0.0);
  }
}

}  // namespace mtlevo
