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
#include "mtlevo/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "mtlevo/error.hpp"
#include "mtlevo/optim.hpp"

namespace mtlevo {

GradCheckReport grad_check(const std::function<Var(Graph&)>& build, double tolerance,
                           const GradCheckOptions& options) {
  auto loss_once = [&]() {
    Graph g(options.mode, options.seed);
    return build(g).value().item();
  };

  std::vector<Param> params;
  {
    Graph g(options.mode, options.seed);
    Var loss = build(g);
    params = g.params();
    zero_grads(params);
    g.backward(loss);
  }
  if (std::bit_cast<std::uint64_t>(loss_once()) != std::bit_cast<std::uint64_t>(loss_once())) {
    throw StateError("grad_check: graph builder is not deterministic");
  }

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param& p : params) analytic.push_back(p->grad);
  zero_grads(params);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamStorage& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Real saved = p.value[i];
      p.value[i] = saved + options.epsilon;
      const Real up = loss_once();
      p.value[i] = saved - options.epsilon;
      const Real down = loss_once();
      p.value[i] = saved;
      // L2 enters the analytic gradient as an additive term, not via the loss.
      const Real numeric = (up - down) / (2 * options.epsilon) + p.l2_strength * saved;
      const Real a = analytic[pi][i];
      const Real denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_param = p.name.empty() ? std::to_string(p.id) : p.name;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace mtlevo
