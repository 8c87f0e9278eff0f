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

#include <functional>
#include <vector>

#include "mtlevo/assembly.hpp"
#include "mtlevo/dataset.hpp"

namespace mtlevo {

/// Logits of one image for one task, recorded on g.
using ForwardFn = std::function<Var(Graph& g, std::size_t task, const Tensor& image)>;

/// Per-task accuracy over a whole split (eval mode).
std::vector<double> evaluate_accuracy(const ForwardFn& forward, const MultitaskSpec& spec,
                                      Split split);
std::vector<double> evaluate_accuracy(const AssembledNetwork& net, const MultitaskSpec& spec,
                                      Split split);

double mean(const std::vector<double>& values);

/// First index of the largest value.
std::size_t argmax_first(const std::vector<double>& values);

/// One joint step: one train example per task, summed loss, one Adam step.
/// Returns the summed loss.
double train_iteration(const AssembledNetwork& net, const MultitaskSpec& spec, double lr, Rng& rng);

/// Mean train-split size over tasks: the number of iterations that make up
/// one epoch under one-example-per-task sampling.
std::size_t epoch_iterations(const MultitaskSpec& spec);

/// base, then base/10 after 10 epochs and base/100 after 20 when decay is on.
double learning_rate_at(std::size_t iteration, double base, bool decay, std::size_t epoch_iters);

struct TrainConfig {
  std::size_t iterations = 600;
  bool lr_decay = false;
  /// When positive, validation is measured every eval_every iterations and
  /// the parameters at the best measurement are restored at the end.
  std::size_t eval_every = 0;
};

struct TrainResult {
  std::vector<double> val_accuracy;  // per task, for the returned weights
  double mean_val = 0.0;
  std::vector<double> val_trace;  // mean val at each measurement
  std::size_t best_index = 0;
};

TrainResult train_network(const AssembledNetwork& net, const MultitaskSpec& spec,
                          const TrainConfig& cfg, Rng& rng);

std::vector<Tensor> snapshot_values(std::span<const Param> params);
void restore_values(std::span<const Param> params, const std::vector<Tensor>& values);

}  // namespace mtlevo
