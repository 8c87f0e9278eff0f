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
#include "mtlevo/training.hpp"

#include <algorithm>
#include <numeric>

#include "mtlevo/error.hpp"
#include "mtlevo/optim.hpp"

namespace mtlevo {

namespace {

std::size_t predict(const Tensor& logits) {
  auto v = logits.data();
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<double> evaluate_accuracy(const ForwardFn& forward, const MultitaskSpec& spec,
                                      Split split) {
  std::vector<double> acc;
  for (std::size_t t = 0; t < spec.task_count(); ++t) {
    const auto& idx = spec.indices(t, split);
    if (idx.empty()) throw DataError("task " + spec.task(t).task_id + " has an empty split");
    std::size_t correct = 0;
    for (auto i : idx) {
      const Example& ex = spec.task(t).examples[i];
      Graph g(Mode::kEval);
      correct += predict(forward(g, t, ex.image).value()) == ex.label ? 1 : 0;
    }
    acc.push_back(double(correct) / double(idx.size()));
  }
  return acc;
}

std::vector<double> evaluate_accuracy(const AssembledNetwork& net, const MultitaskSpec& spec,
                                      Split split) {
  return evaluate_accuracy(
      [&net](Graph& g, std::size_t t, const Tensor& x) { return net.forward(g, t, x); }, spec,
      split);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
}

std::size_t argmax_first(const std::vector<double>& values) {
  if (values.empty()) throw StateError("argmax of an empty sequence");
  return std::size_t(std::max_element(values.begin(), values.end()) - values.begin());
}

double train_iteration(const AssembledNetwork& net, const MultitaskSpec& spec, double lr,
                       Rng& rng) {
  if (spec.task_count() != net.task_count()) {
    throw ConfigError("network has " + std::to_string(net.task_count()) + " tasks, data has " +
                      std::to_string(spec.task_count()));
  }
  const auto samples = sample_iteration(spec, Split::kTrain, rng);
  Graph g(Mode::kTrain, rng());
  std::vector<Var> losses;
  for (const Sample& s : samples) {
    losses.push_back(softmax_cross_entropy(net.forward(g, s.task, s.example->image), s.example->label));
  }
  Var loss = sum(losses);
  g.backward(loss);
  const auto params = net.params();
  adam_step(params, lr);
  return loss.value().item();
}

std::size_t epoch_iterations(const MultitaskSpec& spec) {
  std::size_t total = 0;
  for (std::size_t t = 0; t < spec.task_count(); ++t) total += spec.indices(t, Split::kTrain).size();
  return std::max<std::size_t>(1, total / std::max<std::size_t>(1, spec.task_count()));
}

double learning_rate_at(std::size_t iteration, double base, bool decay, std::size_t epoch_iters) {
  if (!decay) return base;
  if (iteration >= 20 * epoch_iters) return base / 100.0;
  if (iteration >= 10 * epoch_iters) return base / 10.0;
  return base;
}

std::vector<Tensor> snapshot_values(std::span<const Param> params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p->value);
  return out;
}

void restore_values(std::span<const Param> params, const std::vector<Tensor>& values) {
  if (params.size() != values.size()) throw StateError("snapshot does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

TrainResult train_network(const AssembledNetwork& net, const MultitaskSpec& spec,
                          const TrainConfig& cfg, Rng& rng) {
  const std::size_t epoch = epoch_iterations(spec);
  const auto params = net.params();
  TrainResult result;
  std::vector<Tensor> best;
  double best_val = -1.0;
  auto measure = [&] {
    auto acc = evaluate_accuracy(net, spec, Split::kVal);
    double m = mean(acc);
    result.val_trace.push_back(m);
    if (m > best_val) {
      best_val = m;
      best = snapshot_values(params);
      result.val_accuracy = acc;
      result.best_index = result.val_trace.size() - 1;
    }
  };
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    train_iteration(net, spec, learning_rate_at(it, net.hyper.learning_rate, cfg.lr_decay, epoch), rng);
    if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0 && it + 1 < cfg.iterations) measure();
  }
  if (cfg.eval_every > 0) {
    measure();
    restore_values(params, best);
  } else {
    result.val_accuracy = evaluate_accuracy(net, spec, Split::kVal);
    result.val_trace.push_back(mean(result.val_accuracy));
  }
  result.mean_val = mean(result.val_accuracy);
  return result;
}

}  // namespace mtlevo
