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

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtlevo/random.hpp"
#include "mtlevo/tensor.hpp"

namespace mtlevo {

enum class Mode { kTrain, kEval };

/// kLinear is only used for module tails; the evolvable set is the other four.
enum class Activation { kRelu, kElu, kSigmoid, kTanh, kLinear };

inline constexpr std::array<Activation, 4> kEvolvableActivations = {
    Activation::kRelu, Activation::kElu, Activation::kSigmoid, Activation::kTanh};

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Trainable storage. Several users may hold the same ParamStorage through
/// Param; they then alias one set of weights and one optimizer state.
struct ParamStorage {
  std::uint64_t id = 0;  // shared id: equal ids <=> same storage
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::uint64_t step_count = 0;
  Real l2_strength = 0.0;
};

using Param = std::shared_ptr<ParamStorage>;

Param make_param(Tensor value, Real l2_strength = 0.0, std::string name = {});

/// Fresh storage with a copy of value, gradient and optimizer state.
Param clone_param(const Param& p);

/// Softmax-normalized merge weights owned by one merge point.
struct ScaleGroup {
  Param logits;
  std::string owner;

  static ScaleGroup uniform(std::size_t m, std::string owner);
  std::size_t size() const { return logits ? logits->value.size() : 0; }
  std::vector<Real> weights() const;
};

std::vector<Real> softmax(std::span<const Real> logits);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph
/// lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph* graph() const noexcept { return graph_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t index) : graph_(graph), index_(index) {}
  Graph* graph_ = nullptr;
  std::size_t index_ = 0;
};

/// What a node's backward function sees.
class BackwardContext {
 public:
  const Tensor& grad_out() const { return grad_out_; }
  const Tensor& output() const { return output_; }
  const Tensor& input(std::size_t i) const;
  /// nullptr when input i does not need a gradient.
  Tensor* input_grad(std::size_t i);

 private:
  friend class Graph;
  BackwardContext(Graph& g, std::size_t node, const Tensor& grad_out,
                  const Tensor& output, std::vector<Tensor>& grads)
      : graph_(g), node_(node), grad_out_(grad_out), output_(output), grads_(grads) {}
  Graph& graph_;
  std::size_t node_;
  const Tensor& grad_out_;
  const Tensor& output_;
  std::vector<Tensor>& grads_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Tape of one forward pass. Nodes are appended in topological order, so
/// the reverse sweep in backward() is a plain reverse iteration.
class Graph {
 public:
  explicit Graph(Mode mode = Mode::kTrain, std::uint64_t seed = 0);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::kTrain; }
  Rng& rng() noexcept { return rng_; }

  Var constant(Tensor value);
  /// Registers a parameter leaf. Repeated calls with the same storage return
  /// the same node, so aliased weights get one gradient and one L2 term.
  Var param(const Param& p);
  /// Generic op: records value computed from inputs with its backward.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Accumulates d(loss)/d(param) plus l2_strength * value into every
  /// parameter reachable from loss.
  void backward(Var loss);

  const std::vector<Param>& params() const noexcept { return params_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  friend class Var;
  friend class BackwardContext;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Param param;
    bool needs_grad = false;
  };

  const Tensor& value_of(std::size_t i) const;
  void check_owned(const Var& v, const char* what) const;

  Mode mode_;
  Rng rng_;
  std::deque<Node> nodes_;
  std::unordered_map<const ParamStorage*, std::size_t> param_nodes_;
  std::vector<Param> params_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Feature maps are H x W x C.

/// y = W * flatten(x) + b, with W shaped [out, in].
Var dense(Var x, Var weight, Var bias);

/// Stride-1 convolution with zero "same" padding. Kernel is [k, k, Cin, Cout]
/// with k odd.
Var conv2d(Var x, Var kernel, Var bias);

/// 2x2 max pooling with stride 2; an odd trailing row/column is dropped.
Var maxpool2x2(Var x);

Var activate(Var x, Activation a);

/// Inverted dropout; identity in eval mode.
Var dropout(Var x, double rate);

/// sum_m softmax(logits)_m * inputs[m].
Var softmerge(Var logits, std::span<const Var> inputs);

/// -log softmax(logits)[label], returned as a one-element tensor.
Var softmax_cross_entropy(Var logits, std::size_t label);

/// Elementwise sum of same-shaped tensors.
Var sum(std::span<const Var> terms);

/// Repeats a single-channel map across channels; identity when x already
/// has the requested channel count.
Var tile_channels(Var x, std::size_t channels);

Var concat_channels(std::span<const Var> parts);

enum class LayerKind { kDense, kConv2d, kMaxPool2x2, kActivation, kDropout };

struct LayerOp {
  LayerKind kind = LayerKind::kDense;
  Activation activation = Activation::kRelu;
  double dropout_rate = 0.0;
};

/// Dispatches one layer. Dense and conv2d expect params = {weight, bias};
/// the other kinds take no params.
Var apply_layer(const LayerOp& op, Var input, std::span<const Param> params);

}  // namespace mtlevo
