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

#include <map>
#include <string>
#include <vector>

#include "mtlevo/autodiff.hpp"
#include "mtlevo/genome.hpp"
#include "mtlevo/module.hpp"

namespace mtlevo {

enum class CoreKind { kInput, kApply, kPool, kMerge };

/// One step of the shared core. Apply nodes run instances[instance]; merge
/// nodes soft-merge their inputs with scales[task].
struct CoreNode {
  CoreKind kind = CoreKind::kInput;
  std::vector<std::size_t> inputs;
  std::size_t instance = 0;
  std::vector<ScaleGroup> scales;
  Shape shape;
};

/// Task head: logits = W * flatten(core output) + b.
struct Decoder {
  Param weight;
  Param bias;
};

/// What a network looks like to the data: image side and class counts.
struct TaskShape {
  std::size_t image_side = 8;
  std::vector<std::size_t> class_counts;
};

/// A trainable multitask network. Encoders tile the one-channel image to
/// the core width; each task has its own dense decoder.
struct AssembledNetwork {
  std::string kind;
  GlobalHyper hyper;
  TaskShape tasks;
  std::size_t core_channels = 0;
  std::vector<ModuleInstance> instances;
  std::vector<CoreNode> nodes;  // topological order, node 0 is the input
  std::size_t output = 0;
  std::vector<Decoder> decoders;
  /// CM and soft ordering: instance index of slot (row k, depth d).
  std::vector<std::vector<std::size_t>> slots;

  std::size_t task_count() const { return tasks.class_counts.size(); }
  /// Logits for one image of the given task.
  Var forward(Graph& g, std::size_t task, const Tensor& image) const;
  /// Every Param, aliased storages included once per holder.
  std::vector<Param> params() const;
};

/// Soft-ordering network: y^d = softmerge_t,d(W_1(y^{d-1}), ..., W_D(y^{d-1})).
/// Every layer must output global.final_layer_filters channels.
AssembledNetwork assemble_soft_ordering(const std::vector<LayerGene>& layers,
                                        const TaskShape& tasks, const GlobalHyper& global,
                                        Rng& rng);

/// Plain chain of the given layers, no merges. The single-task baseline
/// uses it with one task.
AssembledNetwork assemble_chain(const std::vector<LayerGene>& layers, const TaskShape& tasks,
                                const GlobalHyper& global, Rng& rng);

struct SlotRecord {
  std::size_t module = 0;  // index into M
  bool share_eligible = false;
};

/// K x D slots; row k (0-based) holds M[k mod |M|], i.e. the 1-based
/// ((k-1) mod |M|) + 1.
std::vector<std::vector<SlotRecord>> make_slot_grid(const std::vector<ModuleGenome>& modules,
                                                    const GlobalHyper& global);

/// Enhanced soft-ordering grid. Share-eligible slots of one row alias a
/// single instance; every other slot is fresh.
AssembledNetwork assemble_cm(const std::vector<ModuleGenome>& modules, const GlobalHyper& global,
                             const TaskShape& tasks, Rng& rng);

/// Blueprint nodes replaced by their species' module; multi-input nodes get
/// per-task soft merges, preceded by max-pool adapters where sizes differ.
AssembledNetwork assemble_cmsr(const BlueprintGenome& blueprint,
                               const std::map<int, ModuleGenome>& module_choice,
                               const GlobalHyper& global, const TaskShape& tasks, Rng& rng);

/// Number of pooling steps that bring side down to target; throws
/// AssemblyError when repeated halving misses it.
std::size_t adapters_needed(std::size_t side, std::size_t target);

Decoder make_decoder(std::size_t inputs, std::size_t classes, WeightInit init, Rng& rng,
                     const std::string& name);

/// Distinct trainable scalars (aliases counted once).
std::size_t count_parameters(const AssembledNetwork& net);
std::size_t count_parameters(std::span<const Param> params);

std::string to_dot(const AssembledNetwork& net);
std::string to_dot(const ModuleGenome& genome, const std::string& name = "module");

}  // namespace mtlevo
