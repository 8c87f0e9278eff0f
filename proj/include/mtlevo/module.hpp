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

namespace mtlevo {

/// How a realized module ends.
enum class TailMode {
  kNone,     // bare layers (soft-ordering layers)
  kConv,     // tail conv only; pooling is left to routing adapters
  kConvPool  // tail conv, then 2x2 max pool when the map is at least 4x4
};

/// Spatial size a map reaches after a tail pool (unchanged below 4x4).
std::size_t pooled_side(std::size_t side);

/// A module genome turned into trainable layers. Copying an instance copies
/// Param handles, so the copy aliases the original's storage.
struct ModuleInstance {
  ModuleGenome genome;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  TailMode tail = TailMode::kConvPool;
  std::string label;
  std::vector<NodeId> order;  // topological
  std::map<NodeId, std::vector<Param>> layers;  // {kernel, bias} per layer node
  std::vector<Param> tail_params;

  std::vector<Param> params() const;
  Var forward(Var x) const;
  Shape output_shape(const Shape& input) const;
};

/// Fresh storage drawn from rng with the genome's weight init. With
/// tail = kNone the module must end in a node whose filters give its output
/// width.
ModuleInstance realize_module(const ModuleGenome& genome, const GlobalHyper& global,
                              std::size_t in_channels, TailMode tail, Rng& rng,
                              std::string label = "module");

/// An instance sharing every Param of source.
ModuleInstance alias_module(const ModuleInstance& source, std::string label);

/// Independent copy with fresh storage holding the same values.
ModuleInstance clone_module(const ModuleInstance& source, std::string label);

/// A single-layer genome, used for soft-ordering layers and fixed CTR modules.
ModuleGenome single_layer_module(const LayerGene& gene, bool cmtr = false);

/// Number of distinct storages across params (aliases counted once) and
/// the total number of scalars they hold.
std::size_t count_distinct(std::span<const Param> params);
std::size_t count_scalars(std::span<const Param> params);

}  // namespace mtlevo
