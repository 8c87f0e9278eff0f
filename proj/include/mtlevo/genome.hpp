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
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mtlevo/autodiff.hpp"
#include "mtlevo/dag.hpp"
#include "mtlevo/random.hpp"

namespace mtlevo {

namespace ranges {
inline constexpr std::array<int, 3> kKernelSizes{1, 3, 5};
inline constexpr int kMinFilters = 8;
inline constexpr int kMaxFilters = 64;
inline constexpr double kMinL2 = 1e-7;
inline constexpr double kMaxL2 = 1e-2;
inline constexpr double kMaxDropout = 0.5;
inline constexpr double kMinLearningRate = 1e-4;
inline constexpr double kMaxLearningRate = 1e-2;
inline constexpr int kMinModules = 2;
inline constexpr int kMaxModules = 6;
inline constexpr int kMinDepth = 2;
inline constexpr int kMaxDepth = 6;
}  // namespace ranges

inline constexpr NodeId kSourceId = 0;
inline constexpr NodeId kSinkId = 1;

enum class GeneKind { kDense, kConv2d };
enum class WeightInit { kGlorot, kHe };
enum class SharingMode { kEnabled, kDisabled, kEvolved };

std::string_view to_string(GeneKind kind);
std::string_view to_string(WeightInit init);
std::string_view to_string(SharingMode mode);
GeneKind gene_kind_from_string(std::string_view name);
WeightInit weight_init_from_string(std::string_view name);
SharingMode sharing_mode_from_string(std::string_view name);

struct LayerGene {
  Innovation innovation = 0;
  GeneKind kind = GeneKind::kConv2d;
  Activation activation = Activation::kRelu;
  int kernel_size = 3;  // dense genes ignore it
  int filters = 16;
  double l2_strength = 1e-4;
  double dropout_rate = 0.0;
  bool operator==(const LayerGene&) const = default;
};

/// Source and sink are pseudo-nodes (ids 0 and 1) without a layer.
using ModuleDag = Dag<std::optional<LayerGene>>;

struct ModuleGenome {
  ModuleDag graph;
  bool share_flag = true;
  /// Tail 1x1 conv. Outside CMTR mode it stays linear with no dropout and
  /// only its l2_strength is used; filters always come from GlobalHyper.
  LayerGene final_layer{0, GeneKind::kConv2d, Activation::kLinear, 1, 16, 1e-4, 0.0};
  bool cmtr = false;
  int species_id = 0;
  bool operator==(const ModuleGenome&) const = default;

  std::size_t internal_node_count() const { return graph.nodes.size() - 2; }
};

struct BlueprintNode {
  int species = 0;
  bool share_flag = true;
  bool operator==(const BlueprintNode&) const = default;
};

struct BlueprintGenome {
  Dag<BlueprintNode> graph;
  bool operator==(const BlueprintGenome&) const = default;
};

struct GlobalHyper {
  double learning_rate = 1e-3;
  int final_layer_filters = 16;
  WeightInit weight_init = WeightInit::kGlorot;
  int module_count = 4;  // K
  int depth = 4;         // D
  std::vector<bool> depth_flags = std::vector<bool>(4, true);
  SharingMode sharing_mode = SharingMode::kEvolved;
  bool operator==(const GlobalHyper&) const = default;
};

using AnyGenome = std::variant<ModuleGenome, BlueprintGenome, GlobalHyper>;

struct MutationConfig {
  double add_node = 0.05;
  double add_edge = 0.1;
  double perturb = 0.5;
  double flag_flip = 0.05;
  double perturb_sigma = 0.2;  // in normalized [0, 1] hyperparameter space
  std::size_t max_module_nodes = 8;     // internal nodes
  std::size_t max_blueprint_nodes = 8;  // all nodes
  SharingMode sharing_mode = SharingMode::kEvolved;
};

LayerGene random_layer_gene(Innovation innovation, Rng& rng);
GlobalHyper random_global_hyper(SharingMode mode, Rng& rng);

/// source -> one random layer -> sink. Node ids come from the tracker, so
/// every minimal genome of a run has the same structure.
ModuleGenome minimal_module(bool cmtr, InnovationTracker& tracker, Rng& rng);
/// Two-node chain 0 -> 1 with random species pointers.
BlueprintGenome minimal_blueprint(const std::vector<int>& species, InnovationTracker& tracker,
                                  Rng& rng);

ModuleGenome mutate(const ModuleGenome& genome, const MutationConfig& cfg,
                    InnovationTracker& tracker, Rng& rng);
/// New nodes and perturbed pointers draw from live_species.
BlueprintGenome mutate(const BlueprintGenome& genome, const MutationConfig& cfg,
                       InnovationTracker& tracker, const std::vector<int>& live_species, Rng& rng);
GlobalHyper mutate(const GlobalHyper& hyper, const MutationConfig& cfg, Rng& rng);

/// Repoints nodes whose species is not in live_species to a random live one.
/// Returns the number of nodes changed.
std::size_t repair_species(BlueprintGenome& genome, const std::vector<int>& live_species,
                           Rng& rng);

/// Structural genes come from the fitter parent (ties go to a); payloads of
/// matching genes are picked at random from either parent.
ModuleGenome crossover(const ModuleGenome& a, double fitness_a, const ModuleGenome& b,
                       double fitness_b, Rng& rng);
BlueprintGenome crossover(const BlueprintGenome& a, double fitness_a, const BlueprintGenome& b,
                          double fitness_b, Rng& rng);
GlobalHyper crossover(const GlobalHyper& a, double fitness_a, const GlobalHyper& b,
                      double fitness_b, Rng& rng);
/// Throws ConfigError when a and b hold different genome kinds.
AnyGenome crossover(const AnyGenome& a, double fitness_a, const AnyGenome& b, double fitness_b,
                    Rng& rng);

struct CompatibilityConfig {
  double c1 = 1.0;
  double c3 = 0.5;
};

double compatibility(const ModuleGenome& a, const ModuleGenome& b, const CompatibilityConfig& cfg);
double compatibility(const BlueprintGenome& a, const BlueprintGenome& b,
                     const CompatibilityConfig& cfg);
double compatibility(const GlobalHyper& a, const GlobalHyper& b, const CompatibilityConfig& cfg);

/// Empty when every invariant holds, otherwise a description of the first
/// violation.
std::string check_invariants(const ModuleGenome& genome, const MutationConfig& cfg = {});
std::string check_invariants(const BlueprintGenome& genome, const MutationConfig& cfg = {});
std::string check_invariants(const GlobalHyper& hyper);
std::string check_invariants(const LayerGene& gene, bool tail = false);

/// Canonical JSON text with sorted keys. Deserialization checks structure,
/// ranges and DAG invariants, and throws ParseError naming the location.
std::string serialize(const ModuleGenome& genome);
std::string serialize(const BlueprintGenome& genome);
std::string serialize(const GlobalHyper& hyper);
std::string serialize(const AnyGenome& genome);
/// kStructural accepts hand-built genomes outside the evolution ranges
/// (fixed baseline modules); only graph shape and node roles are checked.
enum class RangeCheck { kEvolution, kStructural };

AnyGenome deserialize(std::string_view text, RangeCheck check = RangeCheck::kEvolution);
ModuleGenome deserialize_module(std::string_view text, RangeCheck check = RangeCheck::kEvolution);
BlueprintGenome deserialize_blueprint(std::string_view text);
GlobalHyper deserialize_hyper(std::string_view text, RangeCheck check = RangeCheck::kEvolution);

}  // namespace mtlevo
