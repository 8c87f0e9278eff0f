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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtlevo/assembly.hpp"
#include "mtlevo/dataset.hpp"
#include "mtlevo/training.hpp"

namespace mtlevo {

enum class RouteKind { kSource, kSink, kModule, kAdapter };

std::string_view to_string(RouteKind kind);

struct RoutePayload {
  RouteKind kind = RouteKind::kModule;
  std::size_t module = 0;  // index into the shared set when kind == kModule
  bool operator==(const RoutePayload&) const = default;
};

/// Per-task DAG over the shared modules. Nodes with more than one inbound
/// edge soft-merge them with scales[node]; the logits follow the order of
/// the node's inbound edges in graph.edges.
struct RoutingGraph {
  std::size_t task = 0;
  Dag<RoutePayload> graph;
  std::map<NodeId, ScaleGroup> scales;
  NodeId next_id = 2;  // shared counter for node and edge ids
  std::vector<NodeId> order;  // topological, refreshed after every edit

  NodeId source() const { return kSourceId; }
  NodeId sink() const { return kSinkId; }
  std::vector<NodeId> inbound(NodeId v) const;
  std::size_t module_node_count() const;
};

/// Empty when the routing is a valid single-source, single-sink DAG whose
/// merges carry one logit per inbound edge and whose module refs are < K.
std::string check_routing(const RoutingGraph& routing, std::size_t module_count);

/// Spatial side of every node's output for the given input side. Throws
/// AssemblyError on a shape conflict.
std::map<NodeId, std::size_t> routing_sides(const RoutingGraph& routing,
                                            const std::vector<ModuleInstance>& modules,
                                            std::size_t image_side);

/// One (encoder, routing, decoder) candidate. The encoder is the fixed
/// channel tiling of the input image.
struct Individual {
  RoutingGraph routing;
  Decoder decoder;
  bool plain_copy = false;  // mutation found no valid insertion point

  std::vector<Param> own_params() const;  // scales and decoder
};

/// Logit for a new inbound edge so that its softmax weight is exactly alpha:
/// ln(alpha/(1-alpha) * sum_j exp(s_j - s_max)) + s_max.
double new_scale_logit(std::span<const double> logits, double alpha);

struct CtrConfig {
  std::size_t meta_iterations = 40;
  std::size_t iterations_per_meta = 250;
  double alpha = 0.1;
  double learning_rate = 1e-3;
  std::size_t mutation_retries = 20;
  /// Challengers of a champion already holding this many module nodes are
  /// plain copies. 0 means no cap.
  std::size_t max_module_nodes = 0;
  /// 0 evaluates the full validation split; otherwise a fixed-size prefix.
  std::size_t val_subsample = 0;
};

struct CtrHistoryRow {
  std::size_t meta_iteration = 0;
  std::vector<double> champion_val;  // after selection
  double mean_val = 0.0;
  double best_avg_val = 0.0;
  std::size_t replaced = 0;
};

/// Frozen copy of the shared modules and every champion, taken when the
/// mean champion validation accuracy reaches a new best.
struct CtrCheckpoint {
  std::size_t meta_iteration = 0;
  double best_avg_val = 0.0;
  TaskShape tasks;
  std::size_t core_channels = 0;
  std::vector<ModuleGenome> module_genomes;
  std::vector<TailMode> module_tails;
  std::vector<std::string> module_labels;
  GlobalHyper hyper;
  std::vector<std::vector<ParamStorage>> module_values;  // per module, params() order
  std::vector<Individual> champions;                // storage owned by the checkpoint
  std::vector<CtrHistoryRow> history;
  std::string rng_state;
};

struct CtrState {
  std::vector<ModuleInstance> modules;
  TaskShape tasks;
  std::size_t core_channels = 0;
  GlobalHyper hyper;
  std::vector<Individual> champions;
  std::vector<std::optional<Individual>> challengers;
  std::size_t meta_iteration = 0;
  double best_avg_val = 0.0;
  std::optional<CtrCheckpoint> checkpoint;
  std::vector<CtrHistoryRow> history;

  std::vector<Param> module_params() const;
  Var forward(Graph& g, const Individual& ind, const Tensor& image) const;
};

/// Shared set of K fixed modules: one 3x3 conv of width channels each.
std::vector<ModuleInstance> default_ctr_modules(std::size_t K, std::size_t channels,
                                                WeightInit init, Rng& rng);

/// Champion per task: source -> M_1 -> ... -> M_K -> sink, with a 2x2
/// adapter after every module whose output is at least 4x4.
CtrState init_ctr(std::vector<ModuleInstance> modules, const TaskShape& tasks,
                  const GlobalHyper& hyper, Rng& rng);

/// Challenger for one champion: copy (fresh storage, same values and
/// optimizer state), then insert a random module between a random
/// ancestor/descendant pair.
Individual mutate_challenger(const Individual& champion, const CtrState& state, double alpha,
                             std::size_t retries, Rng& rng, std::size_t max_module_nodes = 0);

/// iterations joint steps over every champion and challenger.
void joint_train(CtrState& state, const MultitaskSpec& spec, std::size_t iterations, double lr,
                 Rng& rng);

/// Validation accuracy of one individual on its task.
double evaluate_individual(const CtrState& state, const Individual& ind,
                           const MultitaskSpec& spec, std::size_t subsample = 0);

/// Replaces champions beaten strictly by their challengers, then
/// checkpoints when the mean champion accuracy is a new best. Returns the
/// number of replacements.
std::size_t select_and_checkpoint(CtrState& state, const std::vector<double>& champion_acc,
                                  const std::vector<double>& challenger_acc,
                                  const std::string& rng_state = {});

struct CtrResult {
  CtrCheckpoint checkpoint;
  double best_avg_val = 0.0;
  std::vector<CtrHistoryRow> history;
};

/// Whole CTR loop. When checkpoint_path is set, each new checkpoint is also
/// written there atomically.
CtrResult run_ctr(std::vector<ModuleInstance> modules, const MultitaskSpec& spec,
                  const GlobalHyper& hyper, const CtrConfig& cfg, Rng& rng,
                  const std::filesystem::path& checkpoint_path = {});

/// Rebuilds a live state from a checkpoint (fresh storage).
CtrState restore_checkpoint(const CtrCheckpoint& checkpoint);

/// Per-task test accuracy of the checkpointed champions. The only path in
/// the library that unseals the test split.
std::vector<double> evaluate_test(const CtrCheckpoint& checkpoint, const MultitaskSpec& spec);

std::string checkpoint_to_json(const CtrCheckpoint& checkpoint);
CtrCheckpoint checkpoint_from_json(std::string_view text);
void write_checkpoint(const CtrCheckpoint& checkpoint, const std::filesystem::path& path);
CtrCheckpoint read_checkpoint(const std::filesystem::path& path);

std::string to_dot(const RoutingGraph& routing, const std::string& name = "routing");

}  // namespace mtlevo
