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
#include "mtlevo/assembly.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "mtlevo/error.hpp"

namespace mtlevo {

namespace {

void check_tasks(const TaskShape& tasks) {
  if (tasks.class_counts.empty()) throw ConfigError("network needs at least one task");
  if (tasks.image_side < 1) throw ConfigError("image side must be positive");
  for (auto c : tasks.class_counts) {
    if (c < 2) throw ConfigError("every task needs at least two classes");
  }
}

AssembledNetwork empty_network(std::string kind, const GlobalHyper& global,
                               const TaskShape& tasks) {
  check_tasks(tasks);
  if (global.final_layer_filters < 1) throw ConfigError("core width must be positive");
  AssembledNetwork net;
  net.kind = std::move(kind);
  net.hyper = global;
  net.tasks = tasks;
  net.core_channels = std::size_t(global.final_layer_filters);
  CoreNode input;
  input.kind = CoreKind::kInput;
  input.shape = {tasks.image_side, tasks.image_side, net.core_channels};
  net.nodes.push_back(std::move(input));
  return net;
}

std::size_t add_apply(AssembledNetwork& net, std::size_t instance, std::size_t input) {
  CoreNode n;
  n.kind = CoreKind::kApply;
  n.instance = instance;
  n.inputs = {input};
  n.shape = net.instances[instance].output_shape(net.nodes[input].shape);
  net.nodes.push_back(std::move(n));
  return net.nodes.size() - 1;
}

std::size_t add_pool(AssembledNetwork& net, std::size_t input) {
  CoreNode n;
  n.kind = CoreKind::kPool;
  n.inputs = {input};
  const Shape& s = net.nodes[input].shape;
  n.shape = {s[0] / 2, s[1] / 2, s[2]};
  net.nodes.push_back(std::move(n));
  return net.nodes.size() - 1;
}

std::size_t add_merge(AssembledNetwork& net, std::vector<std::size_t> inputs,
                      const std::string& owner) {
  CoreNode n;
  n.kind = CoreKind::kMerge;
  n.shape = net.nodes[inputs.at(0)].shape;
  for (auto i : inputs) {
    if (net.nodes[i].shape != n.shape) {
      throw AssemblyError(owner + ": merge inputs disagree in shape (" +
                          shape_string(n.shape) + " vs " + shape_string(net.nodes[i].shape) + ")");
    }
  }
  for (std::size_t t = 0; t < net.task_count(); ++t) {
    n.scales.push_back(ScaleGroup::uniform(inputs.size(), owner + "/t" + std::to_string(t)));
  }
  n.inputs = std::move(inputs);
  net.nodes.push_back(std::move(n));
  return net.nodes.size() - 1;
}

void finish(AssembledNetwork& net, std::size_t output, Rng& rng) {
  net.output = output;
  const Shape& s = net.nodes[output].shape;
  const std::size_t flat = shape_product(s);
  for (std::size_t t = 0; t < net.task_count(); ++t) {
    net.decoders.push_back(make_decoder(flat, net.tasks.class_counts[t], net.hyper.weight_init, rng,
                                        "decoder" + std::to_string(t)));
  }
}

ModuleInstance realize_layer(const LayerGene& gene, const AssembledNetwork& net,
                             std::size_t index, Rng& rng) {
  if (std::size_t(gene.filters) != net.core_channels) {
    throw AssemblyError("layer " + std::to_string(index) + " outputs " +
                        std::to_string(gene.filters) + " channels, core width is " +
                        std::to_string(net.core_channels));
  }
  return realize_module(single_layer_module(gene), net.hyper, net.core_channels, TailMode::kNone,
                        rng, "W" + std::to_string(index + 1));
}

bool eligible(SharingMode mode, bool flag) {
  switch (mode) {
    case SharingMode::kEnabled: return true;
    case SharingMode::kDisabled: return false;
    case SharingMode::kEvolved: return flag;
  }
  return false;
}

}  // namespace

Decoder make_decoder(std::size_t inputs, std::size_t classes, WeightInit init, Rng& rng,
                     const std::string& name) {
  Tensor w({classes, inputs});
  if (init == WeightInit::kGlorot) {
    const double limit = std::sqrt(6.0 / double(inputs + classes));
    for (auto& v : w.data()) v = uniform_real(rng, -limit, limit);
  } else {
    const double sd = std::sqrt(2.0 / double(inputs));
    for (auto& v : w.data()) v = sd * standard_normal(rng);
  }
  return {make_param(std::move(w), 0.0, name + "/w"), make_param(Tensor({classes}), 0.0, name + "/b")};
}

Var AssembledNetwork::forward(Graph& g, std::size_t task, const Tensor& image) const {
  if (task >= task_count()) throw ConfigError("task index " + std::to_string(task) + " out of range");
  const Shape& in = image.shape();
  if (in.size() != 3 || in[0] != tasks.image_side || in[1] != tasks.image_side || in[2] != 1) {
    throw DimensionError("network expects " + std::to_string(tasks.image_side) + "x" +
                         std::to_string(tasks.image_side) + "x1 images, got " + shape_string(in));
  }
  std::vector<Var> vals(nodes.size());
  for (std::size_t i = 0; i <= output; ++i) {
    const CoreNode& n = nodes[i];
    switch (n.kind) {
      case CoreKind::kInput: vals[i] = tile_channels(g.constant(image), core_channels); break;
      case CoreKind::kApply: vals[i] = instances[n.instance].forward(vals[n.inputs[0]]); break;
      case CoreKind::kPool: vals[i] = maxpool2x2(vals[n.inputs[0]]); break;
      case CoreKind::kMerge: {
        std::vector<Var> ins;
        for (auto j : n.inputs) ins.push_back(vals[j]);
        vals[i] = softmerge(g.param(n.scales[task].logits), ins);
        break;
      }
    }
  }
  const Decoder& d = decoders[task];
  return dense(vals[output], g.param(d.weight), g.param(d.bias));
}

std::vector<Param> AssembledNetwork::params() const {
  std::vector<Param> out;
  for (const auto& m : instances) {
    auto ps = m.params();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  for (const auto& n : nodes) {
    for (const auto& s : n.scales) out.push_back(s.logits);
  }
  for (const auto& d : decoders) {
    out.push_back(d.weight);
    out.push_back(d.bias);
  }
  return out;
}

AssembledNetwork assemble_soft_ordering(const std::vector<LayerGene>& layers,
                                        const TaskShape& tasks, const GlobalHyper& global,
                                        Rng& rng) {
  if (layers.empty()) throw ConfigError("soft ordering needs at least one layer");
  AssembledNetwork net = empty_network("soft-ordering", global, tasks);
  const std::size_t D = layers.size();
  for (std::size_t l = 0; l < D; ++l) net.instances.push_back(realize_layer(layers[l], net, l, rng));
  net.slots.assign(D, std::vector<std::size_t>(D));
  std::size_t prev = 0;
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<std::size_t> applied;
    for (std::size_t l = 0; l < D; ++l) {
      applied.push_back(add_apply(net, l, prev));
      net.slots[l][d] = l;
    }
    prev = add_merge(net, applied, "depth" + std::to_string(d + 1));
  }
  finish(net, prev, rng);
  return net;
}

AssembledNetwork assemble_chain(const std::vector<LayerGene>& layers, const TaskShape& tasks,
                                const GlobalHyper& global, Rng& rng) {
  if (layers.empty()) throw ConfigError("chain needs at least one layer");
  AssembledNetwork net = empty_network("chain", global, tasks);
  std::size_t prev = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    net.instances.push_back(realize_layer(layers[l], net, l, rng));
    prev = add_apply(net, l, prev);
  }
  finish(net, prev, rng);
  return net;
}

std::vector<std::vector<SlotRecord>> make_slot_grid(const std::vector<ModuleGenome>& modules,
                                                    const GlobalHyper& global) {
  if (modules.empty()) throw ConfigError("CM assembly needs at least one module");
  if (global.module_count < 1 || global.depth < 1) throw ConfigError("K and D must be positive");
  if (global.depth_flags.size() != std::size_t(global.depth)) {
    throw ConfigError("depth flag count differs from depth");
  }
  const std::size_t K = std::size_t(global.module_count), D = std::size_t(global.depth);
  std::vector<std::vector<SlotRecord>> grid(K, std::vector<SlotRecord>(D));
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t m = k % modules.size();
    for (std::size_t d = 0; d < D; ++d) {
      grid[k][d] = {m, eligible(global.sharing_mode,
                                modules[m].share_flag && global.depth_flags[d])};
    }
  }
  return grid;
}

AssembledNetwork assemble_cm(const std::vector<ModuleGenome>& modules, const GlobalHyper& global,
                             const TaskShape& tasks, Rng& rng) {
  const auto grid = make_slot_grid(modules, global);
  AssembledNetwork net = empty_network("cm", global, tasks);
  const std::size_t K = grid.size(), D = grid[0].size();
  net.slots.assign(K, std::vector<std::size_t>(D));
  for (std::size_t k = 0; k < K; ++k) {
    std::optional<std::size_t> shared;
    for (std::size_t d = 0; d < D; ++d) {
      const SlotRecord& slot = grid[k][d];
      const std::string label = "T" + std::to_string(k + 1) + "," + std::to_string(d + 1);
      if (slot.share_eligible && shared) {
        net.instances.push_back(alias_module(net.instances[*shared], label));
      } else {
        net.instances.push_back(realize_module(modules[slot.module], global, net.core_channels,
                                               TailMode::kConvPool, rng, label));
        if (slot.share_eligible) shared = net.instances.size() - 1;
      }
      net.slots[k][d] = net.instances.size() - 1;
    }
  }
  std::size_t prev = 0;
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<std::size_t> applied;
    for (std::size_t k = 0; k < K; ++k) applied.push_back(add_apply(net, net.slots[k][d], prev));
    prev = add_merge(net, applied, "depth" + std::to_string(d + 1));
  }
  finish(net, prev, rng);
  return net;
}

std::size_t adapters_needed(std::size_t side, std::size_t target) {
  std::size_t steps = 0;
  while (side > target) {
    if (side < 2) break;
    side /= 2;
    ++steps;
  }
  if (side != target) {
    throw AssemblyError("no max-pool adapter chain maps side " + std::to_string(side) + " to " +
                        std::to_string(target));
  }
  return steps;
}

AssembledNetwork assemble_cmsr(const BlueprintGenome& blueprint,
                               const std::map<int, ModuleGenome>& module_choice,
                               const GlobalHyper& global, const TaskShape& tasks, Rng& rng) {
  if (std::string e = blueprint.graph.validate(); !e.empty()) {
    throw AssemblyError("invalid blueprint: " + e);
  }
  AssembledNetwork net = empty_network("cmsr", global, tasks);
  std::map<int, std::size_t> shared_by_species;
  std::map<NodeId, std::size_t> core_of;
  const auto order = *blueprint.graph.topological_order();
  for (NodeId id : order) {
    const BlueprintNode& bn = blueprint.graph.node(id).payload;
    auto it = module_choice.find(bn.species);
    if (it == module_choice.end()) {
      throw AssemblyError("blueprint node " + std::to_string(id) + " points to species " +
                          std::to_string(bn.species) + " with no chosen module");
    }
    std::size_t input = 0;
    const auto preds = blueprint.graph.predecessors(id);
    if (preds.size() == 1) {
      input = core_of.at(preds[0]);
    } else if (preds.size() > 1) {
      std::size_t target = std::size_t(-1);
      for (NodeId p : preds) target = std::min(target, net.nodes[core_of.at(p)].shape[0]);
      std::vector<std::size_t> ins;
      for (NodeId p : preds) {
        std::size_t c = core_of.at(p);
        const std::size_t steps = adapters_needed(net.nodes[c].shape[0], target);
        for (std::size_t s = 0; s < steps; ++s) c = add_pool(net, c);
        ins.push_back(c);
      }
      input = add_merge(net, ins, "N" + std::to_string(id));
    }
    const std::string label = "N" + std::to_string(id) + ":s" + std::to_string(bn.species);
    const bool share = eligible(global.sharing_mode, bn.share_flag);
    auto shared = shared_by_species.find(bn.species);
    if (share && shared != shared_by_species.end()) {
      net.instances.push_back(alias_module(net.instances[shared->second], label));
    } else {
      net.instances.push_back(realize_module(it->second, global, net.core_channels,
                                             TailMode::kConvPool, rng, label));
      if (share) shared_by_species[bn.species] = net.instances.size() - 1;
    }
    core_of[id] = add_apply(net, net.instances.size() - 1, input);
  }
  finish(net, core_of.at(blueprint.graph.sinks().at(0)), rng);
  return net;
}

std::size_t count_parameters(std::span<const Param> params) { return count_scalars(params); }

std::size_t count_parameters(const AssembledNetwork& net) {
  auto ps = net.params();
  return count_scalars(ps);
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

std::string gene_label(const LayerGene& g) {
  std::ostringstream os;
  if (g.kind == GeneKind::kDense) {
    os << "dense " << g.filters;
  } else {
    os << "conv " << g.kernel_size << "x" << g.kernel_size << " " << g.filters;
  }
  os << " " << to_string(g.activation) << " drop " << fmt(g.dropout_rate) << " l2 "
     << fmt(g.l2_strength);
  return os.str();
}

}  // namespace

std::string to_dot(const ModuleGenome& genome, const std::string& name) {
  std::ostringstream os;
  os << "digraph \"" << name << "\" {\n  rankdir=TB;\n";
  for (const auto& n : genome.graph.nodes) {
    std::string label = n.id == kSourceId ? "input" : n.id == kSinkId ? "join" : gene_label(*n.payload);
    os << "  n" << n.id << " [label=\"" << label << "\"];\n";
  }
  LayerGene tail = genome.final_layer;
  os << "  tail [label=\"tail conv " << tail.kernel_size << "x" << tail.kernel_size << " "
     << to_string(tail.activation) << " drop " << fmt(tail.dropout_rate) << "\"];\n";
  for (const auto& e : genome.graph.edges) os << "  n" << e.from << " -> n" << e.to << ";\n";
  os << "  n" << kSinkId << " -> tail;\n}\n";
  return os.str();
}

std::string to_dot(const AssembledNetwork& net) {
  std::ostringstream os;
  os << "digraph \"" << net.kind << "\" {\n  rankdir=TB;\n";
  for (std::size_t i = 0; i <= net.output; ++i) {
    const CoreNode& n = net.nodes[i];
    std::string label;
    switch (n.kind) {
      case CoreKind::kInput: label = "input"; break;
      case CoreKind::kApply: label = net.instances[n.instance].label; break;
      case CoreKind::kPool: label = "maxpool 2x2"; break;
      case CoreKind::kMerge: label = "soft merge"; break;
    }
    os << "  c" << i << " [label=\"" << label << " " << shape_string(n.shape) << "\"];\n";
  }
  for (std::size_t i = 0; i <= net.output; ++i) {
    const CoreNode& n = net.nodes[i];
    for (std::size_t j = 0; j < n.inputs.size(); ++j) {
      os << "  c" << n.inputs[j] << " -> c" << i;
      if (n.kind == CoreKind::kMerge) {
        std::string weights;
        for (std::size_t t = 0; t < n.scales.size(); ++t) {
          weights += (t ? " " : "") + fmt(n.scales[t].weights()[j]);
        }
        os << " [label=\"" << weights << "\"]";
      }
      os << ";\n";
    }
  }
  for (std::size_t t = 0; t < net.decoders.size(); ++t) {
    os << "  d" << t << " [label=\"decoder " << t << " (" << net.tasks.class_counts[t]
       << " classes)\"];\n  c" << net.output << " -> d" << t << ";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace mtlevo
