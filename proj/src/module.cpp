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
#include "mtlevo/module.hpp"

#include <cmath>
#include <set>

#include "mtlevo/error.hpp"

namespace mtlevo {

std::size_t pooled_side(std::size_t side) { return side >= 4 ? side / 2 : side; }

namespace {

Tensor init_kernel(std::size_t k, std::size_t cin, std::size_t cout, WeightInit init, Rng& rng) {
  Tensor t({k, k, cin, cout});
  const double fan_in = double(k * k * cin);
  const double fan_out = double(k * k * cout);
  if (init == WeightInit::kGlorot) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data()) v = uniform_real(rng, -limit, limit);
  } else {
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : t.data()) v = sd * standard_normal(rng);
  }
  return t;
}

std::vector<Param> conv_params(std::size_t k, std::size_t cin, std::size_t cout, double l2,
                               WeightInit init, Rng& rng, const std::string& name) {
  return {make_param(init_kernel(k, cin, cout, init, rng), l2, name + "/w"),
          make_param(Tensor({cout}), 0.0, name + "/b")};
}

// Dense genes act pointwise on feature maps, i.e. as 1x1 convolutions.
std::size_t effective_kernel(const LayerGene& g) {
  return g.kind == GeneKind::kDense ? 1 : std::size_t(g.kernel_size);
}

Var join(std::vector<Var> parts) {
  return parts.size() == 1 ? parts[0] : concat_channels(parts);
}

}  // namespace

ModuleInstance realize_module(const ModuleGenome& genome, const GlobalHyper& global,
                              std::size_t in_channels, TailMode tail, Rng& rng,
                              std::string label) {
  if (std::string e = genome.graph.validate(); !e.empty()) {
    throw AssemblyError("cannot realize invalid module genome: " + e);
  }
  for (const auto& n : genome.graph.nodes) {
    const bool pseudo = n.id == kSourceId || n.id == kSinkId;
    if (pseudo == n.payload.has_value()) {
      throw AssemblyError("module node " + std::to_string(n.id) + " has the wrong role");
    }
    if (n.payload && (n.payload->filters < 1 || n.payload->kernel_size % 2 == 0)) {
      throw AssemblyError("module node " + std::to_string(n.id) + " has an unusable layer");
    }
  }
  if (in_channels == 0) throw AssemblyError("module input needs at least one channel");
  ModuleInstance m;
  m.genome = genome;
  m.in_channels = in_channels;
  m.tail = tail;
  m.label = std::move(label);

  m.order = *genome.graph.topological_order();
  std::map<NodeId, std::size_t> channels;
  for (NodeId id : m.order) {
    if (id == kSourceId) {
      channels[id] = in_channels;
      continue;
    }
    std::size_t cin = 0;
    for (NodeId p : genome.graph.predecessors(id)) cin += channels.at(p);
    const auto& payload = genome.graph.node(id).payload;
    if (!payload) {
      channels[id] = cin;
      continue;
    }
    const LayerGene& g = *payload;
    m.layers[id] = conv_params(effective_kernel(g), cin, std::size_t(g.filters), g.l2_strength,
                               global.weight_init, rng,
                               m.label + "/n" + std::to_string(id));
    channels[id] = std::size_t(g.filters);
  }
  const std::size_t sink_channels = channels.at(kSinkId);
  if (tail == TailMode::kNone) {
    m.out_channels = sink_channels;
  } else {
    const LayerGene& t = genome.final_layer;
    m.out_channels = std::size_t(global.final_layer_filters);
    m.tail_params = conv_params(std::size_t(t.kernel_size), sink_channels, m.out_channels,
                                t.l2_strength, global.weight_init, rng, m.label + "/tail");
  }
  return m;
}

ModuleInstance alias_module(const ModuleInstance& source, std::string label) {
  ModuleInstance m = source;
  m.label = std::move(label);
  return m;
}

ModuleInstance clone_module(const ModuleInstance& source, std::string label) {
  ModuleInstance m = source;
  m.label = std::move(label);
  for (auto& [id, ps] : m.layers) {
    for (auto& p : ps) p = clone_param(p);
  }
  for (auto& p : m.tail_params) p = clone_param(p);
  return m;
}

std::vector<Param> ModuleInstance::params() const {
  std::vector<Param> out;
  for (const auto& [id, ps] : layers) out.insert(out.end(), ps.begin(), ps.end());
  out.insert(out.end(), tail_params.begin(), tail_params.end());
  return out;
}

Var ModuleInstance::forward(Var x) const {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != in_channels) {
    throw DimensionError(label + ": expected input with " + std::to_string(in_channels) +
                         " channels, got " + shape_string(s));
  }
  Graph& g = *x.graph();
  std::map<NodeId, Var> out;
  for (NodeId id : order) {
    if (id == kSourceId) {
      out[id] = x;
      continue;
    }
    std::vector<Var> ins;
    for (NodeId p : genome.graph.predecessors(id)) ins.push_back(out.at(p));
    Var in = join(std::move(ins));
    const auto& payload = genome.graph.node(id).payload;
    if (!payload) {
      out[id] = in;
      continue;
    }
    const auto& ps = layers.at(id);
    Var y = conv2d(in, g.param(ps[0]), g.param(ps[1]));
    y = activate(y, payload->activation);
    out[id] = dropout(y, payload->dropout_rate);
  }
  Var y = out.at(kSinkId);
  if (tail == TailMode::kNone) return y;
  const LayerGene& t = genome.final_layer;
  y = conv2d(y, g.param(tail_params[0]), g.param(tail_params[1]));
  y = activate(y, t.activation);
  y = dropout(y, t.dropout_rate);
  if (tail == TailMode::kConvPool && y.shape()[0] >= 4 && y.shape()[1] >= 4) y = maxpool2x2(y);
  return y;
}

Shape ModuleInstance::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != in_channels) {
    throw DimensionError(label + ": bad input shape " + shape_string(input));
  }
  Shape out{input[0], input[1], out_channels};
  if (tail == TailMode::kConvPool && input[0] >= 4 && input[1] >= 4) {
    out[0] /= 2;
    out[1] /= 2;
  }
  return out;
}

ModuleGenome single_layer_module(const LayerGene& gene, bool cmtr) {
  ModuleGenome g;
  g.cmtr = cmtr;
  LayerGene l = gene;
  l.innovation = 2;
  g.graph.nodes = {{kSourceId, std::nullopt}, {kSinkId, std::nullopt}, {2, l}};
  g.graph.edges = {{3, kSourceId, 2}, {4, 2, kSinkId}};
  return g;
}

std::size_t count_distinct(std::span<const Param> params) {
  std::set<std::uint64_t> ids;
  for (const auto& p : params) ids.insert(p->id);
  return ids.size();
}

std::size_t count_scalars(std::span<const Param> params) {
  std::set<std::uint64_t> ids;
  std::size_t n = 0;
  for (const auto& p : params) {
    if (ids.insert(p->id).second) n += p->value.size();
  }
  return n;
}

}  // namespace mtlevo
