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
#include "mtlevo/routing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mtlevo/error.hpp"
#include "mtlevo/optim.hpp"

namespace mtlevo {

using nlohmann::json;

std::string_view to_string(RouteKind kind) {
  switch (kind) {
    case RouteKind::kSource: return "source";
    case RouteKind::kSink: return "sink";
    case RouteKind::kModule: return "module";
    case RouteKind::kAdapter: return "adapter";
  }
  return "unknown";
}

namespace {

RouteKind route_kind_from_string(std::string_view s) {
  for (auto k : {RouteKind::kSource, RouteKind::kSink, RouteKind::kModule, RouteKind::kAdapter}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown routing node kind '" + std::string(s) + "'");
}

void refresh_order(RoutingGraph& r) {
  auto order = r.graph.topological_order();
  if (!order) throw StateError("routing graph has a cycle");
  r.order = std::move(*order);
}

Individual copy_individual(const Individual& src) {
  Individual out = src;
  for (auto& [id, group] : out.routing.scales) group.logits = clone_param(group.logits);
  out.decoder.weight = clone_param(src.decoder.weight);
  out.decoder.bias = clone_param(src.decoder.bias);
  out.plain_copy = false;
  return out;
}

std::size_t module_output_side(const ModuleInstance& m, std::size_t side) {
  return m.output_shape({side, side, m.in_channels})[0];
}

}  // namespace

std::vector<NodeId> RoutingGraph::inbound(NodeId v) const { return graph.predecessors(v); }

std::size_t RoutingGraph::module_node_count() const {
  return std::size_t(std::count_if(graph.nodes.begin(), graph.nodes.end(), [](const auto& n) {
    return n.payload.kind == RouteKind::kModule;
  }));
}

std::string check_routing(const RoutingGraph& routing, std::size_t module_count) {
  const auto& g = routing.graph;
  if (std::string err = g.validate(); !err.empty()) return err;
  if (!g.has_node(kSourceId) || g.node(kSourceId).payload.kind != RouteKind::kSource) {
    return "node 0 is not the source";
  }
  if (!g.has_node(kSinkId) || g.node(kSinkId).payload.kind != RouteKind::kSink) {
    return "node 1 is not the sink";
  }
  if (g.sources() != std::vector<NodeId>{kSourceId}) return "source is not the unique entry";
  if (g.sinks() != std::vector<NodeId>{kSinkId}) return "sink is not the unique exit";
  for (const auto& n : g.nodes) {
    const bool endpoint = n.id == kSourceId || n.id == kSinkId;
    if (!endpoint && (n.payload.kind == RouteKind::kSource || n.payload.kind == RouteKind::kSink)) {
      return "extra endpoint node " + std::to_string(n.id);
    }
    if (n.payload.kind == RouteKind::kModule && n.payload.module >= module_count) {
      return "node " + std::to_string(n.id) + " references module " +
             std::to_string(n.payload.module) + " of " + std::to_string(module_count);
    }
    if (n.id >= routing.next_id) return "node id " + std::to_string(n.id) + " not below next_id";
    const std::size_t in = g.predecessors(n.id).size();
    auto it = routing.scales.find(n.id);
    if (in > 1) {
      if (it == routing.scales.end() || !it->second.logits) {
        return "merge at node " + std::to_string(n.id) + " has no scales";
      }
      if (it->second.size() != in) {
        return "merge at node " + std::to_string(n.id) + " has " + std::to_string(it->second.size()) +
               " scales for " + std::to_string(in) + " inputs";
      }
    } else if (it != routing.scales.end()) {
      return "node " + std::to_string(n.id) + " has scales without a merge";
    }
  }
  for (const auto& e : g.edges) {
    if (e.innovation >= routing.next_id) return "edge id not below next_id";
    for (const auto& n : g.nodes) {
      if (n.id == e.innovation) return "edge id collides with node id";
    }
  }
  if (routing.order.size() != g.nodes.size()) return "cached order is stale";
  return {};
}

std::map<NodeId, std::size_t> routing_sides(const RoutingGraph& routing,
                                            const std::vector<ModuleInstance>& modules,
                                            std::size_t image_side) {
  std::map<NodeId, std::size_t> out;
  for (NodeId id : routing.order) {
    const auto& p = routing.graph.node(id).payload;
    std::size_t side = image_side;
    if (p.kind != RouteKind::kSource) {
      const auto preds = routing.inbound(id);
      side = out.at(preds[0]);
      for (NodeId q : preds) {
        if (out.at(q) != side) {
          throw AssemblyError("inputs to routing node " + std::to_string(id) + " have sides " +
                              std::to_string(side) + " and " + std::to_string(out.at(q)));
        }
      }
    }
    if (p.kind == RouteKind::kModule) side = module_output_side(modules.at(p.module), side);
    if (p.kind == RouteKind::kAdapter) {
      if (side < 2) throw AssemblyError("adapter on a 1x1 map");
      side /= 2;
    }
    out[id] = side;
  }
  return out;
}

std::vector<Param> Individual::own_params() const {
  std::vector<Param> out;
  for (const auto& [id, group] : routing.scales) out.push_back(group.logits);
  out.push_back(decoder.weight);
  out.push_back(decoder.bias);
  return out;
}

double new_scale_logit(std::span<const double> logits, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (logits.empty()) throw ConfigError("new scale needs at least one existing logit");
  const double smax = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double s : logits) total += std::exp(s - smax);
  return std::log(alpha / (1.0 - alpha) * total) + smax;
}

std::vector<Param> CtrState::module_params() const {
  std::vector<Param> out;
  for (const auto& m : modules) {
    auto ps = m.params();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

Var CtrState::forward(Graph& g, const Individual& ind, const Tensor& image) const {
  const RoutingGraph& r = ind.routing;
  if (image.shape() != Shape{tasks.image_side, tasks.image_side, 1}) {
    throw DimensionError("routing expects " + std::to_string(tasks.image_side) + "x" +
                         std::to_string(tasks.image_side) + "x1 images, got " +
                         shape_string(image.shape()));
  }
  std::map<NodeId, Var> vals;
  for (NodeId id : r.order) {
    const RoutePayload& p = r.graph.node(id).payload;
    Var x;
    if (p.kind == RouteKind::kSource) {
      x = tile_channels(g.constant(image), core_channels);
    } else {
      const auto preds = r.inbound(id);
      if (preds.size() == 1) {
        x = vals.at(preds[0]);
      } else {
        std::vector<Var> ins;
        for (NodeId q : preds) ins.push_back(vals.at(q));
        x = softmerge(g.param(r.scales.at(id).logits), ins);
      }
    }
    if (p.kind == RouteKind::kModule) x = modules.at(p.module).forward(x);
    if (p.kind == RouteKind::kAdapter) x = maxpool2x2(x);
    vals[id] = x;
  }
  return dense(vals.at(kSinkId), g.param(ind.decoder.weight), g.param(ind.decoder.bias));
}

std::vector<ModuleInstance> default_ctr_modules(std::size_t K, std::size_t channels,
                                                WeightInit init, Rng& rng) {
  if (K < 1) throw ConfigError("CTR needs at least one module");
  GlobalHyper hyper;
  hyper.final_layer_filters = int(channels);
  hyper.weight_init = init;
  LayerGene gene;
  gene.kind = GeneKind::kConv2d;
  gene.kernel_size = 3;
  gene.filters = int(channels);
  gene.activation = Activation::kRelu;
  gene.l2_strength = 0.0;
  gene.dropout_rate = 0.0;
  std::vector<ModuleInstance> out;
  for (std::size_t k = 0; k < K; ++k) {
    out.push_back(realize_module(single_layer_module(gene), hyper, channels, TailMode::kNone, rng,
                                 "M" + std::to_string(k + 1)));
  }
  return out;
}

CtrState init_ctr(std::vector<ModuleInstance> modules, const TaskShape& tasks,
                  const GlobalHyper& hyper, Rng& rng) {
  if (modules.empty()) throw ConfigError("CTR needs at least one module");
  if (tasks.class_counts.empty()) throw ConfigError("CTR needs at least one task");
  CtrState state;
  state.core_channels = modules[0].in_channels;
  for (const auto& m : modules) {
    if (m.in_channels != state.core_channels || m.out_channels != state.core_channels) {
      throw AssemblyError("module " + m.label + " maps " + std::to_string(m.in_channels) + " to " +
                          std::to_string(m.out_channels) + " channels; routing needs " +
                          std::to_string(state.core_channels) + " to " +
                          std::to_string(state.core_channels));
    }
  }
  state.modules = std::move(modules);
  state.tasks = tasks;
  state.hyper = hyper;
  for (std::size_t t = 0; t < tasks.class_counts.size(); ++t) {
    RoutingGraph r;
    r.task = t;
    r.graph.nodes.push_back({kSourceId, {RouteKind::kSource, 0}});
    r.graph.nodes.push_back({kSinkId, {RouteKind::kSink, 0}});
    NodeId prev = kSourceId;
    std::size_t side = tasks.image_side;
    auto link = [&](RoutePayload payload) {
      const NodeId id = r.next_id++;
      r.graph.nodes.push_back({id, payload});
      r.graph.edges.push_back({r.next_id++, prev, id});
      prev = id;
    };
    for (std::size_t k = 0; k < state.modules.size(); ++k) {
      link({RouteKind::kModule, k});
      side = module_output_side(state.modules[k], side);
      if (side >= 4) {
        link({RouteKind::kAdapter, 0});
        side /= 2;
      }
    }
    r.graph.edges.push_back({r.next_id++, prev, kSinkId});
    refresh_order(r);
    Individual champion;
    champion.routing = std::move(r);
    champion.decoder = make_decoder(side * side * state.core_channels, tasks.class_counts[t],
                                    hyper.weight_init, rng, "task" + std::to_string(t) + "/decoder");
    state.champions.push_back(std::move(champion));
  }
  state.challengers.resize(state.champions.size());
  state.best_avg_val = -1.0;
  return state;
}

Individual mutate_challenger(const Individual& champion, const CtrState& state, double alpha,
                             std::size_t retries, Rng& rng, std::size_t max_module_nodes) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  Individual child = copy_individual(champion);
  RoutingGraph& r = child.routing;
  if (max_module_nodes > 0 && r.module_node_count() >= max_module_nodes) {
    child.plain_copy = true;
    return child;
  }
  const auto sides = routing_sides(r, state.modules, state.tasks.image_side);
  std::map<NodeId, std::set<NodeId>> below;
  for (auto it = r.order.rbegin(); it != r.order.rend(); ++it) {
    auto& d = below[*it];
    for (NodeId s : r.graph.successors(*it)) {
      d.insert(s);
      d.insert(below[s].begin(), below[s].end());
    }
  }
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (const auto& u : r.graph.nodes) {
    for (NodeId v : below[u.id]) pairs.emplace_back(u.id, v);
  }
  for (std::size_t attempt = 0; attempt <= retries && !pairs.empty(); ++attempt) {
    const auto [u, v] = pairs[uniform_index(rng, pairs.size())];
    const std::size_t k = uniform_index(rng, state.modules.size());
    const std::size_t w_side = module_output_side(state.modules[k], sides.at(u));
    // Input side of v is the output side of any of its predecessors.
    const std::size_t v_side = sides.at(r.inbound(v)[0]);
    std::size_t adapters = 0;
    try {
      adapters = adapters_needed(w_side, v_side);
    } catch (const AssemblyError&) {
      continue;
    }
    std::vector<double> logits;
    if (auto it = r.scales.find(v); it != r.scales.end()) {
      logits = it->second.logits->value.values();
    } else {
      logits = {0.0};
    }
    const double s_new = new_scale_logit(logits, alpha);

    const NodeId w = r.next_id++;
    r.graph.nodes.push_back({w, {RouteKind::kModule, k}});
    r.graph.edges.push_back({r.next_id++, u, w});
    NodeId prev = w;
    for (std::size_t a = 0; a < adapters; ++a) {
      const NodeId id = r.next_id++;
      r.graph.nodes.push_back({id, {RouteKind::kAdapter, 0}});
      r.graph.edges.push_back({r.next_id++, prev, id});
      prev = id;
    }
    // Appended last, so the new logit also goes last.
    r.graph.edges.push_back({r.next_id++, prev, v});
    logits.push_back(s_new);
    auto it = r.scales.find(v);
    if (it == r.scales.end()) {
      ScaleGroup group = ScaleGroup::uniform(logits.size(), "task" + std::to_string(r.task) + "/n" +
                                                                std::to_string(v));
      group.logits->value = Tensor::vector(logits);
      r.scales.emplace(v, std::move(group));
    } else {
      // Grow the existing storage; optimizer moments for the new entry start at zero.
      ParamStorage& p = *it->second.logits;
      auto grow = [](Tensor& t, double x) {
        auto v = t.values();
        v.push_back(x);
        t = Tensor::vector(std::move(v));
      };
      grow(p.value, s_new);
      grow(p.grad, 0.0);
      grow(p.adam_m, 0.0);
      grow(p.adam_v, 0.0);
    }
    refresh_order(r);
    return child;
  }
  child.plain_copy = true;
  return child;
}

void joint_train(CtrState& state, const MultitaskSpec& spec, std::size_t iterations, double lr,
                 Rng& rng) {
  if (spec.task_count() != state.champions.size()) {
    throw ConfigError("CTR state has " + std::to_string(state.champions.size()) +
                      " tasks, data has " + std::to_string(spec.task_count()));
  }
  std::vector<const Individual*> individuals;
  std::vector<Param> params = state.module_params();
  for (std::size_t t = 0; t < state.champions.size(); ++t) {
    for (const Individual* ind :
         {&state.champions[t], state.challengers[t] ? &*state.challengers[t] : nullptr}) {
      if (!ind) continue;
      individuals.push_back(ind);
      auto own = ind->own_params();
      params.insert(params.end(), own.begin(), own.end());
    }
  }
  for (std::size_t it = 0; it < iterations; ++it) {
    Graph g(Mode::kTrain, rng());
    std::vector<Var> losses;
    for (const Individual* ind : individuals) {
      const std::size_t t = ind->routing.task;
      const auto& idx = spec.indices(t, Split::kTrain);
      if (idx.empty()) throw DataError("task " + spec.task(t).task_id + " has an empty train split");
      const Example& ex = spec.task(t).examples[idx[uniform_index(rng, idx.size())]];
      losses.push_back(softmax_cross_entropy(state.forward(g, *ind, ex.image), ex.label));
    }
    g.backward(sum(losses));
    try {
      adam_step(params, lr);
    } catch (const NumericError& e) {
      throw NumericError("meta-iteration " + std::to_string(state.meta_iteration) + ": " + e.what());
    }
  }
}

double evaluate_individual(const CtrState& state, const Individual& ind, const MultitaskSpec& spec,
                           std::size_t subsample) {
  const std::size_t t = ind.routing.task;
  const auto& idx = spec.indices(t, Split::kVal);
  if (idx.empty()) throw DataError("task " + spec.task(t).task_id + " has an empty val split");
  const std::size_t n = subsample > 0 ? std::min(subsample, idx.size()) : idx.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = spec.task(t).examples[idx[i]];
    Graph g(Mode::kEval);
    const Tensor& logits = state.forward(g, ind, ex.image).value();
    auto v = logits.data();
    correct += std::size_t(std::max_element(v.begin(), v.end()) - v.begin()) == ex.label ? 1 : 0;
  }
  return double(correct) / double(n);
}

namespace {

CtrCheckpoint take_checkpoint(const CtrState& state, const std::string& rng_text) {
  CtrCheckpoint c;
  c.meta_iteration = state.meta_iteration;
  c.best_avg_val = state.best_avg_val;
  c.tasks = state.tasks;
  c.core_channels = state.core_channels;
  c.hyper = state.hyper;
  for (const auto& m : state.modules) {
    c.module_genomes.push_back(m.genome);
    c.module_tails.push_back(m.tail);
    c.module_labels.push_back(m.label);
    std::vector<ParamStorage> values;
    for (const auto& p : m.params()) values.push_back(*p);
    c.module_values.push_back(std::move(values));
  }
  for (const auto& ch : state.champions) c.champions.push_back(copy_individual(ch));
  c.history = state.history;
  c.rng_state = rng_text;
  return c;
}

}  // namespace

std::size_t select_and_checkpoint(CtrState& state, const std::vector<double>& champion_acc,
                                  const std::vector<double>& challenger_acc,
                                  const std::string& rng_text) {
  const std::size_t T = state.champions.size();
  if (champion_acc.size() != T || challenger_acc.size() != T) {
    throw ConfigError("selection needs one accuracy per task for champions and challengers");
  }
  std::size_t replaced = 0;
  CtrHistoryRow row;
  row.meta_iteration = state.meta_iteration;
  for (std::size_t t = 0; t < T; ++t) {
    double acc = champion_acc[t];
    if (state.challengers[t] && challenger_acc[t] > champion_acc[t]) {
      state.champions[t] = std::move(*state.challengers[t]);
      acc = challenger_acc[t];
      ++replaced;
    }
    state.challengers[t].reset();
    row.champion_val.push_back(acc);
  }
  row.mean_val = mean(row.champion_val);
  row.replaced = replaced;
  const bool improved = row.mean_val > state.best_avg_val;
  if (improved) state.best_avg_val = row.mean_val;
  row.best_avg_val = state.best_avg_val;
  state.history.push_back(row);
  if (improved) state.checkpoint = take_checkpoint(state, rng_text);
  return replaced;
}

CtrResult run_ctr(std::vector<ModuleInstance> modules, const MultitaskSpec& spec,
                  const GlobalHyper& hyper, const CtrConfig& cfg, Rng& rng,
                  const std::filesystem::path& checkpoint_path) {
  if (cfg.meta_iterations < 1) throw ConfigError("CTR needs at least one meta-iteration");
  TaskShape shape{spec.image_side(), spec.class_counts()};
  CtrState state = init_ctr(std::move(modules), shape, hyper, rng);
  for (std::size_t mi = 0; mi < cfg.meta_iterations; ++mi) {
    state.meta_iteration = mi;
    for (std::size_t t = 0; t < state.champions.size(); ++t) {
      state.challengers[t] =
          mutate_challenger(state.champions[t], state, cfg.alpha, cfg.mutation_retries, rng,
                            cfg.max_module_nodes);
    }
    joint_train(state, spec, cfg.iterations_per_meta, cfg.learning_rate, rng);
    std::vector<double> champ_acc, chall_acc;
    for (std::size_t t = 0; t < state.champions.size(); ++t) {
      champ_acc.push_back(evaluate_individual(state, state.champions[t], spec, cfg.val_subsample));
      chall_acc.push_back(evaluate_individual(state, *state.challengers[t], spec, cfg.val_subsample));
    }
    const double before = state.best_avg_val;
    select_and_checkpoint(state, champ_acc, chall_acc, rng_state(rng));
    if (state.best_avg_val > before && !checkpoint_path.empty()) {
      write_checkpoint(*state.checkpoint, checkpoint_path);
    }
  }
  CtrResult result;
  result.checkpoint = std::move(*state.checkpoint);
  result.best_avg_val = state.best_avg_val;
  result.history = std::move(state.history);
  return result;
}

CtrState restore_checkpoint(const CtrCheckpoint& c) {
  CtrState state;
  state.tasks = c.tasks;
  state.core_channels = c.core_channels;
  state.hyper = c.hyper;
  if (c.module_genomes.size() != c.module_values.size() ||
      c.module_genomes.size() != c.module_tails.size()) {
    throw StateError("checkpoint module lists disagree in length");
  }
  Rng unused(0);
  for (std::size_t k = 0; k < c.module_genomes.size(); ++k) {
    const std::string label =
        k < c.module_labels.size() ? c.module_labels[k] : "M" + std::to_string(k + 1);
    ModuleInstance m =
        realize_module(c.module_genomes[k], c.hyper, c.core_channels, c.module_tails[k], unused, label);
    auto ps = m.params();
    if (ps.size() != c.module_values[k].size()) throw StateError("checkpoint module shape mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const ParamStorage& src = c.module_values[k][i];
      if (src.value.shape() != ps[i]->value.shape()) {
        throw StateError("checkpoint parameter shape mismatch in module " + label);
      }
      ps[i]->value = src.value;
      ps[i]->adam_m = src.adam_m;
      ps[i]->adam_v = src.adam_v;
      ps[i]->step_count = src.step_count;
    }
    state.modules.push_back(std::move(m));
  }
  for (const auto& ch : c.champions) state.champions.push_back(copy_individual(ch));
  state.challengers.resize(state.champions.size());
  state.meta_iteration = c.meta_iteration;
  state.best_avg_val = c.best_avg_val;
  state.history = c.history;
  return state;
}

std::vector<double> evaluate_test(const CtrCheckpoint& checkpoint, const MultitaskSpec& spec) {
  const CtrState state = restore_checkpoint(checkpoint);
  if (spec.task_count() != state.champions.size()) {
    throw ConfigError("checkpoint has " + std::to_string(state.champions.size()) +
                      " tasks, data has " + std::to_string(spec.task_count()));
  }
  const auto access = spec.unseal_test();
  return evaluate_accuracy(
      [&state](Graph& g, std::size_t t, const Tensor& x) {
        return state.forward(g, state.champions[t], x);
      },
      spec, Split::kTest);
}

namespace {

json tensor_to_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from_json(const json& j) {
  Shape shape = j.at("shape").get<Shape>();
  std::vector<Real> data = j.at("data").get<std::vector<Real>>();
  if (shape_product(shape) != data.size()) throw ParseError("tensor data does not match shape");
  return Tensor(std::move(shape), std::move(data));
}

json storage_to_json(const ParamStorage& p) {
  return {{"name", p.name},
          {"value", tensor_to_json(p.value)},
          {"adam_m", tensor_to_json(p.adam_m)},
          {"adam_v", tensor_to_json(p.adam_v)},
          {"step_count", p.step_count},
          {"l2", p.l2_strength}};
}

Param param_from_json(const json& j) {
  Param p = make_param(tensor_from_json(j.at("value")), j.at("l2").get<double>(),
                       j.at("name").get<std::string>());
  p->adam_m = tensor_from_json(j.at("adam_m"));
  p->adam_v = tensor_from_json(j.at("adam_v"));
  p->step_count = j.at("step_count").get<std::uint64_t>();
  if (p->adam_m.shape() != p->value.shape() || p->adam_v.shape() != p->value.shape()) {
    throw ParseError("optimizer state does not match parameter " + p->name);
  }
  return p;
}

json routing_to_json(const RoutingGraph& r) {
  json nodes = json::array();
  for (const auto& n : r.graph.nodes) {
    nodes.push_back({{"id", n.id}, {"kind", to_string(n.payload.kind)}, {"module", n.payload.module}});
  }
  json edges = json::array();
  for (const auto& e : r.graph.edges) {
    edges.push_back({{"id", e.innovation}, {"from", e.from}, {"to", e.to}});
  }
  json scales = json::array();
  for (const auto& [id, group] : r.scales) {
    scales.push_back({{"node", id}, {"owner", group.owner}, {"logits", storage_to_json(*group.logits)}});
  }
  return {{"task", r.task}, {"next_id", r.next_id}, {"nodes", nodes}, {"edges", edges},
          {"scales", scales}};
}

RoutingGraph routing_from_json(const json& j) {
  RoutingGraph r;
  r.task = j.at("task").get<std::size_t>();
  r.next_id = j.at("next_id").get<NodeId>();
  for (const auto& n : j.at("nodes")) {
    r.graph.nodes.push_back(
        {n.at("id").get<NodeId>(),
         {route_kind_from_string(n.at("kind").get<std::string>()), n.at("module").get<std::size_t>()}});
  }
  for (const auto& e : j.at("edges")) {
    r.graph.edges.push_back(
        {e.at("id").get<Innovation>(), e.at("from").get<NodeId>(), e.at("to").get<NodeId>()});
  }
  for (const auto& s : j.at("scales")) {
    r.scales.emplace(s.at("node").get<NodeId>(),
                     ScaleGroup{param_from_json(s.at("logits")), s.at("owner").get<std::string>()});
  }
  refresh_order(r);
  return r;
}

json history_to_json(const CtrHistoryRow& h) {
  return {{"meta_iteration", h.meta_iteration}, {"champion_val", h.champion_val},
          {"mean_val", h.mean_val}, {"best_avg_val", h.best_avg_val}, {"replaced", h.replaced}};
}

CtrHistoryRow history_from_json(const json& j) {
  CtrHistoryRow h;
  h.meta_iteration = j.at("meta_iteration").get<std::size_t>();
  h.champion_val = j.at("champion_val").get<std::vector<double>>();
  h.mean_val = j.at("mean_val").get<double>();
  h.best_avg_val = j.at("best_avg_val").get<double>();
  h.replaced = j.at("replaced").get<std::size_t>();
  return h;
}

std::string_view tail_name(TailMode m) {
  switch (m) {
    case TailMode::kNone: return "none";
    case TailMode::kConv: return "conv";
    case TailMode::kConvPool: return "conv_pool";
  }
  return "none";
}

TailMode tail_from_name(std::string_view s) {
  for (auto m : {TailMode::kNone, TailMode::kConv, TailMode::kConvPool}) {
    if (tail_name(m) == s) return m;
  }
  throw ParseError("unknown module tail '" + std::string(s) + "'");
}

}  // namespace

std::string checkpoint_to_json(const CtrCheckpoint& c) {
  json modules = json::array();
  for (std::size_t k = 0; k < c.module_genomes.size(); ++k) {
    json params = json::array();
    for (const auto& p : c.module_values[k]) params.push_back(storage_to_json(p));
    modules.push_back({{"genome", json::parse(serialize(c.module_genomes[k]))},
                       {"tail", tail_name(c.module_tails[k])},
                       {"label", k < c.module_labels.size() ? c.module_labels[k] : ""},
                       {"params", params}});
  }
  json champions = json::array();
  for (const auto& ch : c.champions) {
    champions.push_back({{"routing", routing_to_json(ch.routing)},
                         {"decoder_w", storage_to_json(*ch.decoder.weight)},
                         {"decoder_b", storage_to_json(*ch.decoder.bias)}});
  }
  json history = json::array();
  for (const auto& h : c.history) history.push_back(history_to_json(h));
  json j = {{"format", "mtlevo-ctr-checkpoint"},
            {"version", 1},
            {"meta_iteration", c.meta_iteration},
            {"best_avg_val", c.best_avg_val},
            {"image_side", c.tasks.image_side},
            {"class_counts", c.tasks.class_counts},
            {"core_channels", c.core_channels},
            {"hyper", json::parse(serialize(c.hyper))},
            {"modules", modules},
            {"champions", champions},
            {"history", history},
            {"rng_state", c.rng_state}};
  return j.dump();
}

CtrCheckpoint checkpoint_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint is not valid JSON at byte " + std::to_string(e.byte));
  }
  try {
    if (j.at("format") != "mtlevo-ctr-checkpoint") throw ParseError("not a CTR checkpoint");
    CtrCheckpoint c;
    c.meta_iteration = j.at("meta_iteration").get<std::size_t>();
    c.best_avg_val = j.at("best_avg_val").get<double>();
    c.tasks.image_side = j.at("image_side").get<std::size_t>();
    c.tasks.class_counts = j.at("class_counts").get<std::vector<std::size_t>>();
    c.core_channels = j.at("core_channels").get<std::size_t>();
    c.hyper = deserialize_hyper(j.at("hyper").dump(), RangeCheck::kStructural);
    for (const auto& m : j.at("modules")) {
      c.module_genomes.push_back(deserialize_module(m.at("genome").dump(), RangeCheck::kStructural));
      c.module_tails.push_back(tail_from_name(m.at("tail").get<std::string>()));
      c.module_labels.push_back(m.at("label").get<std::string>());
      std::vector<ParamStorage> values;
      for (const auto& p : m.at("params")) values.push_back(*param_from_json(p));
      c.module_values.push_back(std::move(values));
    }
    for (const auto& ch : j.at("champions")) {
      Individual ind;
      ind.routing = routing_from_json(ch.at("routing"));
      ind.decoder = {param_from_json(ch.at("decoder_w")), param_from_json(ch.at("decoder_b"))};
      c.champions.push_back(std::move(ind));
    }
    for (const auto& h : j.at("history")) c.history.push_back(history_from_json(h));
    c.rng_state = j.at("rng_state").get<std::string>();
    for (const auto& ch : c.champions) {
      if (auto err = check_routing(ch.routing, c.module_genomes.size()); !err.empty()) {
        throw ParseError("checkpoint routing for task " + std::to_string(ch.routing.task) + ": " + err);
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const CtrCheckpoint& checkpoint, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StateError("cannot write " + tmp.string());
    out << checkpoint_to_json(checkpoint);
    out.flush();
    if (!out) throw StateError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CtrCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return checkpoint_from_json(os.str());
}

std::string to_dot(const RoutingGraph& r, const std::string& name) {
  std::ostringstream os;
  os << "digraph \"" << name << "\" {\n  rankdir=TB;\n";
  for (const auto& n : r.graph.nodes) {
    std::string label;
    switch (n.payload.kind) {
      case RouteKind::kSource: label = "encoder"; break;
      case RouteKind::kSink: label = "decoder"; break;
      case RouteKind::kModule: label = "M" + std::to_string(n.payload.module + 1); break;
      case RouteKind::kAdapter: label = "maxpool 2x2"; break;
    }
    os << "  r" << n.id << " [label=\"" << label << "\"];\n";
  }
  for (const auto& n : r.graph.nodes) {
    const auto preds = r.inbound(n.id);
    std::vector<Real> w;
    if (auto it = r.scales.find(n.id); it != r.scales.end()) w = it->second.weights();
    for (std::size_t j = 0; j < preds.size(); ++j) {
      os << "  r" << preds[j] << " -> r" << n.id;
      if (!w.empty()) {
        std::ostringstream lbl;
        lbl << std::setprecision(3) << w[j];
        os << " [label=\"" << lbl.str() << "\"]";
      }
      os << ";\n";
    }
  }
  os << "}\n";
  return os.str();
}

}  // namespace mtlevo
