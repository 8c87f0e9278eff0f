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
#include "mtlevo/genome.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "mtlevo/error.hpp"

namespace mtlevo {

using nlohmann::json;

std::string_view to_string(GeneKind kind) {
  return kind == GeneKind::kDense ? "dense" : "conv2d";
}

std::string_view to_string(WeightInit init) {
  return init == WeightInit::kGlorot ? "glorot" : "he";
}

std::string_view to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::kEnabled: return "enabled";
    case SharingMode::kDisabled: return "disabled";
    case SharingMode::kEvolved: return "evolved";
  }
  return "evolved";
}

GeneKind gene_kind_from_string(std::string_view name) {
  if (name == "dense") return GeneKind::kDense;
  if (name == "conv2d") return GeneKind::kConv2d;
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

WeightInit weight_init_from_string(std::string_view name) {
  if (name == "glorot") return WeightInit::kGlorot;
  if (name == "he") return WeightInit::kHe;
  throw ConfigError("unknown weight init '" + std::string(name) + "'");
}

SharingMode sharing_mode_from_string(std::string_view name) {
  if (name == "enabled") return SharingMode::kEnabled;
  if (name == "disabled") return SharingMode::kDisabled;
  if (name == "evolved") return SharingMode::kEvolved;
  throw ConfigError("unknown sharing mode '" + std::string(name) + "'");
}

namespace {

// Every numeric hyperparameter is mutated and compared in [0, 1].
double norm_filters(int f) {
  return double(f - ranges::kMinFilters) / (ranges::kMaxFilters - ranges::kMinFilters);
}
int denorm_filters(double u) {
  return ranges::kMinFilters +
         int(std::lround(std::clamp(u, 0.0, 1.0) * (ranges::kMaxFilters - ranges::kMinFilters)));
}
double norm_log(double x, double lo, double hi) {
  return (std::log10(x) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
}
double denorm_log(double u, double lo, double hi) {
  u = std::clamp(u, 0.0, 1.0);
  double v = std::pow(10.0, std::log10(lo) + u * (std::log10(hi) - std::log10(lo)));
  return std::clamp(v, lo, hi);
}
double norm_kernel(int k) { return (k - 1) / 4.0; }
int denorm_kernel(double u) {
  return 1 + 2 * int(std::lround(std::clamp(u, 0.0, 1.0) * 2.0));
}
double norm_int(int v, int lo, int hi) { return double(v - lo) / (hi - lo); }
int denorm_int(double u, int lo, int hi) {
  return lo + int(std::lround(std::clamp(u, 0.0, 1.0) * (hi - lo)));
}

double jitter(double u, double sigma, Rng& rng) {
  return std::clamp(u + sigma * standard_normal(rng), 0.0, 1.0);
}

Activation random_activation(Rng& rng, bool allow_linear) {
  std::size_t n = kEvolvableActivations.size() + (allow_linear ? 1 : 0);
  std::size_t i = uniform_index(rng, n);
  return i < kEvolvableActivations.size() ? kEvolvableActivations[i] : Activation::kLinear;
}

void perturb_gene(LayerGene& g, bool tail, double sigma, Rng& rng) {
  if (tail) {
    switch (uniform_index(rng, 3)) {
      case 0: g.kernel_size = denorm_kernel(jitter(norm_kernel(g.kernel_size), sigma, rng)); break;
      case 1: g.activation = random_activation(rng, true); break;
      default:
        g.dropout_rate = jitter(g.dropout_rate / ranges::kMaxDropout, sigma, rng) * ranges::kMaxDropout;
    }
    return;
  }
  switch (uniform_index(rng, 6)) {
    case 0: g.kind = uniform_index(rng, 2) == 0 ? GeneKind::kDense : GeneKind::kConv2d; break;
    case 1: g.activation = random_activation(rng, false); break;
    case 2: g.kernel_size = denorm_kernel(jitter(norm_kernel(g.kernel_size), sigma, rng)); break;
    case 3: g.filters = denorm_filters(jitter(norm_filters(g.filters), sigma, rng)); break;
    case 4:
      g.l2_strength = denorm_log(
          jitter(norm_log(g.l2_strength, ranges::kMinL2, ranges::kMaxL2), sigma, rng),
          ranges::kMinL2, ranges::kMaxL2);
      break;
    default:
      g.dropout_rate = jitter(g.dropout_rate / ranges::kMaxDropout, sigma, rng) * ranges::kMaxDropout;
  }
}

double gene_difference(const LayerGene& a, const LayerGene& b) {
  double d = 0;
  d += a.kind != b.kind ? 1.0 : 0.0;
  d += a.activation != b.activation ? 1.0 : 0.0;
  d += std::abs(norm_kernel(a.kernel_size) - norm_kernel(b.kernel_size));
  d += std::abs(norm_filters(a.filters) - norm_filters(b.filters));
  d += std::abs(norm_log(a.l2_strength, ranges::kMinL2, ranges::kMaxL2) -
                norm_log(b.l2_strength, ranges::kMinL2, ranges::kMaxL2));
  d += std::abs(a.dropout_rate - b.dropout_rate) / ranges::kMaxDropout;
  return d / 6.0;
}

// Counts genes (node ids and edge innovations) present in exactly one graph.
template <typename P>
std::pair<std::size_t, std::size_t> mismatched_genes(const Dag<P>& a, const Dag<P>& b) {
  std::set<std::int64_t> ga, gb;
  for (const auto& n : a.nodes) ga.insert(n.id);
  for (const auto& n : b.nodes) gb.insert(n.id);
  // Edge innovations and node ids come from one counter, so they never clash.
  for (const auto& e : a.edges) ga.insert(e.innovation);
  for (const auto& e : b.edges) gb.insert(e.innovation);
  std::size_t mismatched = 0;
  for (auto g : ga) mismatched += gb.count(g) == 0 ? 1 : 0;
  for (auto g : gb) mismatched += ga.count(g) == 0 ? 1 : 0;
  return {mismatched, std::max(ga.size(), gb.size())};
}

template <typename P>
bool try_add_edge(Dag<P>& dag, InnovationTracker& tracker, Rng& rng) {
  auto candidates = dag.addable_edges();
  if (candidates.empty()) return false;
  auto [from, to] = candidates[uniform_index(rng, candidates.size())];
  dag.edges.push_back({tracker.edge(from, to), from, to});
  return true;
}

template <typename P>
const P* matching_payload(const Dag<P>& dag, NodeId id) {
  auto idx = dag.index_of(id);
  return idx ? &dag.nodes[*idx].payload : nullptr;
}

}  // namespace

LayerGene random_layer_gene(Innovation innovation, Rng& rng) {
  LayerGene g;
  g.innovation = innovation;
  g.kind = uniform_index(rng, 2) == 0 ? GeneKind::kDense : GeneKind::kConv2d;
  g.activation = random_activation(rng, false);
  g.kernel_size = ranges::kKernelSizes[uniform_index(rng, ranges::kKernelSizes.size())];
  g.filters = denorm_filters(uniform01(rng));
  g.l2_strength = denorm_log(uniform01(rng), ranges::kMinL2, ranges::kMaxL2);
  g.dropout_rate = uniform01(rng) * ranges::kMaxDropout;
  return g;
}

GlobalHyper random_global_hyper(SharingMode mode, Rng& rng) {
  GlobalHyper h;
  h.learning_rate = denorm_log(uniform01(rng), ranges::kMinLearningRate, ranges::kMaxLearningRate);
  h.final_layer_filters = denorm_filters(uniform01(rng));
  h.weight_init = uniform_index(rng, 2) == 0 ? WeightInit::kGlorot : WeightInit::kHe;
  h.module_count = ranges::kMinModules +
                   int(uniform_index(rng, ranges::kMaxModules - ranges::kMinModules + 1));
  h.depth = ranges::kMinDepth + int(uniform_index(rng, ranges::kMaxDepth - ranges::kMinDepth + 1));
  h.depth_flags.assign(std::size_t(h.depth), true);
  for (std::size_t d = 0; d < h.depth_flags.size(); ++d) h.depth_flags[d] = bernoulli(rng, 0.5);
  h.sharing_mode = mode;
  return h;
}

ModuleGenome minimal_module(bool cmtr, InnovationTracker& tracker, Rng& rng) {
  ModuleGenome g;
  g.cmtr = cmtr;
  g.graph.nodes = {{kSourceId, std::nullopt}, {kSinkId, std::nullopt}};
  g.graph.edges = {{tracker.edge(kSourceId, kSinkId), kSourceId, kSinkId}};
  NodeId id = split_edge(g.graph, 0, std::optional<LayerGene>{}, tracker);
  g.graph.node(id).payload = random_layer_gene(id, rng);
  g.share_flag = bernoulli(rng, 0.5);
  return g;
}

BlueprintGenome minimal_blueprint(const std::vector<int>& species, InnovationTracker& tracker,
                                  Rng& rng) {
  if (species.empty()) throw ConfigError("blueprint needs at least one module species");
  BlueprintGenome g;
  for (NodeId id : {kSourceId, kSinkId}) {
    g.graph.nodes.push_back(
        {id, BlueprintNode{species[uniform_index(rng, species.size())], bernoulli(rng, 0.5)}});
  }
  g.graph.edges = {{tracker.edge(kSourceId, kSinkId), kSourceId, kSinkId}};
  return g;
}

ModuleGenome mutate(const ModuleGenome& genome, const MutationConfig& cfg,
                    InnovationTracker& tracker, Rng& rng) {
  ModuleGenome g = genome;
  if (bernoulli(rng, cfg.add_node) && g.internal_node_count() < cfg.max_module_nodes) {
    std::size_t e = uniform_index(rng, g.graph.edges.size());
    NodeId id = split_edge(g.graph, e, std::optional<LayerGene>{}, tracker);
    g.graph.node(id).payload = random_layer_gene(id, rng);
  }
  if (bernoulli(rng, cfg.add_edge)) try_add_edge(g.graph, tracker, rng);
  if (bernoulli(rng, cfg.perturb)) {
    std::vector<LayerGene*> genes;
    for (auto& n : g.graph.nodes) {
      if (n.payload) genes.push_back(&*n.payload);
    }
    std::size_t choices = genes.size() + (g.cmtr ? 1 : 0);
    std::size_t pick = uniform_index(rng, choices);
    if (pick < genes.size()) {
      perturb_gene(*genes[pick], false, cfg.perturb_sigma, rng);
    } else {
      perturb_gene(g.final_layer, true, cfg.perturb_sigma, rng);
    }
  }
  if (cfg.sharing_mode == SharingMode::kEvolved && bernoulli(rng, cfg.flag_flip)) {
    g.share_flag = !g.share_flag;
  }
  return g;
}

BlueprintGenome mutate(const BlueprintGenome& genome, const MutationConfig& cfg,
                       InnovationTracker& tracker, const std::vector<int>& live_species,
                       Rng& rng) {
  if (live_species.empty()) throw ConfigError("blueprint mutation needs a live species");
  BlueprintGenome g = genome;
  auto random_node = [&] {
    return BlueprintNode{live_species[uniform_index(rng, live_species.size())],
                         bernoulli(rng, 0.5)};
  };
  if (bernoulli(rng, cfg.add_node) && g.graph.nodes.size() < cfg.max_blueprint_nodes) {
    split_edge(g.graph, uniform_index(rng, g.graph.edges.size()), random_node(), tracker);
  }
  if (bernoulli(rng, cfg.add_edge)) try_add_edge(g.graph, tracker, rng);
  if (bernoulli(rng, cfg.perturb)) {
    auto& node = g.graph.nodes[uniform_index(rng, g.graph.nodes.size())];
    node.payload.species = live_species[uniform_index(rng, live_species.size())];
  }
  if (cfg.sharing_mode == SharingMode::kEvolved && bernoulli(rng, cfg.flag_flip)) {
    auto& node = g.graph.nodes[uniform_index(rng, g.graph.nodes.size())];
    node.payload.share_flag = !node.payload.share_flag;
  }
  return g;
}

GlobalHyper mutate(const GlobalHyper& hyper, const MutationConfig& cfg, Rng& rng) {
  GlobalHyper h = hyper;
  const double s = cfg.perturb_sigma;
  if (bernoulli(rng, cfg.perturb)) {
    switch (uniform_index(rng, 5)) {
      case 0:
        h.learning_rate = denorm_log(
            jitter(norm_log(h.learning_rate, ranges::kMinLearningRate, ranges::kMaxLearningRate),
                   s, rng),
            ranges::kMinLearningRate, ranges::kMaxLearningRate);
        break;
      case 1: h.final_layer_filters = denorm_filters(jitter(norm_filters(h.final_layer_filters), s, rng)); break;
      case 2: h.weight_init = h.weight_init == WeightInit::kGlorot ? WeightInit::kHe : WeightInit::kGlorot; break;
      case 3:
        h.module_count = denorm_int(
            jitter(norm_int(h.module_count, ranges::kMinModules, ranges::kMaxModules), s, rng),
            ranges::kMinModules, ranges::kMaxModules);
        break;
      default: {
        h.depth = denorm_int(jitter(norm_int(h.depth, ranges::kMinDepth, ranges::kMaxDepth), s, rng),
                             ranges::kMinDepth, ranges::kMaxDepth);
        while (h.depth_flags.size() < std::size_t(h.depth)) h.depth_flags.push_back(bernoulli(rng, 0.5));
        h.depth_flags.resize(std::size_t(h.depth));
      }
    }
  }
  if (cfg.sharing_mode == SharingMode::kEvolved && bernoulli(rng, cfg.flag_flip)) {
    std::size_t d = uniform_index(rng, h.depth_flags.size());
    h.depth_flags[d] = !h.depth_flags[d];
  }
  return h;
}

std::size_t repair_species(BlueprintGenome& genome, const std::vector<int>& live_species,
                           Rng& rng) {
  if (live_species.empty()) throw ConfigError("no live module species");
  std::size_t changed = 0;
  for (auto& n : genome.graph.nodes) {
    if (std::find(live_species.begin(), live_species.end(), n.payload.species) ==
        live_species.end()) {
      n.payload.species = live_species[uniform_index(rng, live_species.size())];
      ++changed;
    }
  }
  return changed;
}

ModuleGenome crossover(const ModuleGenome& a, double fitness_a, const ModuleGenome& b,
                       double fitness_b, Rng& rng) {
  const bool a_fitter = fitness_a >= fitness_b;
  const ModuleGenome& fit = a_fitter ? a : b;
  const ModuleGenome& other = a_fitter ? b : a;
  ModuleGenome child = fit;
  for (auto& n : child.graph.nodes) {
    if (!n.payload) continue;
    const auto* p = matching_payload(other.graph, n.id);
    if (p && *p && bernoulli(rng, 0.5)) n.payload = *p;
  }
  if (bernoulli(rng, 0.5)) child.share_flag = other.share_flag;
  if (child.cmtr == other.cmtr && bernoulli(rng, 0.5)) child.final_layer = other.final_layer;
  return child;
}

BlueprintGenome crossover(const BlueprintGenome& a, double fitness_a, const BlueprintGenome& b,
                          double fitness_b, Rng& rng) {
  const bool a_fitter = fitness_a >= fitness_b;
  const BlueprintGenome& other = a_fitter ? b : a;
  BlueprintGenome child = a_fitter ? a : b;
  for (auto& n : child.graph.nodes) {
    const auto* p = matching_payload(other.graph, n.id);
    if (p && bernoulli(rng, 0.5)) n.payload = *p;
  }
  return child;
}

GlobalHyper crossover(const GlobalHyper& a, double fitness_a, const GlobalHyper& b,
                      double fitness_b, Rng& rng) {
  GlobalHyper child = fitness_a >= fitness_b ? a : b;
  const GlobalHyper& other = fitness_a >= fitness_b ? b : a;
  if (bernoulli(rng, 0.5)) child.learning_rate = other.learning_rate;
  if (bernoulli(rng, 0.5)) child.final_layer_filters = other.final_layer_filters;
  if (bernoulli(rng, 0.5)) child.weight_init = other.weight_init;
  if (bernoulli(rng, 0.5)) child.module_count = other.module_count;
  if (bernoulli(rng, 0.5)) {
    child.depth = other.depth;
    child.depth_flags = other.depth_flags;
  }
  return child;
}

AnyGenome crossover(const AnyGenome& a, double fitness_a, const AnyGenome& b, double fitness_b,
                    Rng& rng) {
  if (a.index() != b.index()) throw ConfigError("crossover between different genome kinds");
  return std::visit(
      [&](const auto& ga) -> AnyGenome {
        using G = std::decay_t<decltype(ga)>;
        return crossover(ga, fitness_a, std::get<G>(b), fitness_b, rng);
      },
      a);
}

double compatibility(const ModuleGenome& a, const ModuleGenome& b, const CompatibilityConfig& cfg) {
  auto [mismatched, n] = mismatched_genes(a.graph, b.graph);
  double diff = 0;
  std::size_t matches = 0;
  for (const auto& node : a.graph.nodes) {
    if (!node.payload) continue;
    const auto* p = matching_payload(b.graph, node.id);
    if (p && *p) {
      diff += gene_difference(*node.payload, **p);
      ++matches;
    }
  }
  if (a.cmtr && b.cmtr) {
    diff += gene_difference(a.final_layer, b.final_layer);
    ++matches;
  }
  double w = matches ? diff / double(matches) : 0.0;
  return cfg.c1 * double(mismatched) / double(std::max<std::size_t>(n, 1)) + cfg.c3 * w;
}

double compatibility(const BlueprintGenome& a, const BlueprintGenome& b,
                     const CompatibilityConfig& cfg) {
  auto [mismatched, n] = mismatched_genes(a.graph, b.graph);
  double diff = 0;
  std::size_t matches = 0;
  for (const auto& node : a.graph.nodes) {
    const auto* p = matching_payload(b.graph, node.id);
    if (!p) continue;
    diff += (node.payload.species != p->species ? 0.5 : 0.0) +
            (node.payload.share_flag != p->share_flag ? 0.5 : 0.0);
    ++matches;
  }
  double w = matches ? diff / double(matches) : 0.0;
  return cfg.c1 * double(mismatched) / double(std::max<std::size_t>(n, 1)) + cfg.c3 * w;
}

double compatibility(const GlobalHyper& a, const GlobalHyper& b, const CompatibilityConfig& cfg) {
  double d = 0;
  d += std::abs(norm_log(a.learning_rate, ranges::kMinLearningRate, ranges::kMaxLearningRate) -
                norm_log(b.learning_rate, ranges::kMinLearningRate, ranges::kMaxLearningRate));
  d += std::abs(norm_filters(a.final_layer_filters) - norm_filters(b.final_layer_filters));
  d += a.weight_init != b.weight_init ? 1.0 : 0.0;
  d += std::abs(norm_int(a.module_count, ranges::kMinModules, ranges::kMaxModules) -
                norm_int(b.module_count, ranges::kMinModules, ranges::kMaxModules));
  d += std::abs(norm_int(a.depth, ranges::kMinDepth, ranges::kMaxDepth) -
                norm_int(b.depth, ranges::kMinDepth, ranges::kMaxDepth));
  return cfg.c3 * d / 5.0;
}

std::string check_invariants(const LayerGene& g, bool tail) {
  auto fail = [&](const std::string& what) {
    return "gene " + std::to_string(g.innovation) + ": " + what;
  };
  if (!tail && std::find(kEvolvableActivations.begin(), kEvolvableActivations.end(),
                         g.activation) == kEvolvableActivations.end()) {
    return fail("activation not evolvable");
  }
  if (std::find(ranges::kKernelSizes.begin(), ranges::kKernelSizes.end(), g.kernel_size) ==
      ranges::kKernelSizes.end()) {
    return fail("kernel size " + std::to_string(g.kernel_size));
  }
  if (g.filters < ranges::kMinFilters || g.filters > ranges::kMaxFilters) {
    return fail("filters " + std::to_string(g.filters));
  }
  if (!(g.l2_strength >= ranges::kMinL2 && g.l2_strength <= ranges::kMaxL2)) {
    return fail("l2 strength out of range");
  }
  if (!(g.dropout_rate >= 0.0 && g.dropout_rate <= ranges::kMaxDropout)) {
    return fail("dropout out of range");
  }
  return {};
}

std::string check_invariants(const ModuleGenome& genome, const MutationConfig& cfg) {
  const auto& dag = genome.graph;
  if (std::string e = dag.validate(); !e.empty()) return e;
  if (dag.sources() != std::vector<NodeId>{kSourceId}) return "node 0 is not the source";
  if (dag.sinks() != std::vector<NodeId>{kSinkId}) return "node 1 is not the sink";
  for (const auto& n : dag.nodes) {
    bool pseudo = n.id == kSourceId || n.id == kSinkId;
    if (pseudo == n.payload.has_value()) {
      return "node " + std::to_string(n.id) + (pseudo ? " must not" : " must") + " hold a layer";
    }
    if (n.payload) {
      if (n.payload->innovation != n.id) return "gene innovation differs from its node id";
      if (std::string e = check_invariants(*n.payload); !e.empty()) return e;
    }
  }
  if (genome.internal_node_count() < 1) return "module has no layer";
  if (genome.internal_node_count() > cfg.max_module_nodes) return "too many internal nodes";
  if (std::string e = check_invariants(genome.final_layer, true); !e.empty()) return e;
  if (!genome.cmtr) {
    const LayerGene& t = genome.final_layer;
    if (t.kernel_size != 1 || t.activation != Activation::kLinear || t.dropout_rate != 0.0) {
      return "final layer must be a linear 1x1 conv outside CMTR mode";
    }
  }
  return {};
}

std::string check_invariants(const BlueprintGenome& genome, const MutationConfig& cfg) {
  if (std::string e = genome.graph.validate(); !e.empty()) return e;
  if (genome.graph.nodes.size() > cfg.max_blueprint_nodes) return "too many blueprint nodes";
  return {};
}

std::string check_invariants(const GlobalHyper& h) {
  if (!(h.learning_rate >= ranges::kMinLearningRate && h.learning_rate <= ranges::kMaxLearningRate)) {
    return "learning rate out of range";
  }
  if (h.final_layer_filters < ranges::kMinFilters || h.final_layer_filters > ranges::kMaxFilters) {
    return "final layer filters out of range";
  }
  if (h.module_count < ranges::kMinModules || h.module_count > ranges::kMaxModules) {
    return "module count out of range";
  }
  if (h.depth < ranges::kMinDepth || h.depth > ranges::kMaxDepth) return "depth out of range";
  if (h.depth_flags.size() != std::size_t(h.depth)) return "depth flag count differs from depth";
  return {};
}

// ---- serialization ----

namespace {

json gene_to_json(const LayerGene& g) {
  return json{{"innovation", g.innovation},      {"kind", to_string(g.kind)},
              {"activation", to_string(g.activation)}, {"kernel_size", g.kernel_size},
              {"filters", g.filters},            {"l2_strength", g.l2_strength},
              {"dropout_rate", g.dropout_rate}};
}

json edges_to_json(const std::vector<DagEdge>& edges) {
  json out = json::array();
  for (const auto& e : edges) {
    out.push_back({{"innovation", e.innovation}, {"from", e.from}, {"to", e.to}});
  }
  return out;
}

json module_to_json(const ModuleGenome& g) {
  json nodes = json::array();
  for (const auto& n : g.graph.nodes) {
    nodes.push_back({{"id", n.id}, {"layer", n.payload ? gene_to_json(*n.payload) : json()}});
  }
  return json{{"kind", "module"},
              {"nodes", nodes},
              {"edges", edges_to_json(g.graph.edges)},
              {"share_flag", g.share_flag},
              {"final_layer", gene_to_json(g.final_layer)},
              {"cmtr", g.cmtr},
              {"species_id", g.species_id}};
}

json blueprint_to_json(const BlueprintGenome& g) {
  json nodes = json::array();
  for (const auto& n : g.graph.nodes) {
    nodes.push_back(
        {{"id", n.id}, {"species", n.payload.species}, {"share_flag", n.payload.share_flag}});
  }
  return json{{"kind", "blueprint"}, {"nodes", nodes}, {"edges", edges_to_json(g.graph.edges)}};
}

json hyper_to_json(const GlobalHyper& h) {
  return json{{"kind", "global"},
              {"learning_rate", h.learning_rate},
              {"final_layer_filters", h.final_layer_filters},
              {"weight_init", to_string(h.weight_init)},
              {"module_count", h.module_count},
              {"depth", h.depth},
              {"depth_flags", h.depth_flags},
              {"sharing_mode", to_string(h.sharing_mode)}};
}

// Field access that reports the JSON path of whatever is wrong.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  Reader at(const std::string& key) const {
    if (!j_.is_object()) throw ParseError(path_ + ": expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) throw ParseError(path_ + ": missing field '" + key + "'");
    return Reader(*it, path_ + "/" + key);
  }
  Reader at(std::size_t i) const { return Reader(j_.at(i), path_ + "/" + std::to_string(i)); }
  std::size_t size() const {
    if (!j_.is_array()) throw ParseError(path_ + ": expected an array");
    return j_.size();
  }
  bool is_null() const { return j_.is_null(); }

  std::int64_t integer() const {
    if (!j_.is_number_integer()) throw ParseError(path_ + ": expected an integer");
    return j_.get<std::int64_t>();
  }
  double real() const {
    if (!j_.is_number()) throw ParseError(path_ + ": expected a number");
    return j_.get<double>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) throw ParseError(path_ + ": expected a boolean");
    return j_.get<bool>();
  }
  std::string text() const {
    if (!j_.is_string()) throw ParseError(path_ + ": expected a string");
    return j_.get<std::string>();
  }
  template <typename F>
  auto convert(F f) const {
    try {
      return f(text());
    } catch (const ConfigError& e) {
      throw ParseError(path_ + ": " + e.what());
    }
  }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
};

LayerGene gene_from(const Reader& r) {
  LayerGene g;
  g.innovation = r.at("innovation").integer();
  g.kind = r.at("kind").convert(gene_kind_from_string);
  g.activation = r.at("activation").convert(activation_from_string);
  g.kernel_size = int(r.at("kernel_size").integer());
  g.filters = int(r.at("filters").integer());
  g.l2_strength = r.at("l2_strength").real();
  g.dropout_rate = r.at("dropout_rate").real();
  return g;
}

std::vector<DagEdge> edges_from(const Reader& r) {
  std::vector<DagEdge> edges;
  for (std::size_t i = 0; i < r.size(); ++i) {
    Reader e = r.at(i);
    edges.push_back({e.at("innovation").integer(), e.at("from").integer(), e.at("to").integer()});
  }
  return edges;
}

ModuleGenome module_from(const Reader& r, RangeCheck check) {
  ModuleGenome g;
  Reader nodes = r.at("nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Reader n = nodes.at(i);
    Reader layer = n.at("layer");
    g.graph.nodes.push_back(
        {n.at("id").integer(), layer.is_null() ? std::nullopt : std::optional(gene_from(layer))});
  }
  g.graph.edges = edges_from(r.at("edges"));
  g.share_flag = r.at("share_flag").boolean();
  g.final_layer = gene_from(r.at("final_layer"));
  g.cmtr = r.at("cmtr").boolean();
  g.species_id = int(r.at("species_id").integer());
  MutationConfig loose;
  loose.max_module_nodes = std::size_t(-1);
  std::string e = check == RangeCheck::kEvolution ? check_invariants(g, loose) : g.graph.validate();
  if (e.empty() && check == RangeCheck::kStructural) {
    for (const auto& n : g.graph.nodes) {
      const bool endpoint = n.id == kSourceId || n.id == kSinkId;
      if (endpoint == n.payload.has_value()) e = "node " + std::to_string(n.id) + " has the wrong role";
    }
  }
  if (!e.empty()) throw ParseError(r.path() + ": invalid module: " + e);
  return g;
}

BlueprintGenome blueprint_from(const Reader& r) {
  BlueprintGenome g;
  Reader nodes = r.at("nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Reader n = nodes.at(i);
    g.graph.nodes.push_back({n.at("id").integer(),
                             BlueprintNode{int(n.at("species").integer()),
                                           n.at("share_flag").boolean()}});
  }
  g.graph.edges = edges_from(r.at("edges"));
  if (std::string e = g.graph.validate(); !e.empty()) {
    throw ParseError(r.path() + ": invalid blueprint: " + e);
  }
  return g;
}

GlobalHyper hyper_from(const Reader& r, RangeCheck check) {
  GlobalHyper h;
  h.learning_rate = r.at("learning_rate").real();
  h.final_layer_filters = int(r.at("final_layer_filters").integer());
  h.weight_init = r.at("weight_init").convert(weight_init_from_string);
  h.module_count = int(r.at("module_count").integer());
  h.depth = int(r.at("depth").integer());
  Reader flags = r.at("depth_flags");
  h.depth_flags.clear();
  for (std::size_t i = 0; i < flags.size(); ++i) h.depth_flags.push_back(flags.at(i).boolean());
  h.sharing_mode = r.at("sharing_mode").convert(sharing_mode_from_string);
  if (check == RangeCheck::kStructural) {
    if (h.final_layer_filters < 1) throw ParseError(r.path() + ": final layer filters must be positive");
    return h;
  }
  if (std::string e = check_invariants(h); !e.empty()) {
    throw ParseError(r.path() + ": invalid global hyperparameters: " + e);
  }
  return h;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("genome text: malformed at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

}  // namespace

std::string serialize(const ModuleGenome& genome) { return module_to_json(genome).dump(); }
std::string serialize(const BlueprintGenome& genome) { return blueprint_to_json(genome).dump(); }
std::string serialize(const GlobalHyper& hyper) { return hyper_to_json(hyper).dump(); }
std::string serialize(const AnyGenome& genome) {
  return std::visit([](const auto& g) { return serialize(g); }, genome);
}

AnyGenome deserialize(std::string_view text, RangeCheck check) {
  json j = parse_json(text);
  Reader r(j, "");
  std::string kind = r.at("kind").text();
  if (kind == "module") return module_from(r, check);
  if (kind == "blueprint") return blueprint_from(r);
  if (kind == "global") return hyper_from(r, check);
  throw ParseError("/kind: unknown genome kind '" + kind + "'");
}

namespace {
template <typename G>
G deserialize_as(std::string_view text, const char* name, RangeCheck check) {
  AnyGenome g = deserialize(text, check);
  if (!std::holds_alternative<G>(g)) throw ParseError(std::string("/kind: expected ") + name);
  return std::get<G>(std::move(g));
}
}  // namespace

ModuleGenome deserialize_module(std::string_view text, RangeCheck check) {
  return deserialize_as<ModuleGenome>(text, "module", check);
}
BlueprintGenome deserialize_blueprint(std::string_view text) {
  return deserialize_as<BlueprintGenome>(text, "blueprint", RangeCheck::kEvolution);
}
GlobalHyper deserialize_hyper(std::string_view text, RangeCheck check) {
  return deserialize_as<GlobalHyper>(text, "global", check);
}

}  // namespace mtlevo
