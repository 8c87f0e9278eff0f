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

// Reference checks written without the library's own Dag helpers.

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mtlevo/genome.hpp"

namespace mtlevo::oracle {

/// Empty when edges over node_ids form a DAG with one source, one sink and
/// every node on a source-to-sink path.
inline std::string check_dag(const std::vector<std::int64_t>& node_ids,
                             const std::vector<std::pair<std::int64_t, std::int64_t>>& edges) {
  std::set<std::int64_t> ids(node_ids.begin(), node_ids.end());
  if (ids.size() != node_ids.size()) return "duplicate node";
  if (ids.empty()) return "empty";
  std::map<std::int64_t, std::vector<std::int64_t>> out, in;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (auto [a, b] : edges) {
    if (!ids.count(a) || !ids.count(b)) return "dangling edge";
    if (!seen.insert({a, b}).second) return "parallel edge";
    out[a].push_back(b);
    in[b].push_back(a);
  }
  // Three-colour DFS cycle check.
  std::map<std::int64_t, int> colour;
  bool cycle = false;
  std::function<void(std::int64_t)> dfs = [&](std::int64_t n) {
    colour[n] = 1;
    for (auto m : out[n]) {
      if (colour[m] == 1) cycle = true;
      if (colour[m] == 0) dfs(m);
    }
    colour[n] = 2;
  };
  for (auto n : ids) {
    if (colour[n] == 0) dfs(n);
  }
  if (cycle) return "cycle";
  std::vector<std::int64_t> sources, sinks;
  for (auto n : ids) {
    if (in[n].empty()) sources.push_back(n);
    if (out[n].empty()) sinks.push_back(n);
  }
  if (sources.size() != 1 || sinks.size() != 1) return "source/sink count";
  auto closure = [](std::int64_t start, std::map<std::int64_t, std::vector<std::int64_t>>& adj) {
    std::set<std::int64_t> reach{start};
    std::vector<std::int64_t> stack{start};
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      for (auto m : adj[n]) {
        if (reach.insert(m).second) stack.push_back(m);
      }
    }
    return reach;
  };
  auto fwd = closure(sources[0], out);
  auto back = closure(sinks[0], in);
  for (auto n : ids) {
    if (!fwd.count(n) || !back.count(n)) return "node off path";
  }
  return {};
}

template <typename P>
std::string check_dag(const Dag<P>& dag) {
  std::vector<std::int64_t> ids;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (const auto& n : dag.nodes) ids.push_back(n.id);
  for (const auto& e : dag.edges) edges.emplace_back(e.from, e.to);
  return check_dag(ids, edges);
}

inline bool gene_in_range(const LayerGene& g) {
  return (g.kernel_size == 1 || g.kernel_size == 3 || g.kernel_size == 5) && g.filters >= 8 &&
         g.filters <= 64 && g.l2_strength >= 1e-7 && g.l2_strength <= 1e-2 &&
         g.dropout_rate >= 0.0 && g.dropout_rate <= 0.5;
}

inline std::string check_module(const ModuleGenome& g) {
  if (auto e = check_dag(g.graph); !e.empty()) return e;
  std::size_t internal = 0;
  for (const auto& n : g.graph.nodes) {
    if (n.payload) {
      ++internal;
      if (!gene_in_range(*n.payload)) return "gene out of range";
    }
  }
  if (internal < 1 || internal > 8) return "internal node count";
  if (!gene_in_range(g.final_layer)) return "tail out of range";
  return {};
}

inline std::string check_blueprint(const BlueprintGenome& g, const std::vector<int>& live) {
  if (auto e = check_dag(g.graph); !e.empty()) return e;
  if (g.graph.nodes.size() > 8) return "too many nodes";
  for (const auto& n : g.graph.nodes) {
    if (std::find(live.begin(), live.end(), n.payload.species) == live.end()) return "dead species";
  }
  return {};
}

inline std::string check_hyper(const GlobalHyper& h) {
  if (!(h.learning_rate >= 1e-4 && h.learning_rate <= 1e-2)) return "lr";
  if (h.final_layer_filters < 8 || h.final_layer_filters > 64) return "filters";
  if (h.module_count < 2 || h.module_count > 6) return "K";
  if (h.depth < 2 || h.depth > 6) return "D";
  if (h.depth_flags.size() != std::size_t(h.depth)) return "F_d length";
  return {};
}

}  // namespace mtlevo::oracle
