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

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mtlevo {

using NodeId = std::int64_t;
using Innovation = std::int64_t;

struct DagEdge {
  Innovation innovation = 0;
  NodeId from = 0;
  NodeId to = 0;
  bool operator==(const DagEdge&) const = default;
};

template <typename Payload>
struct DagNode {
  NodeId id = 0;
  Payload payload{};
  bool operator==(const DagNode&) const = default;
};

/// Directed graph with innovation-numbered nodes and edges. Structural
/// validity is not enforced on mutation; call validate() after edits.
template <typename Payload>
struct Dag {
  std::vector<DagNode<Payload>> nodes;
  std::vector<DagEdge> edges;

  bool operator==(const Dag&) const = default;

  std::optional<std::size_t> index_of(NodeId id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].id == id) return i;
    }
    return std::nullopt;
  }
  bool has_node(NodeId id) const { return index_of(id).has_value(); }
  const DagNode<Payload>& node(NodeId id) const { return nodes.at(*index_of(id)); }
  DagNode<Payload>& node(NodeId id) { return nodes.at(*index_of(id)); }

  bool has_edge(NodeId from, NodeId to) const {
    return std::any_of(edges.begin(), edges.end(),
                       [&](const DagEdge& e) { return e.from == from && e.to == to; });
  }

  std::vector<NodeId> predecessors(NodeId id) const {
    std::vector<NodeId> out;
    for (const DagEdge& e : edges) {
      if (e.to == id) out.push_back(e.from);
    }
    return out;
  }
  std::vector<NodeId> successors(NodeId id) const {
    std::vector<NodeId> out;
    for (const DagEdge& e : edges) {
      if (e.from == id) out.push_back(e.to);
    }
    return out;
  }

  /// True when a directed path from -> ... -> to exists (from == to counts).
  bool reaches(NodeId from, NodeId to) const {
    std::vector<NodeId> stack{from};
    std::vector<NodeId> seen;
    while (!stack.empty()) {
      NodeId n = stack.back();
      stack.pop_back();
      if (n == to) return true;
      if (std::find(seen.begin(), seen.end(), n) != seen.end()) continue;
      seen.push_back(n);
      for (NodeId s : successors(n)) stack.push_back(s);
    }
    return false;
  }

  std::vector<NodeId> sources() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes) {
      if (predecessors(n.id).empty()) out.push_back(n.id);
    }
    return out;
  }
  std::vector<NodeId> sinks() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes) {
      if (successors(n.id).empty()) out.push_back(n.id);
    }
    return out;
  }

  /// Kahn's algorithm; ties broken by node order. nullopt on a cycle.
  std::optional<std::vector<NodeId>> topological_order() const {
    std::map<NodeId, std::size_t> indegree;
    for (const auto& n : nodes) indegree[n.id] = 0;
    for (const DagEdge& e : edges) indegree[e.to] += 1;
    std::vector<NodeId> order;
    std::vector<bool> done(nodes.size(), false);
    while (order.size() < nodes.size()) {
      bool progressed = false;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (done[i] || indegree[nodes[i].id] != 0) continue;
        done[i] = true;
        progressed = true;
        order.push_back(nodes[i].id);
        for (const DagEdge& e : edges) {
          if (e.from == nodes[i].id) indegree[e.to] -= 1;
        }
        break;
      }
      if (!progressed) return std::nullopt;
    }
    return order;
  }

  /// Empty string when the graph is a connected DAG with exactly one source
  /// and one sink and every node on a source-to-sink path; otherwise the
  /// first violation found.
  std::string validate() const {
    if (nodes.empty()) return "graph has no nodes";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        if (nodes[i].id == nodes[j].id) return "duplicate node id " + std::to_string(nodes[i].id);
      }
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const DagEdge& e = edges[i];
      if (!has_node(e.from) || !has_node(e.to)) {
        return "edge " + std::to_string(e.innovation) + " references a missing node";
      }
      if (e.from == e.to) return "self loop on node " + std::to_string(e.from);
      for (std::size_t j = i + 1; j < edges.size(); ++j) {
        if (edges[j].innovation == e.innovation) {
          return "duplicate edge innovation " + std::to_string(e.innovation);
        }
        if (edges[j].from == e.from && edges[j].to == e.to) return "parallel edges";
      }
    }
    if (!topological_order()) return "graph has a cycle";
    const auto src = sources();
    const auto snk = sinks();
    if (src.size() != 1) return "expected one source, found " + std::to_string(src.size());
    if (snk.size() != 1) return "expected one sink, found " + std::to_string(snk.size());
    for (const auto& n : nodes) {
      if (!reaches(src[0], n.id) || !reaches(n.id, snk[0])) {
        return "node " + std::to_string(n.id) + " is not on a source-to-sink path";
      }
    }
    return {};
  }

  /// Edges (a, b) that can be added without a cycle or a duplicate.
  std::vector<std::pair<NodeId, NodeId>> addable_edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (const auto& a : nodes) {
      for (const auto& b : nodes) {
        if (a.id == b.id || has_edge(a.id, b.id)) continue;
        if (reaches(b.id, a.id)) continue;
        out.emplace_back(a.id, b.id);
      }
    }
    return out;
  }
};

/// Hands out innovation numbers so that the same structural change gets the
/// same number anywhere in a run.
class InnovationTracker {
 public:
  explicit InnovationTracker(std::int64_t next = 2) : next_(next) {}

  Innovation edge(NodeId from, NodeId to) {
    auto [it, inserted] = edges_.try_emplace({from, to}, next_);
    if (inserted) ++next_;
    return it->second;
  }

  /// Node created by splitting edge; attempt disambiguates a genome that
  /// splits the same edge again after an earlier split was undone.
  NodeId split_node(Innovation edge, int attempt = 0) {
    auto [it, inserted] = splits_.try_emplace({edge, attempt}, next_);
    if (inserted) ++next_;
    return it->second;
  }

  std::int64_t fresh() { return next_++; }
  std::int64_t next() const { return next_; }

 private:
  std::int64_t next_;
  std::map<std::pair<NodeId, NodeId>, Innovation> edges_;
  std::map<std::pair<Innovation, int>, NodeId> splits_;
};

/// NEAT split: removes edge, inserts node between its endpoints.
template <typename Payload>
NodeId split_edge(Dag<Payload>& dag, std::size_t edge_index, Payload payload,
                  InnovationTracker& tracker) {
  const DagEdge e = dag.edges.at(edge_index);
  int attempt = 0;
  NodeId id = tracker.split_node(e.innovation, attempt);
  while (dag.has_node(id)) id = tracker.split_node(e.innovation, ++attempt);
  dag.edges.erase(dag.edges.begin() + static_cast<std::ptrdiff_t>(edge_index));
  dag.nodes.push_back({id, std::move(payload)});
  dag.edges.push_back({tracker.edge(e.from, id), e.from, id});
  dag.edges.push_back({tracker.edge(id, e.to), id, e.to});
  return id;
}

}  // namespace mtlevo
