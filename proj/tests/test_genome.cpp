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
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "genome_oracle.hpp"
#include "mtlevo/error.hpp"
#include "mtlevo/genome.hpp"
#include "mtlevo/speciation.hpp"

namespace mtlevo {
namespace {

MutationConfig only(double add_node, double add_edge, double perturb, double flip) {
  MutationConfig c;
  c.add_node = add_node;
  c.add_edge = add_edge;
  c.perturb = perturb;
  c.flag_flip = flip;
  return c;
}

TEST(Dag, AddNodeOnChainGivesThreeNodeChain) {
  Rng rng(1);
  InnovationTracker tracker;
  BlueprintGenome g = minimal_blueprint({0}, tracker, rng);
  ASSERT_EQ(g.graph.nodes.size(), 2u);
  const Innovation old_edge = g.graph.edges[0].innovation;
  BlueprintGenome m = mutate(g, only(1, 0, 0, 0), tracker, {0}, rng);
  ASSERT_EQ(m.graph.nodes.size(), 3u);
  ASSERT_EQ(m.graph.edges.size(), 2u);
  NodeId mid = m.graph.nodes[2].id;
  EXPECT_TRUE(m.graph.has_edge(kSourceId, mid));
  EXPECT_TRUE(m.graph.has_edge(mid, kSinkId));
  std::set<Innovation> innovations;
  for (const auto& e : m.graph.edges) {
    EXPECT_NE(e.innovation, old_edge);
    innovations.insert(e.innovation);
  }
  EXPECT_EQ(innovations.size(), 2u);
  EXPECT_EQ(oracle::check_dag(m.graph), "");
}

TEST(Dag, TrackerReusesInnovationForSameOrigin) {
  InnovationTracker t;
  Innovation a = t.edge(3, 4);
  EXPECT_EQ(t.edge(3, 4), a);
  EXPECT_NE(t.edge(4, 3), a);
  NodeId n = t.split_node(a);
  EXPECT_EQ(t.split_node(a), n);
  EXPECT_NE(t.split_node(a, 1), n);
  EXPECT_NE(n, a);
}

TEST(Dag, SameSplitInTwoGenomesSharesIds) {
  Rng rng(2);
  InnovationTracker tracker;
  BlueprintGenome a = minimal_blueprint({0}, tracker, rng);
  BlueprintGenome b = a;
  a = mutate(a, only(1, 0, 0, 0), tracker, {0}, rng);
  b = mutate(b, only(1, 0, 0, 0), tracker, {0}, rng);
  EXPECT_EQ(a.graph.nodes[2].id, b.graph.nodes[2].id);
  EXPECT_EQ(a.graph.edges, b.graph.edges);
}

TEST(Dag, ValidateRejectsCycleAndSecondSource) {
  Dag<int> d;
  d.nodes = {{0, 0}, {1, 0}, {2, 0}};
  d.edges = {{5, 0, 2}, {6, 2, 1}};
  EXPECT_EQ(d.validate(), "");
  d.edges.push_back({7, 1, 2});
  EXPECT_NE(d.validate(), "");
  d.edges = {{5, 0, 1}};
  EXPECT_NE(d.validate(), "");  // node 2 isolated
}

TEST(Module, MinimalGenomeIsSourceLayerSink) {
  Rng rng(3);
  InnovationTracker tracker;
  ModuleGenome g = minimal_module(false, tracker, rng);
  EXPECT_EQ(g.graph.nodes.size(), 3u);
  EXPECT_EQ(g.internal_node_count(), 1u);
  EXPECT_EQ(check_invariants(g), "");
  EXPECT_EQ(oracle::check_module(g), "");
  EXPECT_EQ(g.final_layer.activation, Activation::kLinear);
  EXPECT_EQ(g.final_layer.kernel_size, 1);
}

TEST(Module, KernelPerturbationStaysInSet) {
  Rng rng(4);
  InnovationTracker tracker;
  ModuleGenome g = minimal_module(false, tracker, rng);
  g.graph.nodes[2].payload->kernel_size = 3;
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    g = mutate(g, only(0, 0, 1, 0), tracker, rng);
    int k = g.graph.nodes[2].payload->kernel_size;
    ASSERT_TRUE(k == 1 || k == 3 || k == 5) << k;
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Module, NodeCapHolds) {
  Rng rng(5);
  InnovationTracker tracker;
  ModuleGenome g = minimal_module(false, tracker, rng);
  for (int i = 0; i < 100; ++i) g = mutate(g, only(1, 0, 0, 0), tracker, rng);
  EXPECT_EQ(g.internal_node_count(), 8u);
  EXPECT_EQ(check_invariants(g), "");
}

TEST(Module, FlagFlipOnlyWhenEvolved) {
  Rng rng(6);
  InnovationTracker tracker;
  ModuleGenome g = minimal_module(false, tracker, rng);
  MutationConfig cfg = only(0, 0, 0, 1);
  cfg.sharing_mode = SharingMode::kEnabled;
  EXPECT_EQ(mutate(g, cfg, tracker, rng).share_flag, g.share_flag);
  cfg.sharing_mode = SharingMode::kEvolved;
  EXPECT_NE(mutate(g, cfg, tracker, rng).share_flag, g.share_flag);
}

TEST(Module, AddEdgeSkippedWhenGraphIsComplete) {
  Rng rng(7);
  InnovationTracker tracker;
  ModuleGenome g = minimal_module(false, tracker, rng);
  g = mutate(g, only(0, 1, 0, 0), tracker, rng);  // adds source -> sink
  ASSERT_EQ(g.graph.edges.size(), 3u);
  ModuleGenome h = mutate(g, only(0, 1, 0, 0), tracker, rng);
  EXPECT_EQ(h, g);
}

TEST(Hyper, MutationKeepsFlagsMatchingDepth) {
  Rng rng(8);
  GlobalHyper h = random_global_hyper(SharingMode::kEvolved, rng);
  for (int i = 0; i < 3000; ++i) {
    h = mutate(h, only(0, 0, 1, 0.5), rng);
    ASSERT_EQ(oracle::check_hyper(h), "");
  }
}

TEST(Fuzz, TenThousandOperatorsKeepInvariants) {
  Rng rng(9);
  MutationConfig cfg = only(0.3, 0.3, 0.5, 0.2);
  auto modules = init_module_population(12, 3, rng, true);
  std::vector<ModuleGenome> mg;
  for (auto& s : modules.species) {
    for (auto& m : s.members) mg.push_back(m.genome);
  }
  const std::vector<int> live{0, 1, 2};
  auto bps = init_blueprint_population(12, live, rng);
  std::vector<BlueprintGenome> bg;
  for (auto& m : bps.species[0].members) bg.push_back(m.genome);
  std::vector<GlobalHyper> hg;
  for (int i = 0; i < 12; ++i) hg.push_back(random_global_hyper(SharingMode::kEvolved, rng));

  int violations = 0;
  for (int op = 0; op < 12000; ++op) {
    std::size_t i = uniform_index(rng, 12), j = uniform_index(rng, 12);
    bool cross = bernoulli(rng, 0.3);
    double fi = uniform01(rng), fj = uniform01(rng);
    switch (op % 3) {
      case 0:
        mg[i] = cross ? crossover(mg[i], fi, mg[j], fj, rng) : mutate(mg[i], cfg, modules.tracker, rng);
        violations += !oracle::check_module(mg[i]).empty();
        break;
      case 1:
        bg[i] = cross ? crossover(bg[i], fi, bg[j], fj, rng) : mutate(bg[i], cfg, bps.tracker, live, rng);
        violations += !oracle::check_blueprint(bg[i], live).empty();
        break;
      default:
        hg[i] = cross ? crossover(hg[i], fi, hg[j], fj, rng) : mutate(hg[i], cfg, rng);
        violations += !oracle::check_hyper(hg[i]).empty();
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(Crossover, SelfCrossoverReturnsParent) {
  Rng rng(10);
  InnovationTracker tracker;
  ModuleGenome g = minimal_module(true, tracker, rng);
  for (int i = 0; i < 20; ++i) g = mutate(g, only(0.5, 0.5, 1, 0), tracker, rng);
  EXPECT_EQ(crossover(g, 0.3, g, 0.7, rng), g);
}

TEST(Crossover, DisjointGenesComeFromFitterParent) {
  Rng rng(11);
  InnovationTracker tracker;
  ModuleGenome base = minimal_module(false, tracker, rng);
  ModuleGenome big = base;
  for (int i = 0; i < 5; ++i) big = mutate(big, only(1, 1, 0, 0), tracker, rng);
  for (int trial = 0; trial < 50; ++trial) {
    ModuleGenome child = crossover(base, 0.2, big, 0.9, rng);
    EXPECT_EQ(child.graph.edges, big.graph.edges);
    ASSERT_EQ(child.graph.nodes.size(), big.graph.nodes.size());
    for (std::size_t n = 0; n < child.graph.nodes.size(); ++n) {
      EXPECT_EQ(child.graph.nodes[n].id, big.graph.nodes[n].id);
      if (!base.graph.has_node(child.graph.nodes[n].id)) {
        EXPECT_EQ(child.graph.nodes[n].payload, big.graph.nodes[n].payload);
      }
    }
  }
  // Ties go to the first parent.
  EXPECT_EQ(crossover(base, 0.5, big, 0.5, rng).graph.edges, base.graph.edges);
}

TEST(Crossover, MatchingGenesMixBothParents) {
  Rng rng(12);
  InnovationTracker tracker;
  ModuleGenome a = minimal_module(false, tracker, rng);
  ModuleGenome b = a;
  b.graph.nodes[2].payload->filters = a.graph.nodes[2].payload->filters == 8 ? 9 : 8;
  std::set<int> filters;
  for (int i = 0; i < 50; ++i) filters.insert(crossover(a, 1, b, 0, rng).graph.nodes[2].payload->filters);
  EXPECT_EQ(filters.size(), 2u);
}

TEST(Crossover, DifferentKindsRaiseConfigError) {
  Rng rng(13);
  InnovationTracker tracker;
  AnyGenome m = minimal_module(false, tracker, rng);
  AnyGenome b = minimal_blueprint({0}, tracker, rng);
  EXPECT_THROW(crossover(m, 0.1, b, 0.2, rng), ConfigError);
  EXPECT_NO_THROW(crossover(m, 0.1, m, 0.2, rng));
}

TEST(Compatibility, ZeroForIdenticalAndSymmetric) {
  Rng rng(14);
  InnovationTracker tracker;
  ModuleGenome a = minimal_module(false, tracker, rng);
  ModuleGenome b = a;
  for (int i = 0; i < 6; ++i) b = mutate(b, only(0.5, 0.5, 1, 0), tracker, rng);
  CompatibilityConfig c;
  EXPECT_DOUBLE_EQ(compatibility(a, a, c), 0.0);
  EXPECT_DOUBLE_EQ(compatibility(a, b, c), compatibility(b, a, c));
  EXPECT_GT(compatibility(a, b, c), 0.0);
}

TEST(Compatibility, StructuralTermCountsMismatchedGenes) {
  Rng rng(15);
  InnovationTracker tracker;
  BlueprintGenome a = minimal_blueprint({0}, tracker, rng);
  a.graph.nodes[0].payload = a.graph.nodes[1].payload = {0, true};
  BlueprintGenome b = mutate(a, only(1, 0, 0, 0), tracker, {0}, rng);
  b.graph.nodes[2].payload = {0, true};
  // a: nodes {0,1}, edge e0.  b: nodes {0,1,n}, edges e1,e2.  Mismatched:
  // e0, n, e1, e2 = 4; N = max(3, 5) = 5.
  EXPECT_NEAR(compatibility(a, b, {}), 4.0 / 5.0, 1e-12);
}

TEST(Population, FiftyModulesInFourSpecies) {
  Rng rng(16);
  auto pop = init_module_population(50, 4, rng, false);
  EXPECT_EQ(pop.size(), 50u);
  EXPECT_EQ(pop.species.size(), 4u);
  for (const auto& s : pop.species) {
    for (const auto& m : s.members) {
      EXPECT_EQ(m.genome.species_id, s.id);
      EXPECT_EQ(m.genome.internal_node_count(), 1u);
    }
  }
}

TEST(Population, SingleModule) {
  Rng rng(17);
  auto pop = init_module_population(1, 1, rng, false);
  EXPECT_EQ(pop.species.size(), 1u);
  EXPECT_EQ(pop.size(), 1u);
  EXPECT_THROW(init_module_population(2, 3, rng, false), ConfigError);
}

TEST(Population, SameSeedSamePopulation) {
  Rng r1(18), r2(18);
  auto a = init_module_population(25, 2, r1, true);
  auto b = init_module_population(25, 2, r2, true);
  ASSERT_EQ(a.species.size(), b.species.size());
  for (std::size_t s = 0; s < a.species.size(); ++s) {
    ASSERT_EQ(a.species[s].members.size(), b.species[s].members.size());
    for (std::size_t m = 0; m < a.species[s].members.size(); ++m) {
      EXPECT_EQ(a.species[s].members[m].genome, b.species[s].members[m].genome);
    }
  }
}

TEST(Population, BlueprintsAverageFiveNodes) {
  Rng rng(19);
  auto pop = init_blueprint_population(1000, {0, 1, 2, 3}, rng);
  double total = 0;
  for (const auto& m : pop.species[0].members) {
    total += double(m.genome.graph.nodes.size());
    ASSERT_EQ(oracle::check_blueprint(m.genome, {0, 1, 2, 3}), "");
  }
  double mean = total / 1000.0;
  EXPECT_GE(mean, 4.5);
  EXPECT_LE(mean, 5.5);
}

TEST(Population, TwentyBlueprintsOneSpecies) {
  Rng rng(20);
  auto pop = init_blueprint_population(20, {0, 1}, rng);
  EXPECT_EQ(pop.size(), 20u);
  EXPECT_EQ(pop.species.size(), 1u);
}

TEST(Allocation, LargestRemainderConservesTotal) {
  EXPECT_EQ(allocate_offspring({1, 1, 1}, {1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(allocate_offspring({0, 0}, {3, 1}, 8), (std::vector<std::size_t>{6, 2}));
  EXPECT_EQ(allocate_offspring({0.9, 0.1}, {5, 5}, 10), (std::vector<std::size_t>{9, 1}));
}

SpeciesPopulation<ModuleGenome> scored_population(std::uint64_t seed, double f0, double f_rest) {
  Rng rng(seed);
  auto pop = init_module_population(30, 3, rng, false);
  for (auto& s : pop.species) {
    for (auto& m : s.members) m.fitness = s.id == 0 ? f0 : f_rest;
  }
  return pop;
}

TEST(Reproduce, ConservesPopulationSize) {
  Rng rng(21);
  auto pop = scored_population(21, 0.5, 0.5);
  SpeciationConfig cfg;
  cfg.target_species = 3;
  auto ops = module_ops({}, {});
  for (int gen = 0; gen < 8; ++gen) {
    std::size_t before = pop.size();
    for (auto& s : pop.species) {
      for (auto& m : s.members) m.fitness = uniform01(rng);
    }
    pop = speciate_and_reproduce(pop, cfg, ops, rng);
    EXPECT_EQ(pop.size(), before);
    EXPECT_EQ(pop.generation, std::size_t(gen + 1));
    for (const auto& s : pop.species) {
      EXPECT_FALSE(s.members.empty());
      for (const auto& m : s.members) EXPECT_EQ(oracle::check_module(m.genome), "");
    }
  }
}

TEST(Reproduce, EqualFitnessGivesCountsProportionalToSizes) {
  Rng rng(22);
  auto pop = scored_population(22, 0.4, 0.4);
  // Make species sizes unequal: 16, 8, 6.
  auto& s0 = pop.species[0].members;
  for (int i = 0; i < 6; ++i) {
    s0.push_back(pop.species[1].members.back());
    pop.species[1].members.pop_back();
  }
  for (int i = 0; i < 4; ++i) {
    s0.push_back(pop.species[2].members.back());
    pop.species[2].members.pop_back();
  }
  std::vector<double> sums;
  std::vector<std::size_t> sizes;
  for (auto& s : pop.species) {
    sums.push_back(0.4 * double(s.members.size()));
    sizes.push_back(s.members.size());
  }
  auto counts = allocate_offspring(sums, sizes, pop.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    EXPECT_LE(std::abs(double(counts[i]) - double(sizes[i])), 1.0);
  }
}

TEST(Reproduce, DominantSpeciesGetsLargestShare) {
  Rng rng(23);
  auto pop = scored_population(23, 0.9, 0.05);
  SpeciationConfig cfg;
  cfg.target_species = 3;
  // Distances between minimal modules stay far below the threshold, so the
  // offspring of species 0 remain in species 0.
  auto next = speciate_and_reproduce(pop, cfg, module_ops({}, {}), rng);
  std::map<int, std::size_t> sizes;
  for (const auto& s : next.species) sizes[s.id] = s.members.size();
  for (const auto& [id, n] : sizes) {
    if (id != 0) EXPECT_GT(sizes[0], n);
  }
}

TEST(Reproduce, ElitesSurviveUnchanged) {
  Rng rng(24);
  auto pop = scored_population(24, 0.5, 0.5);
  pop.species[1].members[3].fitness = 1.0;
  ModuleGenome best = pop.species[1].members[3].genome;
  SpeciationConfig cfg;
  cfg.target_species = 3;
  auto next = speciate_and_reproduce(pop, cfg, module_ops({}, {}), rng);
  bool found = false;
  for (const auto& s : next.species) {
    for (const auto& m : s.members) found = found || m.genome == best;
  }
  EXPECT_TRUE(found);
}

TEST(Reproduce, ErrorsOnEmptyOrUnscored) {
  Rng rng(25);
  SpeciesPopulation<ModuleGenome> empty;
  EXPECT_THROW(speciate_and_reproduce(empty, {}, module_ops({}, {}), rng), StateError);
  auto pop = init_module_population(4, 1, rng, false);
  EXPECT_THROW(speciate_and_reproduce(pop, {}, module_ops({}, {}), rng), StateError);
  EXPECT_THROW(pop.set_fitness(pop.species[0].members[0].uid, 1.5), ConfigError);
}

TEST(Reproduce, ThresholdMovesTowardTarget) {
  Rng rng(26);
  auto pop = scored_population(26, 0.5, 0.5);
  SpeciationConfig cfg;
  pop.target_species = 10;
  auto next = speciate_and_reproduce(pop, cfg, module_ops({}, {}), rng);
  EXPECT_NEAR(next.threshold, 2.9, 1e-12);
}

TEST(Serialize, RoundTripAllKinds) {
  Rng rng(27);
  InnovationTracker tracker;
  MutationConfig cfg = only(0.5, 0.5, 1, 0.5);
  for (int i = 0; i < 50; ++i) {
    ModuleGenome m = minimal_module(i % 2 == 0, tracker, rng);
    for (int k = 0; k < i % 7; ++k) m = mutate(m, cfg, tracker, rng);
    EXPECT_EQ(deserialize_module(serialize(m)), m);
    BlueprintGenome b = minimal_blueprint({1, 4}, tracker, rng);
    for (int k = 0; k < i % 5; ++k) b = mutate(b, cfg, tracker, {1, 4}, rng);
    EXPECT_EQ(deserialize_blueprint(serialize(b)), b);
    GlobalHyper h = random_global_hyper(SharingMode::kEvolved, rng);
    EXPECT_EQ(deserialize_hyper(serialize(h)), h);
    EXPECT_EQ(serialize(deserialize(serialize(AnyGenome(h)))), serialize(h));
  }
}

TEST(Serialize, TextIsCanonical) {
  Rng rng(28);
  InnovationTracker tracker;
  ModuleGenome m = minimal_module(false, tracker, rng);
  std::string text = serialize(m);
  EXPECT_EQ(serialize(deserialize_module(text)), text);
  EXPECT_LT(text.find("\"cmtr\""), text.find("\"edges\""));  // sorted keys
}

TEST(Serialize, TruncatedInputIsParseError) {
  Rng rng(29);
  InnovationTracker tracker;
  std::string text = serialize(minimal_module(false, tracker, rng));
  for (std::size_t cut : {std::size_t(0), std::size_t(1), text.size() / 2, text.size() - 1}) {
    EXPECT_THROW(deserialize(text.substr(0, cut)), ParseError) << cut;
  }
}

TEST(Serialize, HandWrittenBlueprintIsTwoNodeChain) {
  const std::string text = R"({
    "kind": "blueprint",
    "nodes": [{"id": 0, "species": 2, "share_flag": true},
              {"id": 1, "species": 3, "share_flag": false}],
    "edges": [{"innovation": 2, "from": 0, "to": 1}]
  })";
  BlueprintGenome g = deserialize_blueprint(text);
  ASSERT_EQ(g.graph.nodes.size(), 2u);
  EXPECT_EQ(g.graph.nodes[0].payload, (BlueprintNode{2, true}));
  EXPECT_EQ(g.graph.nodes[1].payload, (BlueprintNode{3, false}));
  EXPECT_EQ(g.graph.successors(0), std::vector<NodeId>{1});
  EXPECT_EQ(oracle::check_dag(g.graph), "");
}

TEST(Serialize, HandWrittenModule) {
  const std::string text = R"({"kind": "module", "cmtr": false, "share_flag": true,
    "species_id": 0,
    "final_layer": {"innovation": 0, "kind": "conv2d", "activation": "linear",
                    "kernel_size": 1, "filters": 16, "l2_strength": 0.0001,
                    "dropout_rate": 0.0},
    "nodes": [{"id": 0, "layer": null}, {"id": 1, "layer": null},
              {"id": 3, "layer": {"innovation": 3, "kind": "conv2d",
                                  "activation": "elu", "kernel_size": 5,
                                  "filters": 12, "l2_strength": 1e-5,
                                  "dropout_rate": 0.25}}],
    "edges": [{"innovation": 4, "from": 0, "to": 3},
              {"innovation": 5, "from": 3, "to": 1}]})";
  ModuleGenome g = deserialize_module(text);
  EXPECT_EQ(g.internal_node_count(), 1u);
  const LayerGene& l = *g.graph.node(3).payload;
  EXPECT_EQ(l.activation, Activation::kElu);
  EXPECT_EQ(l.kernel_size, 5);
  EXPECT_EQ(l.filters, 12);
}

TEST(Serialize, ErrorsNameTheLocation) {
  const std::string bad = R"({"kind": "blueprint", "nodes": [{"id": 0, "species": 1}],
                              "edges": []})";
  try {
    deserialize(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("/nodes/0"), std::string::npos) << e.what();
  }
  try {
    deserialize("{\"kind\": ");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
  const std::string cyclic = R"({"kind": "blueprint",
    "nodes": [{"id": 0, "species": 0, "share_flag": true}, {"id": 1, "species": 0, "share_flag": true}],
    "edges": [{"innovation": 2, "from": 0, "to": 1}, {"innovation": 3, "from": 1, "to": 0}]})";
  EXPECT_THROW(deserialize(cyclic), ParseError);
  const std::string range = R"({"kind": "global", "learning_rate": 0.5, "final_layer_filters": 16,
    "weight_init": "he", "module_count": 3, "depth": 2, "depth_flags": [true, false],
    "sharing_mode": "evolved"})";
  EXPECT_THROW(deserialize(range), ParseError);
}

}  // namespace
}  // namespace mtlevo
