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
#include "mtlevo/speciation.hpp"

#include <numeric>

namespace mtlevo {

std::vector<std::size_t> allocate_offspring(const std::vector<double>& fitness_sums,
                                            const std::vector<std::size_t>& sizes,
                                            std::size_t total) {
  if (fitness_sums.size() != sizes.size() || sizes.empty()) {
    throw ConfigError("allocation needs one fitness sum per species");
  }
  std::vector<double> weights(fitness_sums);
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) {
    weights.assign(sizes.begin(), sizes.end());
    sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  }
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double quota = double(total) * weights[i] / sum;
    counts[i] = std::size_t(std::floor(quota));
    assigned += counts[i];
    remainders.emplace_back(quota - std::floor(quota), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) {
    counts[remainders[r % remainders.size()].second] += 1;
  }
  return counts;
}

GenomeOps<ModuleGenome> module_ops(const MutationConfig& mutation, const CompatibilityConfig& compat) {
  return {
      [mutation](const ModuleGenome& g, InnovationTracker& t, Rng& rng) {
        return mutate(g, mutation, t, rng);
      },
      [](const ModuleGenome& a, double fa, const ModuleGenome& b, double fb, Rng& rng) {
        return crossover(a, fa, b, fb, rng);
      },
      [compat](const ModuleGenome& a, const ModuleGenome& b) { return compatibility(a, b, compat); },
  };
}

GenomeOps<BlueprintGenome> blueprint_ops(const MutationConfig& mutation,
                                         const CompatibilityConfig& compat,
                                         std::vector<int> live_module_species) {
  return {
      [mutation, live = std::move(live_module_species)](const BlueprintGenome& g,
                                                        InnovationTracker& t, Rng& rng) {
        BlueprintGenome out = mutate(g, mutation, t, live, rng);
        repair_species(out, live, rng);
        return out;
      },
      [](const BlueprintGenome& a, double fa, const BlueprintGenome& b, double fb, Rng& rng) {
        return crossover(a, fa, b, fb, rng);
      },
      [compat](const BlueprintGenome& a, const BlueprintGenome& b) {
        return compatibility(a, b, compat);
      },
  };
}

GenomeOps<GlobalHyper> hyper_ops(const MutationConfig& mutation, const CompatibilityConfig& compat) {
  return {
      [mutation](const GlobalHyper& g, InnovationTracker&, Rng& rng) {
        return mutate(g, mutation, rng);
      },
      [](const GlobalHyper& a, double fa, const GlobalHyper& b, double fb, Rng& rng) {
        return crossover(a, fa, b, fb, rng);
      },
      [compat](const GlobalHyper& a, const GlobalHyper& b) { return compatibility(a, b, compat); },
  };
}

SpeciesPopulation<ModuleGenome> init_module_population(std::size_t count, std::size_t n_species,
                                                       Rng& rng, bool cmtr_mode,
                                                       const SpeciationConfig& cfg) {
  if (n_species < 1 || count < n_species) {
    throw ConfigError("module population needs count >= n_species >= 1");
  }
  InnovationTracker tracker;
  std::vector<ModuleGenome> genomes;
  for (std::size_t i = 0; i < count; ++i) genomes.push_back(minimal_module(cmtr_mode, tracker, rng));
  return make_population(std::move(genomes), n_species, n_species, cfg, std::move(tracker));
}

SpeciesPopulation<BlueprintGenome> init_blueprint_population(
    std::size_t count, const std::vector<int>& module_species, Rng& rng,
    const SpeciationConfig& cfg, const MutationConfig& mutation) {
  if (count < 1) throw ConfigError("blueprint population needs count >= 1");
  if (module_species.empty()) throw ConfigError("blueprints need module species");
  MutationConfig grow = mutation;
  grow.add_node = 1.0;
  grow.add_edge = 0.3;
  grow.perturb = 0.0;
  grow.flag_flip = 0.0;
  InnovationTracker tracker;
  std::vector<BlueprintGenome> genomes;
  for (std::size_t i = 0; i < count; ++i) {
    BlueprintGenome g = minimal_blueprint(module_species, tracker, rng);
    std::size_t target = std::min<std::size_t>(mutation.max_blueprint_nodes,
                                               std::size_t(poisson(rng, 3.0)) + 2);
    while (g.graph.nodes.size() < target) g = mutate(g, grow, tracker, module_species, rng);
    genomes.push_back(std::move(g));
  }
  return make_population(std::move(genomes), 1, 1, cfg, std::move(tracker));
}

SpeciesPopulation<GlobalHyper> init_hyper_population(std::size_t count, SharingMode mode,
                                                     Rng& rng, const SpeciationConfig& cfg) {
  if (count < 1) throw ConfigError("hyperparameter population needs count >= 1");
  std::vector<GlobalHyper> genomes;
  for (std::size_t i = 0; i < count; ++i) genomes.push_back(random_global_hyper(mode, rng));
  return make_population(std::move(genomes), 1, 1, cfg, InnovationTracker{});
}

}  // namespace mtlevo
