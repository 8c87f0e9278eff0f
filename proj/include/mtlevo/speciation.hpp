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
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mtlevo/error.hpp"
#include "mtlevo/genome.hpp"

namespace mtlevo {

struct SpeciationConfig {
  CompatibilityConfig compat;
  double initial_threshold = 3.0;
  double threshold_step = 0.1;
  double min_threshold = 0.1;
  std::size_t target_species = 1;
  double elite_frac = 0.1;
  double crossover_prob = 0.2;
};

template <typename G>
struct Member {
  std::uint64_t uid = 0;
  G genome;
  std::optional<double> fitness;
};

template <typename G>
struct Species {
  int id = 0;
  G representative;
  std::vector<Member<G>> members;
};

template <typename G>
struct SpeciesPopulation {
  std::vector<Species<G>> species;
  std::size_t generation = 0;
  double threshold = 3.0;
  std::size_t target_species = 1;
  int next_species_id = 0;
  std::uint64_t next_uid = 0;
  InnovationTracker tracker;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : species) n += s.members.size();
    return n;
  }

  std::vector<int> species_ids() const {
    std::vector<int> ids;
    for (const auto& s : species) ids.push_back(s.id);
    return ids;
  }

  const Species<G>* find_species(int id) const {
    for (const auto& s : species) {
      if (s.id == id) return &s;
    }
    return nullptr;
  }

  Member<G>* find(std::uint64_t uid) {
    for (auto& s : species) {
      for (auto& m : s.members) {
        if (m.uid == uid) return &m;
      }
    }
    return nullptr;
  }
  const Member<G>* find(std::uint64_t uid) const {
    return const_cast<SpeciesPopulation*>(this)->find(uid);
  }

  void set_fitness(std::uint64_t uid, double fitness) {
    Member<G>* m = find(uid);
    if (!m) throw StateError("no population member " + std::to_string(uid));
    if (!(fitness >= 0.0 && fitness <= 1.0)) throw ConfigError("fitness must lie in [0, 1]");
    m->fitness = fitness;
  }
};

/// Variation operators for one genome kind, bound to whatever context they
/// need (mutation config, live module species, ...).
template <typename G>
struct GenomeOps {
  std::function<G(const G&, InnovationTracker&, Rng&)> mutate;
  std::function<G(const G&, double, const G&, double, Rng&)> crossover;
  std::function<double(const G&, const G&)> distance;
};

GenomeOps<ModuleGenome> module_ops(const MutationConfig& mutation, const CompatibilityConfig& compat);
GenomeOps<BlueprintGenome> blueprint_ops(const MutationConfig& mutation,
                                         const CompatibilityConfig& compat,
                                         std::vector<int> live_module_species);
GenomeOps<GlobalHyper> hyper_ops(const MutationConfig& mutation, const CompatibilityConfig& compat);

/// Offspring counts proportional to each species' summed fitness, rounded by
/// largest remainder so they add up to total. All-zero fitness falls back to
/// species sizes.
std::vector<std::size_t> allocate_offspring(const std::vector<double>& fitness_sums,
                                            const std::vector<std::size_t>& sizes,
                                            std::size_t total);

namespace detail {

template <typename G>
void tag_species(G& genome, int id) {
  if constexpr (requires { genome.species_id; }) genome.species_id = id;
}

/// Places each genome in the species of its parent when still compatible,
/// otherwise in the closest compatible species, otherwise in a new one.
template <typename G>
void assign(SpeciesPopulation<G>& pop, std::vector<std::pair<int, G>> genomes,
            const GenomeOps<G>& ops) {
  for (auto& [parent_species, genome] : genomes) {
    Species<G>* target = nullptr;
    if (pop.target_species == 1 && !pop.species.empty()) {
      target = &pop.species.front();
    }
    for (auto& s : pop.species) {
      if (target) break;
      if (s.id == parent_species && ops.distance(genome, s.representative) < pop.threshold) {
        target = &s;
      }
    }
    if (!target) {
      double best = pop.threshold;
      for (auto& s : pop.species) {
        double d = ops.distance(genome, s.representative);
        if (d < best) {
          best = d;
          target = &s;
        }
      }
    }
    if (!target) {
      pop.species.push_back({pop.next_species_id++, genome, {}});
      target = &pop.species.back();
    }
    tag_species(genome, target->id);
    target->members.push_back({pop.next_uid++, std::move(genome), std::nullopt});
  }
}

}  // namespace detail

/// Round-robin split of genomes into n_species species; the first member of
/// each species is its representative.
template <typename G>
SpeciesPopulation<G> make_population(std::vector<G> genomes, std::size_t n_species,
                                     std::size_t target_species, const SpeciationConfig& cfg,
                                     InnovationTracker tracker) {
  if (n_species < 1 || genomes.size() < n_species) {
    throw ConfigError("population needs count >= n_species >= 1");
  }
  SpeciesPopulation<G> pop;
  pop.threshold = cfg.initial_threshold;
  pop.target_species = target_species;
  pop.tracker = std::move(tracker);
  for (std::size_t s = 0; s < n_species; ++s) {
    detail::tag_species(genomes[s], int(s));
    pop.species.push_back({pop.next_species_id++, genomes[s], {}});
  }
  for (std::size_t i = 0; i < genomes.size(); ++i) {
    auto& sp = pop.species[i % n_species];
    detail::tag_species(genomes[i], sp.id);
    sp.members.push_back({pop.next_uid++, std::move(genomes[i]), std::nullopt});
  }
  return pop;
}

template <typename G>
SpeciesPopulation<G> speciate_and_reproduce(const SpeciesPopulation<G>& pop,
                                            const SpeciationConfig& cfg, const GenomeOps<G>& ops,
                                            Rng& rng) {
  const std::size_t total = pop.size();
  if (total == 0) throw StateError("cannot reproduce an empty population");
  std::vector<double> sums;
  std::vector<std::size_t> sizes;
  for (const auto& s : pop.species) {
    double sum = 0;
    for (const auto& m : s.members) {
      if (!m.fitness) throw StateError("member " + std::to_string(m.uid) + " has no fitness");
      sum += *m.fitness;
    }
    sums.push_back(sum);
    sizes.push_back(s.members.size());
  }
  const auto alloc = allocate_offspring(sums, sizes, total);

  SpeciesPopulation<G> next;
  next.generation = pop.generation + 1;
  next.threshold = pop.threshold;
  next.target_species = pop.target_species;
  next.next_species_id = pop.next_species_id;
  next.next_uid = pop.next_uid;
  next.tracker = pop.tracker;

  std::vector<std::pair<int, G>> offspring;
  for (std::size_t si = 0; si < pop.species.size(); ++si) {
    const auto& s = pop.species[si];
    std::vector<const Member<G>*> ranked;
    for (const auto& m : s.members) ranked.push_back(&m);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Member<G>* a, const Member<G>* b) { return *a->fitness > *b->fitness; });
    if (alloc[si] == 0 || ranked.empty()) continue;
    // The best member represents the species while the next generation is
    // assigned.
    next.species.push_back({s.id, ranked.front()->genome, {}});

    std::size_t elites = std::max<std::size_t>(
        1, std::size_t(std::floor(cfg.elite_frac * double(ranked.size()))));
    elites = std::min(elites, alloc[si]);
    for (std::size_t e = 0; e < elites; ++e) offspring.emplace_back(s.id, ranked[e]->genome);

    const std::size_t pool = std::max<std::size_t>(1, (ranked.size() + 1) / 2);
    for (std::size_t c = elites; c < alloc[si]; ++c) {
      const std::size_t i1 = uniform_index(rng, pool);
      const Member<G>& p1 = *ranked[i1];
      G child;
      if (pool >= 2 && bernoulli(rng, cfg.crossover_prob)) {
        std::size_t i2 = uniform_index(rng, pool - 1);
        if (i2 >= i1) ++i2;
        const Member<G>& p2 = *ranked[i2];
        child = ops.crossover(p1.genome, *p1.fitness, p2.genome, *p2.fitness, rng);
      } else {
        child = p1.genome;
      }
      offspring.emplace_back(s.id, ops.mutate(child, next.tracker, rng));
    }
  }
  detail::assign(next, std::move(offspring), ops);
  std::erase_if(next.species, [](const Species<G>& s) { return s.members.empty(); });

  if (next.species.size() < next.target_species) {
    next.threshold = std::max(cfg.min_threshold, next.threshold - cfg.threshold_step);
  } else if (next.species.size() > next.target_species) {
    next.threshold += cfg.threshold_step;
  }
  return next;
}

SpeciesPopulation<ModuleGenome> init_module_population(std::size_t count, std::size_t n_species,
                                                       Rng& rng, bool cmtr_mode,
                                                       const SpeciationConfig& cfg = {});

/// Each blueprint grows from a two-node chain until it holds
/// min(8, Poisson(3) + 2) nodes. One species.
SpeciesPopulation<BlueprintGenome> init_blueprint_population(
    std::size_t count, const std::vector<int>& module_species, Rng& rng,
    const SpeciationConfig& cfg = {}, const MutationConfig& mutation = {});

/// Global hyperparameters evolve as their own single-species population.
SpeciesPopulation<GlobalHyper> init_hyper_population(std::size_t count, SharingMode mode,
                                                     Rng& rng, const SpeciationConfig& cfg = {});

}  // namespace mtlevo
