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

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtlevo/job.hpp"
#include "mtlevo/speciation.hpp"

namespace mtlevo {

/// Phenotype limits applied to each planned job. Genomes keep their full
/// ranges; only the copy handed to the evaluator is clamped. 0 = no limit.
struct BudgetCaps {
  int max_core_filters = 0;
  int max_module_count = 0;
  int max_depth = 0;
  int max_layer_filters = 0;
};

struct GenerationPlan {
  Algorithm algorithm = Algorithm::kCm;  // kCm, kCmsr or kCmtr
  std::size_t networks_per_generation = 16;
  TrainConfig train;  // CM and CMSR
  CtrConfig ctr;      // CMTR
  std::size_t max_generations = 10;
  std::size_t stagnation_limit = 10;
  DatasetRef dataset;
  std::uint64_t seed = 0;
  double deadline_s = 3600.0;
  BudgetCaps caps;
};

struct PopulationConfig {
  std::size_t module_count = 16;
  std::size_t module_species = 4;
  std::size_t blueprint_count = 10;
  std::size_t hyper_count = 8;
  SharingMode sharing = SharingMode::kEvolved;
  SpeciationConfig speciation;
  MutationConfig mutation;
};

struct Populations {
  SpeciesPopulation<ModuleGenome> modules;
  std::optional<SpeciesPopulation<BlueprintGenome>> blueprints;  // CMSR only
  SpeciesPopulation<GlobalHyper> hypers;
};

Populations init_populations(Algorithm algorithm, const PopulationConfig& cfg, Rng& rng);

/// networks_per_generation jobs. Members of each species (and blueprints,
/// and hyperparameter sets) are drawn without replacement until every one
/// has been used, then the draw restarts, so each genome lands in a job
/// whenever the job count allows it.
std::vector<Job> plan_generation(const GenerationPlan& plan, const Populations& pops,
                                 std::size_t generation, Rng& rng, std::uint64_t first_job_id = 0);

struct Attribution {
  std::map<std::uint64_t, double> modules;
  std::map<std::uint64_t, double> blueprints;
  std::map<std::uint64_t, double> hypers;
};

/// Mean fitness of the successful jobs containing each genome; genomes seen
/// only in failed jobs get 0.
Attribution tabulate_fitness(const std::vector<Job>& jobs, const std::vector<JobResult>& results);

/// Writes tabulate_fitness into the populations; members absent from every
/// job also get 0.
void attribute_fitness(const std::vector<Job>& jobs, const std::vector<JobResult>& results,
                       Populations& pops);

using Evaluator = std::function<std::vector<JobResult>(const std::vector<Job>&)>;

/// Sequential evaluate_local over the batch.
Evaluator local_evaluator();

struct HistoryRecord {
  std::size_t generation = 0;
  double best = 0.0;
  double best_so_far = 0.0;
  double mean = 0.0;
  std::uint64_t best_job_id = 0;
  std::size_t failed = 0;
  std::string best_genome;  // job payload of the generation's best network
};

std::string history_to_json(const HistoryRecord& record);
HistoryRecord history_from_json(std::string_view line);

struct EvaluatedJob {
  Job job;
  JobResult result;
};

struct CoevolveResult {
  std::vector<HistoryRecord> history;
  std::vector<EvaluatedJob> evaluated;
  Populations final_populations;
};

using LogFn = std::function<void(const std::string&)>;

/// Plan, evaluate, attribute and reproduce until max_generations or until
/// best_so_far has not improved for stagnation_limit generations. Each
/// record is also written to history_out as one JSON line.
CoevolveResult run_generation_loop(const GenerationPlan& plan, const PopulationConfig& cfg,
                                   Populations pops, const Evaluator& evaluator, Rng& rng,
                                   std::ostream* history_out = nullptr, const LogFn& log = {});

struct RetrainReport {
  Job best;
  std::vector<std::pair<std::uint64_t, double>> candidates;  // job id, long-run val
  std::vector<double> val_accuracy;
  std::vector<double> test_accuracy;
  double mean_val = 0.0;
  double mean_test = 0.0;
  std::size_t parameter_count = 0;
  std::optional<CtrCheckpoint> checkpoint;
};

/// Re-trains the n_top fittest successful configurations with the long
/// budget, picks the best by validation, then trains it from scratch with
/// peak-validation snapshots and reports test accuracy of the snapshot.
RetrainReport retrain_top(const std::vector<EvaluatedJob>& evaluated, std::size_t n_top,
                          const TrainConfig& long_train, const CtrConfig& long_ctr,
                          const MultitaskSpec& spec, std::uint64_t seed);

}  // namespace mtlevo
