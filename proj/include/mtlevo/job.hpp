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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlevo/dataset.hpp"
#include "mtlevo/genome.hpp"
#include "mtlevo/routing.hpp"
#include "mtlevo/training.hpp"

namespace mtlevo {

enum class Algorithm { kSingle, kSoft, kCm, kCmsr, kCtr, kCmtr };

std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);  // ConfigError when unknown

/// One self-contained evaluation: a worker needs nothing but this.
struct Job {
  std::uint64_t job_id = 0;
  Algorithm algorithm = Algorithm::kCm;
  std::uint64_t seed = 0;
  DatasetRef dataset;
  GlobalHyper hyper;
  /// CM and CMTR: ordered module set. CMSR: one module per entry of
  /// module_species. Baselines and CTR: unused.
  std::vector<ModuleGenome> modules;
  std::vector<int> module_species;
  std::optional<BlueprintGenome> blueprint;
  /// Layer used D times by the baselines.
  LayerGene baseline_layer;
  TrainConfig train;
  CtrConfig ctr;
  double deadline_s = 3600.0;

  // Population bookkeeping; not needed to evaluate.
  std::size_t generation = 0;
  std::vector<std::uint64_t> module_uids;
  std::optional<std::uint64_t> blueprint_uid;
  std::optional<std::uint64_t> hyper_uid;
};

enum class JobStatus { kOk, kFailed, kTimeout };

std::string_view to_string(JobStatus s);

struct JobResult {
  std::uint64_t job_id = 0;
  JobStatus status = JobStatus::kFailed;
  std::optional<double> fitness;  // present iff status == kOk
  std::vector<double> task_accuracy;
  double wall_time_s = 0.0;
  std::string worker_id;
  std::string message;
};

std::string job_to_json(const Job& job);
Job job_from_json(std::string_view text);
std::string result_to_json(const JobResult& result);
JobResult result_from_json(std::string_view text);

std::string dataset_to_json(const DatasetRef& ref);
DatasetRef dataset_from_json(std::string_view text);

struct JobOutcome {
  std::vector<double> val_accuracy;
  double fitness = 0.0;
  std::vector<double> test_accuracy;  // filled only when requested
  std::size_t parameter_count = 0;
  std::optional<CtrCheckpoint> checkpoint;  // CTR and CMTR
  std::vector<CtrHistoryRow> ctr_history;
};

/// Builds, trains and scores a job on spec. Fitness is the mean validation
/// accuracy (CTR/CMTR: best_avg_val of the run). with_test evaluates the
/// returned weights (CTR/CMTR: the checkpoint) on the test split.
JobOutcome run_job(const Job& job, const MultitaskSpec& spec, bool with_test = false,
                   const std::filesystem::path& checkpoint_path = {});

/// run_job on the job's own dataset; failures become a failed result.
JobResult evaluate_local(const Job& job, const std::string& worker_id = "local");

}  // namespace mtlevo
