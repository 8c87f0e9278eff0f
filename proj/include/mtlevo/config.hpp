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
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mtlevo/coevolve.hpp"
#include "mtlevo/job.hpp"

namespace mtlevo {

enum class Profile { kDesk, kPaper };

std::string_view to_string(Profile p);
Profile profile_from_string(std::string_view name);  // ConfigError when unknown

/// Everything a run needs. Serialized as one flat JSON object whose keys
/// are listed in config_keys().
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kCtr;
  Profile profile = Profile::kDesk;
  std::uint64_t seed = 0;
  DatasetRef dataset;

  std::size_t networks_per_generation = 16;
  std::size_t max_generations = 10;
  std::size_t stagnation_limit = 10;
  std::size_t train_iterations = 600;

  std::size_t meta_iterations = 40;
  std::size_t iterations_per_meta = 250;
  double alpha = 0.1;

  std::size_t module_population = 16;
  std::size_t module_species = 4;
  std::size_t blueprint_population = 10;
  std::size_t hyper_population = 8;
  SharingMode sharing = SharingMode::kEvolved;

  std::size_t n_top = 3;
  std::size_t retrain_iterations = 3000;
  std::size_t retrain_meta_iterations = 40;
  bool retrain_lr_decay = false;

  // Fixed architecture for the baselines and CTR.
  int filters = 8;
  int depth = 4;
  int module_count = 4;
  double learning_rate = 1e-3;
  WeightInit weight_init = WeightInit::kHe;

  BudgetCaps caps;
  double deadline_s = 3600.0;
  /// Empty: evaluate in process. Otherwise the bind address of a coordinator.
  std::string coordinator;
  double connect_timeout_s = 600.0;
};

/// Defaults for an algorithm under a profile.
ExperimentConfig profile_defaults(Algorithm algorithm, Profile profile);

/// Starts from profile_defaults of the object's algorithm and profile
/// (ConfigError when algorithm is missing), then applies every other key.
/// Unknown keys and invalid values are ConfigError.
ExperimentConfig resolve_config(const nlohmann::json& flat);

nlohmann::json config_to_json(const ExperimentConfig& cfg);

const std::vector<std::string>& config_keys();

void validate(const ExperimentConfig& cfg);  // ConfigError

GenerationPlan make_plan(const ExperimentConfig& cfg);
PopulationConfig make_population_config(const ExperimentConfig& cfg);
/// The single job a baseline or CTR run evaluates.
Job make_fixed_job(const ExperimentConfig& cfg);
TrainConfig retrain_config(const ExperimentConfig& cfg);
CtrConfig retrain_ctr_config(const ExperimentConfig& cfg);

}  // namespace mtlevo
