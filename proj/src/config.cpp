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
#include "mtlevo/config.hpp"

#include <nlohmann/json.hpp>

#include "mtlevo/error.hpp"

namespace mtlevo {

using nlohmann::json;

std::string_view to_string(Profile p) { return p == Profile::kDesk ? "desk" : "paper"; }

Profile profile_from_string(std::string_view name) {
  if (name == "desk") return Profile::kDesk;
  if (name == "paper") return Profile::kPaper;
  throw ConfigError("unknown profile '" + std::string(name) + "' (desk or paper)");
}

ExperimentConfig profile_defaults(Algorithm algorithm, Profile profile) {
  ExperimentConfig c;
  c.algorithm = algorithm;
  c.profile = profile;
  const bool cmtr = algorithm == Algorithm::kCmtr;
  const bool cm_like = algorithm == Algorithm::kCm || algorithm == Algorithm::kCmsr;
  c.retrain_lr_decay = cm_like;
  if (profile == Profile::kPaper) {
    c.networks_per_generation = 100;
    c.max_generations = 200;
    c.stagnation_limit = 10;
    c.train_iterations = 3000;
    c.meta_iterations = 120;
    c.iterations_per_meta = 250;
    c.module_population = cmtr ? 25 : 50;
    c.module_species = cmtr ? 2 : 4;
    c.blueprint_population = 20;
    c.hyper_population = 20;
    c.n_top = 50;
    c.retrain_iterations = 30000;
    c.retrain_meta_iterations = 120;
    c.filters = 64;
    c.caps = {};
    c.deadline_s = 4 * 3600.0;
    return c;
  }
  c.caps = {16, 4, 4, 16};
  if (cmtr) {
    c.networks_per_generation = 8;
    c.max_generations = 3;
    c.meta_iterations = 8;
    c.iterations_per_meta = 25;
    c.module_population = 8;
    c.module_species = 2;
    c.hyper_population = 4;
    c.n_top = 2;
    c.retrain_meta_iterations = 20;
    c.caps = {8, 4, 4, 8};
  }
  return c;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "algorithm", "profile", "seed",
      "data_dir", "image_side", "synth_tasks", "synth_classes", "synth_noise",
      "synth_examples_per_class", "synth_seed", "order_seed", "split_seed",
      "networks_per_generation", "max_generations", "stagnation_limit", "train_iterations",
      "meta_iterations", "iterations_per_meta", "alpha",
      "module_population", "module_species", "blueprint_population", "hyper_population", "sharing",
      "n_top", "retrain_iterations", "retrain_meta_iterations", "retrain_lr_decay",
      "filters", "depth", "module_count", "learning_rate", "weight_init",
      "cap_core_filters", "cap_module_count", "cap_depth", "cap_layer_filters",
      "deadline_s", "coordinator", "connect_timeout_s"};
  return keys;
}

json config_to_json(const ExperimentConfig& c) {
  const DatasetRef& d = c.dataset;
  return {{"algorithm", to_string(c.algorithm)},
          {"profile", to_string(c.profile)},
          {"seed", c.seed},
          {"data_dir", d.kind == DatasetRef::Kind::kDirectory ? d.directory : ""},
          {"image_side", d.image_side},
          {"synth_tasks", d.tasks},
          {"synth_classes", d.classes},
          {"synth_noise", d.noise},
          {"synth_examples_per_class", d.examples_per_class},
          {"synth_seed", d.synth_seed},
          {"order_seed", d.order_seed},
          {"split_seed", d.split_seed},
          {"networks_per_generation", c.networks_per_generation},
          {"max_generations", c.max_generations},
          {"stagnation_limit", c.stagnation_limit},
          {"train_iterations", c.train_iterations},
          {"meta_iterations", c.meta_iterations},
          {"iterations_per_meta", c.iterations_per_meta},
          {"alpha", c.alpha},
          {"module_population", c.module_population},
          {"module_species", c.module_species},
          {"blueprint_population", c.blueprint_population},
          {"hyper_population", c.hyper_population},
          {"sharing", to_string(c.sharing)},
          {"n_top", c.n_top},
          {"retrain_iterations", c.retrain_iterations},
          {"retrain_meta_iterations", c.retrain_meta_iterations},
          {"retrain_lr_decay", c.retrain_lr_decay},
          {"filters", c.filters},
          {"depth", c.depth},
          {"module_count", c.module_count},
          {"learning_rate", c.learning_rate},
          {"weight_init", to_string(c.weight_init)},
          {"cap_core_filters", c.caps.max_core_filters},
          {"cap_module_count", c.caps.max_module_count},
          {"cap_depth", c.caps.max_depth},
          {"cap_layer_filters", c.caps.max_layer_filters},
          {"deadline_s", c.deadline_s},
          {"coordinator", c.coordinator},
          {"connect_timeout_s", c.connect_timeout_s}};
}

namespace {

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig resolve_config(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object");
  const auto& keys = config_keys();
  for (const auto& [k, v] : flat.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  if (!flat.contains("algorithm")) throw ConfigError("config needs an algorithm");
  const Algorithm alg = algorithm_from_string(get<std::string>(flat, "algorithm"));
  const Profile prof =
      flat.contains("profile") ? profile_from_string(get<std::string>(flat, "profile")) : Profile::kDesk;
  ExperimentConfig c = profile_defaults(alg, prof);

  auto set = [&](const char* key, auto& field) {
    if (flat.contains(key)) field = get<std::decay_t<decltype(field)>>(flat, key);
  };
  DatasetRef& d = c.dataset;
  set("seed", c.seed);
  if (flat.contains("data_dir")) {
    d.directory = get<std::string>(flat, "data_dir");
    d.kind = d.directory.empty() ? DatasetRef::Kind::kSynth : DatasetRef::Kind::kDirectory;
  }
  set("image_side", d.image_side);
  set("synth_tasks", d.tasks);
  set("synth_classes", d.classes);
  set("synth_noise", d.noise);
  set("synth_examples_per_class", d.examples_per_class);
  set("synth_seed", d.synth_seed);
  set("order_seed", d.order_seed);
  set("split_seed", d.split_seed);
  set("networks_per_generation", c.networks_per_generation);
  set("max_generations", c.max_generations);
  set("stagnation_limit", c.stagnation_limit);
  set("train_iterations", c.train_iterations);
  set("meta_iterations", c.meta_iterations);
  set("iterations_per_meta", c.iterations_per_meta);
  set("alpha", c.alpha);
  set("module_population", c.module_population);
  set("module_species", c.module_species);
  set("blueprint_population", c.blueprint_population);
  set("hyper_population", c.hyper_population);
  if (flat.contains("sharing")) c.sharing = sharing_mode_from_string(get<std::string>(flat, "sharing"));
  set("n_top", c.n_top);
  set("retrain_iterations", c.retrain_iterations);
  set("retrain_meta_iterations", c.retrain_meta_iterations);
  set("retrain_lr_decay", c.retrain_lr_decay);
  set("filters", c.filters);
  set("depth", c.depth);
  set("module_count", c.module_count);
  set("learning_rate", c.learning_rate);
  if (flat.contains("weight_init")) {
    c.weight_init = weight_init_from_string(get<std::string>(flat, "weight_init"));
  }
  set("cap_core_filters", c.caps.max_core_filters);
  set("cap_module_count", c.caps.max_module_count);
  set("cap_depth", c.caps.max_depth);
  set("cap_layer_filters", c.caps.max_layer_filters);
  set("deadline_s", c.deadline_s);
  set("coordinator", c.coordinator);
  set("connect_timeout_s", c.connect_timeout_s);
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  const DatasetRef& d = c.dataset;
  if (d.kind == DatasetRef::Kind::kSynth) {
    need(d.tasks >= 1, "synth_tasks must be positive");
    need(d.classes >= 2, "synth_classes must be at least 2");
    need(d.noise >= 0.0 && d.noise <= 0.5, "synth_noise must lie in [0, 0.5]");
    need(d.examples_per_class >= 3, "synth_examples_per_class must be at least 3");
  }
  need(d.image_side >= 4, "image_side must be at least 4");
  need(c.networks_per_generation >= 1, "networks_per_generation must be positive");
  need(c.max_generations >= 1, "max_generations must be positive");
  need(c.stagnation_limit >= 1, "stagnation_limit must be positive");
  need(c.meta_iterations >= 1, "meta_iterations must be positive");
  need(c.iterations_per_meta >= 1, "iterations_per_meta must be positive");
  need(c.alpha > 0.0 && c.alpha < 1.0, "alpha must lie in (0, 1)");
  need(c.module_population >= c.module_species && c.module_species >= 1,
       "module_population must be at least module_species, which must be positive");
  need(c.blueprint_population >= 1, "blueprint_population must be positive");
  need(c.hyper_population >= 1, "hyper_population must be positive");
  need(c.n_top >= 1, "n_top must be positive");
  need(c.retrain_iterations >= 1, "retrain_iterations must be positive");
  need(c.retrain_meta_iterations >= 1, "retrain_meta_iterations must be positive");
  need(c.filters >= 1, "filters must be positive");
  need(c.depth >= 1, "depth must be positive");
  need(c.module_count >= 1, "module_count must be positive");
  need(c.learning_rate > 0.0, "learning_rate must be positive");
  need(c.caps.max_core_filters >= 0 && c.caps.max_module_count >= 0 && c.caps.max_depth >= 0 &&
           c.caps.max_layer_filters >= 0,
       "caps must be non-negative (0 disables)");
  need(c.deadline_s > 0.0, "deadline_s must be positive");
  need(c.connect_timeout_s > 0.0, "connect_timeout_s must be positive");
}

GenerationPlan make_plan(const ExperimentConfig& c) {
  GenerationPlan p;
  p.algorithm = c.algorithm;
  p.networks_per_generation = c.networks_per_generation;
  p.train.iterations = c.train_iterations;
  p.ctr.meta_iterations = c.meta_iterations;
  p.ctr.iterations_per_meta = c.iterations_per_meta;
  p.ctr.alpha = c.alpha;
  p.ctr.learning_rate = c.learning_rate;
  p.max_generations = c.max_generations;
  p.stagnation_limit = c.stagnation_limit;
  p.dataset = c.dataset;
  p.seed = c.seed;
  p.deadline_s = c.deadline_s;
  p.caps = c.caps;
  return p;
}

PopulationConfig make_population_config(const ExperimentConfig& c) {
  PopulationConfig p;
  p.module_count = c.module_population;
  p.module_species = c.module_species;
  p.blueprint_count = c.blueprint_population;
  p.hyper_count = c.hyper_population;
  p.sharing = c.sharing;
  p.speciation.target_species = c.module_species;
  return p;
}

Job make_fixed_job(const ExperimentConfig& c) {
  Job job;
  job.algorithm = c.algorithm;
  job.seed = c.seed;
  job.dataset = c.dataset;
  job.hyper.learning_rate = c.learning_rate;
  job.hyper.final_layer_filters = c.filters;
  job.hyper.weight_init = c.weight_init;
  job.hyper.module_count = c.module_count;
  job.hyper.depth = c.depth;
  job.hyper.depth_flags = std::vector<bool>(std::size_t(c.depth), true);
  job.hyper.sharing_mode = c.sharing;
  job.baseline_layer.innovation = 1;
  job.baseline_layer.kind = GeneKind::kConv2d;
  job.baseline_layer.activation = Activation::kRelu;
  job.baseline_layer.kernel_size = 3;
  job.baseline_layer.filters = c.filters;
  job.baseline_layer.l2_strength = 1e-5;
  job.baseline_layer.dropout_rate = 0.0;
  job.train = retrain_config(c);
  job.ctr.meta_iterations = c.meta_iterations;
  job.ctr.iterations_per_meta = c.iterations_per_meta;
  job.ctr.alpha = c.alpha;
  job.ctr.learning_rate = c.learning_rate;
  job.deadline_s = c.deadline_s;
  return job;
}

TrainConfig retrain_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.iterations = c.retrain_iterations;
  t.lr_decay = c.retrain_lr_decay;
  t.eval_every = std::max<std::size_t>(1, c.retrain_iterations / 20);
  return t;
}

CtrConfig retrain_ctr_config(const ExperimentConfig& c) {
  CtrConfig r;
  r.meta_iterations = c.retrain_meta_iterations;
  r.iterations_per_meta = c.iterations_per_meta;
  r.alpha = c.alpha;
  r.learning_rate = c.learning_rate;
  return r;
}

}  // namespace mtlevo
