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
#include "mtlevo/job.hpp"

#include <chrono>

#include <nlohmann/json.hpp>

#include "mtlevo/assembly.hpp"
#include "mtlevo/error.hpp"

namespace mtlevo {

using nlohmann::json;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kSingle: return "baseline-single";
    case Algorithm::kSoft: return "baseline-soft";
    case Algorithm::kCm: return "cm";
    case Algorithm::kCmsr: return "cmsr";
    case Algorithm::kCtr: return "ctr";
    case Algorithm::kCmtr: return "cmtr";
  }
  return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
  for (auto a : {Algorithm::kSingle, Algorithm::kSoft, Algorithm::kCm, Algorithm::kCmsr,
                 Algorithm::kCtr, Algorithm::kCmtr}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::kOk: return "ok";
    case JobStatus::kFailed: return "failed";
    case JobStatus::kTimeout: return "timeout";
  }
  return "failed";
}

namespace {

JobStatus status_from_string(std::string_view s) {
  for (auto v : {JobStatus::kOk, JobStatus::kFailed, JobStatus::kTimeout}) {
    if (to_string(v) == s) return v;
  }
  throw ParseError("unknown job status '" + std::string(s) + "'");
}

json dataset_json(const DatasetRef& r) {
  return {{"kind", r.kind == DatasetRef::Kind::kSynth ? "synth" : "directory"},
          {"synth_seed", r.synth_seed},
          {"tasks", r.tasks},
          {"classes", r.classes},
          {"noise", r.noise},
          {"examples_per_class", r.examples_per_class},
          {"directory", r.directory},
          {"image_side", r.image_side},
          {"order_seed", r.order_seed},
          {"split_seed", r.split_seed}};
}

DatasetRef dataset_from(const json& j) {
  DatasetRef r;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "synth" && kind != "directory") throw ParseError("unknown dataset kind '" + kind + "'");
  r.kind = kind == "synth" ? DatasetRef::Kind::kSynth : DatasetRef::Kind::kDirectory;
  r.synth_seed = j.at("synth_seed").get<std::uint64_t>();
  r.tasks = j.at("tasks").get<std::size_t>();
  r.classes = j.at("classes").get<std::size_t>();
  r.noise = j.at("noise").get<double>();
  r.examples_per_class = j.at("examples_per_class").get<std::size_t>();
  r.directory = j.at("directory").get<std::string>();
  r.image_side = j.at("image_side").get<std::size_t>();
  r.order_seed = j.at("order_seed").get<std::uint64_t>();
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  return r;
}

json gene_json(const LayerGene& g) {
  return {{"innovation", g.innovation},         {"kind", to_string(g.kind)},
          {"activation", to_string(g.activation)}, {"kernel_size", g.kernel_size},
          {"filters", g.filters},               {"l2_strength", g.l2_strength},
          {"dropout_rate", g.dropout_rate}};
}

LayerGene gene_from(const json& j) {
  LayerGene g;
  g.innovation = j.at("innovation").get<Innovation>();
  g.kind = gene_kind_from_string(j.at("kind").get<std::string>());
  g.activation = activation_from_string(j.at("activation").get<std::string>());
  g.kernel_size = j.at("kernel_size").get<int>();
  g.filters = j.at("filters").get<int>();
  g.l2_strength = j.at("l2_strength").get<double>();
  g.dropout_rate = j.at("dropout_rate").get<double>();
  return g;
}

}  // namespace

std::string dataset_to_json(const DatasetRef& ref) { return dataset_json(ref).dump(); }

DatasetRef dataset_from_json(std::string_view text) {
  try {
    return dataset_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset reference: ") + e.what());
  }
}

std::string job_to_json(const Job& job) {
  json modules = json::array();
  for (const auto& m : job.modules) modules.push_back(json::parse(serialize(m)));
  json j = {{"job_id", job.job_id},
            {"algorithm", to_string(job.algorithm)},
            {"seed", job.seed},
            {"dataset", dataset_json(job.dataset)},
            {"hyper", json::parse(serialize(job.hyper))},
            {"modules", modules},
            {"module_species", job.module_species},
            {"blueprint", job.blueprint ? json::parse(serialize(*job.blueprint)) : json()},
            {"baseline_layer", gene_json(job.baseline_layer)},
            {"train",
             {{"iterations", job.train.iterations},
              {"lr_decay", job.train.lr_decay},
              {"eval_every", job.train.eval_every}}},
            {"ctr",
             {{"meta_iterations", job.ctr.meta_iterations},
              {"iterations_per_meta", job.ctr.iterations_per_meta},
              {"alpha", job.ctr.alpha},
              {"learning_rate", job.ctr.learning_rate},
              {"mutation_retries", job.ctr.mutation_retries},
              {"max_module_nodes", job.ctr.max_module_nodes},
              {"val_subsample", job.ctr.val_subsample}}},
            {"deadline_s", job.deadline_s},
            {"generation", job.generation},
            {"module_uids", job.module_uids},
            {"blueprint_uid", job.blueprint_uid ? json(*job.blueprint_uid) : json()},
            {"hyper_uid", job.hyper_uid ? json(*job.hyper_uid) : json()}};
  return j.dump();
}

Job job_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("job payload is not valid JSON at byte " + std::to_string(e.byte));
  }
  try {
    Job job;
    job.job_id = j.at("job_id").get<std::uint64_t>();
    job.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    job.seed = j.at("seed").get<std::uint64_t>();
    job.dataset = dataset_from(j.at("dataset"));
    job.hyper = deserialize_hyper(j.at("hyper").dump(), RangeCheck::kStructural);
    for (const auto& m : j.at("modules")) {
      job.modules.push_back(deserialize_module(m.dump(), RangeCheck::kStructural));
    }
    job.module_species = j.at("module_species").get<std::vector<int>>();
    if (!j.at("blueprint").is_null()) job.blueprint = deserialize_blueprint(j.at("blueprint").dump());
    job.baseline_layer = gene_from(j.at("baseline_layer"));
    const json& t = j.at("train");
    job.train.iterations = t.at("iterations").get<std::size_t>();
    job.train.lr_decay = t.at("lr_decay").get<bool>();
    job.train.eval_every = t.at("eval_every").get<std::size_t>();
    const json& c = j.at("ctr");
    job.ctr.meta_iterations = c.at("meta_iterations").get<std::size_t>();
    job.ctr.iterations_per_meta = c.at("iterations_per_meta").get<std::size_t>();
    job.ctr.alpha = c.at("alpha").get<double>();
    job.ctr.learning_rate = c.at("learning_rate").get<double>();
    job.ctr.mutation_retries = c.at("mutation_retries").get<std::size_t>();
    job.ctr.max_module_nodes = c.at("max_module_nodes").get<std::size_t>();
    job.ctr.val_subsample = c.at("val_subsample").get<std::size_t>();
    job.deadline_s = j.at("deadline_s").get<double>();
    job.generation = j.at("generation").get<std::size_t>();
    job.module_uids = j.at("module_uids").get<std::vector<std::uint64_t>>();
    if (!j.at("blueprint_uid").is_null()) job.blueprint_uid = j.at("blueprint_uid").get<std::uint64_t>();
    if (!j.at("hyper_uid").is_null()) job.hyper_uid = j.at("hyper_uid").get<std::uint64_t>();
    return job;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed job payload: ") + e.what());
  }
}

std::string result_to_json(const JobResult& r) {
  json j = {{"job_id", r.job_id},
            {"status", to_string(r.status)},
            {"fitness", r.fitness ? json(*r.fitness) : json()},
            {"task_accuracy", r.task_accuracy},
            {"wall_time_s", r.wall_time_s},
            {"worker_id", r.worker_id},
            {"message", r.message}};
  return j.dump();
}

JobResult result_from_json(std::string_view text) {
  try {
    json j = json::parse(text);
    JobResult r;
    r.job_id = j.at("job_id").get<std::uint64_t>();
    r.status = status_from_string(j.at("status").get<std::string>());
    if (!j.at("fitness").is_null()) r.fitness = j.at("fitness").get<double>();
    if (r.fitness.has_value() != (r.status == JobStatus::kOk)) {
      throw ParseError("result fitness must be present exactly when status is ok");
    }
    r.task_accuracy = j.at("task_accuracy").get<std::vector<double>>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.worker_id = j.at("worker_id").get<std::string>();
    r.message = j.at("message").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed job result: ") + e.what());
  }
}

namespace {

std::vector<double> test_of(const AssembledNetwork& net, const MultitaskSpec& spec) {
  const auto access = spec.unseal_test();
  return evaluate_accuracy(net, spec, Split::kTest);
}

JobOutcome from_network(const AssembledNetwork& net, const MultitaskSpec& spec, const Job& job,
                        bool with_test, Rng& rng) {
  JobOutcome out;
  TrainResult tr = train_network(net, spec, job.train, rng);
  out.val_accuracy = tr.val_accuracy;
  out.fitness = tr.mean_val;
  out.parameter_count = count_parameters(net);
  if (with_test) out.test_accuracy = test_of(net, spec);
  return out;
}

JobOutcome from_ctr(std::vector<ModuleInstance> modules, const MultitaskSpec& spec, const Job& job,
                    bool with_test, Rng& rng, const std::filesystem::path& checkpoint_path) {
  CtrResult res = run_ctr(std::move(modules), spec, job.hyper, job.ctr, rng, checkpoint_path);
  JobOutcome out;
  for (const auto& row : res.history) {
    if (row.meta_iteration == res.checkpoint.meta_iteration) out.val_accuracy = row.champion_val;
  }
  out.fitness = res.best_avg_val;
  {
    const CtrState restored = restore_checkpoint(res.checkpoint);
    std::vector<Param> ps = restored.module_params();
    for (const auto& ch : restored.champions) {
      auto own = ch.own_params();
      ps.insert(ps.end(), own.begin(), own.end());
    }
    out.parameter_count = count_parameters(ps);
  }
  if (with_test) out.test_accuracy = evaluate_test(res.checkpoint, spec);
  out.ctr_history = std::move(res.history);
  out.checkpoint = std::move(res.checkpoint);
  return out;
}

}  // namespace

JobOutcome run_job(const Job& job, const MultitaskSpec& spec, bool with_test,
                   const std::filesystem::path& checkpoint_path) {
  Rng rng(job.seed);
  const TaskShape shape{spec.image_side(), spec.class_counts()};
  const std::size_t F = std::size_t(job.hyper.final_layer_filters);
  switch (job.algorithm) {
    case Algorithm::kSingle: {
      JobOutcome out;
      std::vector<LayerGene> layers(std::size_t(std::max(1, job.hyper.depth)), job.baseline_layer);
      for (std::size_t t = 0; t < spec.task_count(); ++t) {
        const MultitaskSpec one = spec.subset({t});
        AssembledNetwork net =
            assemble_chain(layers, {spec.image_side(), {spec.class_counts()[t]}}, job.hyper, rng);
        JobOutcome part = from_network(net, one, job, with_test, rng);
        out.val_accuracy.push_back(part.val_accuracy.at(0));
        if (with_test) out.test_accuracy.push_back(part.test_accuracy.at(0));
        out.parameter_count += part.parameter_count;
      }
      out.fitness = mean(out.val_accuracy);
      return out;
    }
    case Algorithm::kSoft: {
      std::vector<LayerGene> layers(std::size_t(std::max(1, job.hyper.depth)), job.baseline_layer);
      return from_network(assemble_soft_ordering(layers, shape, job.hyper, rng), spec, job,
                          with_test, rng);
    }
    case Algorithm::kCm:
      return from_network(assemble_cm(job.modules, job.hyper, shape, rng), spec, job, with_test, rng);
    case Algorithm::kCmsr: {
      if (!job.blueprint) throw ConfigError("CMSR job has no blueprint");
      if (job.module_species.size() != job.modules.size()) {
        throw ConfigError("CMSR job needs one species id per module");
      }
      std::map<int, ModuleGenome> choice;
      for (std::size_t i = 0; i < job.modules.size(); ++i) choice[job.module_species[i]] = job.modules[i];
      return from_network(assemble_cmsr(*job.blueprint, choice, job.hyper, shape, rng), spec, job,
                          with_test, rng);
    }
    case Algorithm::kCtr: {
      auto modules = default_ctr_modules(std::size_t(std::max(1, job.hyper.module_count)), F,
                                         job.hyper.weight_init, rng);
      return from_ctr(std::move(modules), spec, job, with_test, rng, checkpoint_path);
    }
    case Algorithm::kCmtr: {
      if (job.modules.empty()) throw ConfigError("CMTR job has no modules");
      std::vector<ModuleInstance> modules;
      const std::size_t K = std::size_t(std::max(1, job.hyper.module_count));
      for (std::size_t k = 0; k < K; ++k) {
        modules.push_back(realize_module(job.modules[k % job.modules.size()], job.hyper, F,
                                         TailMode::kConv, rng, "M" + std::to_string(k + 1)));
      }
      return from_ctr(std::move(modules), spec, job, with_test, rng, checkpoint_path);
    }
  }
  throw ConfigError("unhandled algorithm");
}

JobResult evaluate_local(const Job& job, const std::string& worker_id) {
  const auto start = std::chrono::steady_clock::now();
  JobResult r;
  r.job_id = job.job_id;
  r.worker_id = worker_id;
  try {
    const auto spec = materialize(job.dataset);
    JobOutcome out = run_job(job, *spec);
    r.status = JobStatus::kOk;
    r.fitness = out.fitness;
    r.task_accuracy = out.val_accuracy;
  } catch (const std::exception& e) {
    r.status = JobStatus::kFailed;
    r.fitness.reset();
    r.message = e.what();
  }
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace mtlevo
