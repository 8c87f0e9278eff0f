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
#include "mtlevo/coevolve.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "mtlevo/error.hpp"

namespace mtlevo {

using nlohmann::json;

namespace {

bool uses_blueprints(Algorithm a) { return a == Algorithm::kCmsr; }

void check_evolved(Algorithm a) {
  if (a != Algorithm::kCm && a != Algorithm::kCmsr && a != Algorithm::kCmtr) {
    throw ConfigError("coevolution runs cm, cmsr or cmtr, not " + std::string(to_string(a)));
  }
}

// Without-replacement draws over [0, n), reshuffled once exhausted.
class Drawer {
 public:
  explicit Drawer(std::size_t n) : n_(n) {}
  std::size_t next(Rng& rng) {
    if (n_ == 0) throw StateError("draw from an empty pool");
    if (queue_.empty()) {
      queue_.resize(n_);
      std::iota(queue_.begin(), queue_.end(), std::size_t{0});
      shuffle(queue_, rng);
    }
    std::size_t i = queue_.back();
    queue_.pop_back();
    return i;
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> queue_;
};

void apply_caps(Job& job, const BudgetCaps& caps) {
  GlobalHyper& h = job.hyper;
  if (caps.max_core_filters > 0) h.final_layer_filters = std::min(h.final_layer_filters, caps.max_core_filters);
  if (caps.max_module_count > 0) h.module_count = std::min(h.module_count, caps.max_module_count);
  if (caps.max_depth > 0 && h.depth > caps.max_depth) {
    h.depth = caps.max_depth;
    h.depth_flags.resize(std::size_t(h.depth));
  }
  if (caps.max_layer_filters > 0) {
    for (auto& m : job.modules) {
      for (auto& n : m.graph.nodes) {
        if (n.payload) n.payload->filters = std::min(n.payload->filters, caps.max_layer_filters);
      }
    }
  }
}

template <typename G>
std::vector<Drawer> species_drawers(const SpeciesPopulation<G>& pop) {
  std::vector<Drawer> out;
  for (const auto& s : pop.species) {
    if (s.members.empty()) throw StateError("species " + std::to_string(s.id) + " is empty");
    out.emplace_back(s.members.size());
  }
  return out;
}

template <typename G>
std::vector<const Member<G>*> flat_members(const SpeciesPopulation<G>& pop) {
  std::vector<const Member<G>*> out;
  for (const auto& s : pop.species) {
    for (const auto& m : s.members) out.push_back(&m);
  }
  return out;
}

}  // namespace

Populations init_populations(Algorithm algorithm, const PopulationConfig& cfg, Rng& rng) {
  check_evolved(algorithm);
  SpeciationConfig sc = cfg.speciation;
  Populations pops{init_module_population(cfg.module_count, cfg.module_species, rng,
                                         algorithm == Algorithm::kCmtr, sc),
                   std::nullopt, init_hyper_population(cfg.hyper_count, cfg.sharing, rng, sc)};
  if (uses_blueprints(algorithm)) {
    pops.blueprints = init_blueprint_population(cfg.blueprint_count, pops.modules.species_ids(), rng,
                                                sc, cfg.mutation);
  }
  return pops;
}

std::vector<Job> plan_generation(const GenerationPlan& plan, const Populations& pops,
                                 std::size_t generation, Rng& rng, std::uint64_t first_job_id) {
  check_evolved(plan.algorithm);
  if (plan.networks_per_generation < 1) throw ConfigError("networks_per_generation must be positive");
  if (pops.modules.species.empty()) throw StateError("module population has no species");
  auto module_draw = species_drawers(pops.modules);
  const auto hypers = flat_members(pops.hypers);
  if (hypers.empty()) throw StateError("hyperparameter population is empty");
  Drawer hyper_draw(hypers.size());
  std::vector<const Member<BlueprintGenome>*> blueprints;
  std::optional<Drawer> blueprint_draw;
  if (uses_blueprints(plan.algorithm)) {
    if (!pops.blueprints) throw StateError("CMSR needs a blueprint population");
    blueprints = flat_members(*pops.blueprints);
    if (blueprints.empty()) throw StateError("blueprint population is empty");
    blueprint_draw.emplace(blueprints.size());
  }

  std::vector<Job> jobs;
  for (std::size_t i = 0; i < plan.networks_per_generation; ++i) {
    Job job;
    job.job_id = first_job_id + i;
    job.algorithm = plan.algorithm;
    job.seed = mix_seed(plan.seed, (std::uint64_t(generation) << 24) | i);
    job.dataset = plan.dataset;
    job.train = plan.train;
    job.ctr = plan.ctr;
    job.deadline_s = plan.deadline_s;
    job.generation = generation;
    const auto* h = hypers[hyper_draw.next(rng)];
    job.hyper = h->genome;
    job.hyper_uid = h->uid;
    auto take = [&](std::size_t si) {
      const auto& s = pops.modules.species[si];
      const auto& m = s.members[module_draw[si].next(rng)];
      job.modules.push_back(m.genome);
      job.module_uids.push_back(m.uid);
      job.module_species.push_back(s.id);
    };
    if (uses_blueprints(plan.algorithm)) {
      const auto* b = blueprints[blueprint_draw->next(rng)];
      job.blueprint = b->genome;
      job.blueprint_uid = b->uid;
      std::set<int> wanted;
      for (const auto& n : b->genome.graph.nodes) wanted.insert(n.payload.species);
      for (int sid : wanted) {
        std::size_t si = 0;
        while (si < pops.modules.species.size() && pops.modules.species[si].id != sid) ++si;
        if (si == pops.modules.species.size()) {
          throw StateError("blueprint " + std::to_string(b->uid) + " references missing species " +
                           std::to_string(sid));
        }
        take(si);
      }
    } else {
      for (std::size_t si = 0; si < pops.modules.species.size(); ++si) take(si);
    }
    apply_caps(job, plan.caps);
    jobs.push_back(std::move(job));
  }
  return jobs;
}

Attribution tabulate_fitness(const std::vector<Job>& jobs, const std::vector<JobResult>& results) {
  std::map<std::uint64_t, const JobResult*> by_id;
  for (const auto& r : results) by_id.emplace(r.job_id, &r);  // first result per id wins
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::uint64_t, Acc> mods, bps, hyps;
  auto add = [](std::map<std::uint64_t, Acc>& acc, std::uint64_t uid, const std::optional<double>& f) {
    Acc& a = acc[uid];
    if (f) {
      a.sum += *f;
      a.n += 1;
    }
  };
  for (const auto& job : jobs) {
    auto it = by_id.find(job.job_id);
    std::optional<double> f;
    if (it != by_id.end() && it->second->status == JobStatus::kOk) f = it->second->fitness;
    for (auto uid : std::set<std::uint64_t>(job.module_uids.begin(), job.module_uids.end())) {
      add(mods, uid, f);
    }
    if (job.blueprint_uid) add(bps, *job.blueprint_uid, f);
    if (job.hyper_uid) add(hyps, *job.hyper_uid, f);
  }
  auto finish = [](const std::map<std::uint64_t, Acc>& acc) {
    std::map<std::uint64_t, double> out;
    for (const auto& [uid, a] : acc) out[uid] = a.n ? a.sum / double(a.n) : 0.0;
    return out;
  };
  return {finish(mods), finish(bps), finish(hyps)};
}

void attribute_fitness(const std::vector<Job>& jobs, const std::vector<JobResult>& results,
                       Populations& pops) {
  const Attribution a = tabulate_fitness(jobs, results);
  auto apply = [](auto& pop, const std::map<std::uint64_t, double>& values) {
    for (auto& s : pop.species) {
      for (auto& m : s.members) {
        auto it = values.find(m.uid);
        m.fitness = it == values.end() ? 0.0 : it->second;
      }
    }
  };
  apply(pops.modules, a.modules);
  if (pops.blueprints) apply(*pops.blueprints, a.blueprints);
  apply(pops.hypers, a.hypers);
}

Evaluator local_evaluator() {
  return [](const std::vector<Job>& jobs) {
    std::vector<JobResult> out;
    for (const auto& job : jobs) out.push_back(evaluate_local(job));
    return out;
  };
}

std::string history_to_json(const HistoryRecord& r) {
  json j = {{"generation", r.generation}, {"best", r.best},
            {"best_so_far", r.best_so_far}, {"mean", r.mean},
            {"best_job_id", r.best_job_id}, {"failed", r.failed},
            {"best_genome", r.best_genome.empty() ? json() : json::parse(r.best_genome)}};
  return j.dump();
}

HistoryRecord history_from_json(std::string_view line) {
  try {
    json j = json::parse(line);
    HistoryRecord r;
    r.generation = j.at("generation").get<std::size_t>();
    r.best = j.at("best").get<double>();
    r.best_so_far = j.at("best_so_far").get<double>();
    r.mean = j.at("mean").get<double>();
    r.best_job_id = j.at("best_job_id").get<std::uint64_t>();
    r.failed = j.at("failed").get<std::size_t>();
    if (!j.at("best_genome").is_null()) r.best_genome = j.at("best_genome").dump();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed history record: ") + e.what());
  }
}

CoevolveResult run_generation_loop(const GenerationPlan& plan, const PopulationConfig& cfg,
                                   Populations pops, const Evaluator& evaluator, Rng& rng,
                                   std::ostream* history_out, const LogFn& log) {
  check_evolved(plan.algorithm);
  if (plan.max_generations < 1) throw ConfigError("max_generations must be positive");
  MutationConfig mutation = cfg.mutation;
  mutation.sharing_mode = cfg.sharing;
  CoevolveResult result;
  double best_so_far = -1.0;
  std::size_t stale = 0;
  std::uint64_t next_job_id = 0;
  for (std::size_t gen = 0; gen < plan.max_generations; ++gen) {
    std::vector<Job> jobs = plan_generation(plan, pops, gen, rng, next_job_id);
    next_job_id += jobs.size();
    std::vector<JobResult> raw = evaluator(jobs);

    // One result per job, first wins; a missing result counts as failed.
    std::map<std::uint64_t, JobResult> by_id;
    for (auto& r : raw) by_id.emplace(r.job_id, std::move(r));
    std::vector<JobResult> results;
    for (const auto& job : jobs) {
      auto it = by_id.find(job.job_id);
      if (it == by_id.end()) {
        JobResult missing;
        missing.job_id = job.job_id;
        missing.message = "no result returned";
        results.push_back(missing);
      } else {
        results.push_back(it->second);
      }
    }
    attribute_fitness(jobs, results, pops);

    HistoryRecord rec;
    rec.generation = gen;
    double total = 0.0;
    std::optional<std::size_t> best_i;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const JobResult& r = results[i];
      if (r.status != JobStatus::kOk) {
        ++rec.failed;
        if (log) log("job " + std::to_string(r.job_id) + " failed: " + r.message);
        continue;
      }
      total += *r.fitness;
      if (!best_i || *r.fitness > *results[*best_i].fitness) best_i = i;
    }
    rec.mean = total / double(jobs.size());
    if (best_i) {
      rec.best = *results[*best_i].fitness;
      rec.best_job_id = jobs[*best_i].job_id;
      rec.best_genome = job_to_json(jobs[*best_i]);
    }
    if (rec.best > best_so_far) {
      best_so_far = rec.best;
      stale = 0;
    } else {
      ++stale;
    }
    rec.best_so_far = best_so_far;
    result.history.push_back(rec);
    if (history_out) *history_out << history_to_json(rec) << '\n' << std::flush;
    if (log) {
      log("generation " + std::to_string(gen) + " best " + std::to_string(rec.best) + " mean " +
          std::to_string(rec.mean) + " best so far " + std::to_string(best_so_far));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      result.evaluated.push_back({std::move(jobs[i]), std::move(results[i])});
    }
    if (stale >= plan.stagnation_limit) break;
    if (gen + 1 == plan.max_generations) break;

    SpeciationConfig sc = cfg.speciation;
    pops.modules = speciate_and_reproduce(pops.modules, sc, module_ops(mutation, sc.compat), rng);
    if (pops.blueprints) {
      const auto live = pops.modules.species_ids();
      *pops.blueprints =
          speciate_and_reproduce(*pops.blueprints, sc, blueprint_ops(mutation, sc.compat, live), rng);
      // Elites pass through unmutated and may still name a species that died.
      for (auto& s : pops.blueprints->species) {
        for (auto& m : s.members) repair_species(m.genome, live, rng);
      }
    }
    pops.hypers = speciate_and_reproduce(pops.hypers, sc, hyper_ops(mutation, sc.compat), rng);
  }
  result.final_populations = std::move(pops);
  return result;
}

RetrainReport retrain_top(const std::vector<EvaluatedJob>& evaluated, std::size_t n_top,
                          const TrainConfig& long_train, const CtrConfig& long_ctr,
                          const MultitaskSpec& spec, std::uint64_t seed) {
  std::vector<const EvaluatedJob*> ok;
  for (const auto& e : evaluated) {
    if (e.result.status == JobStatus::kOk) ok.push_back(&e);
  }
  if (ok.empty()) throw StateError("no successful evaluation to retrain");
  std::stable_sort(ok.begin(), ok.end(), [](const EvaluatedJob* a, const EvaluatedJob* b) {
    return *a->result.fitness > *b->result.fitness;
  });
  ok.resize(std::min(std::max<std::size_t>(1, n_top), ok.size()));

  auto with_budget = [&](Job job, std::uint64_t salt) {
    job.train = long_train;
    job.ctr = long_ctr;
    job.seed = mix_seed(seed, salt);
    return job;
  };
  RetrainReport report;
  std::vector<double> vals;
  for (const auto* e : ok) {
    JobOutcome out = run_job(with_budget(e->job, e->job.job_id), spec);
    report.candidates.emplace_back(e->job.job_id, out.fitness);
    vals.push_back(out.fitness);
  }
  const EvaluatedJob& winner = *ok[argmax_first(vals)];
  Job final_job = with_budget(winner.job, 0xF1A1ULL << 32 | winner.job.job_id);
  if (final_job.train.eval_every == 0) {
    final_job.train.eval_every = std::max<std::size_t>(1, final_job.train.iterations / 20);
  }
  JobOutcome out = run_job(final_job, spec, true);
  report.best = final_job;
  report.val_accuracy = out.val_accuracy;
  report.test_accuracy = out.test_accuracy;
  report.mean_val = mean(out.val_accuracy);
  report.mean_test = mean(out.test_accuracy);
  report.parameter_count = out.parameter_count;
  report.checkpoint = std::move(out.checkpoint);
  return report;
}

}  // namespace mtlevo
