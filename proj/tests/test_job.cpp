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

#include "mtlevo/coevolve.hpp"
#include "mtlevo/error.hpp"
#include "mtlevo/job.hpp"

namespace mtlevo {
namespace {

DatasetRef tiny_data() {
  DatasetRef d;
  d.tasks = 2;
  d.classes = 3;
  d.examples_per_class = 10;
  return d;
}

Job base_job(Algorithm a, std::uint64_t seed = 5) {
  Rng rng(seed);
  Job job;
  job.job_id = 9;
  job.algorithm = a;
  job.seed = seed;
  job.dataset = tiny_data();
  job.hyper.final_layer_filters = 8;
  job.hyper.module_count = 2;
  job.hyper.depth = 2;
  job.hyper.depth_flags = {true, true};
  job.hyper.weight_init = WeightInit::kHe;
  job.train.iterations = 20;
  job.ctr.meta_iterations = 2;
  job.ctr.iterations_per_meta = 5;
  job.baseline_layer = random_layer_gene(1, rng);
  job.baseline_layer.filters = 8;
  return job;
}

Job evolved_job(Algorithm a, std::uint64_t seed = 5) {
  Rng rng(seed);
  PopulationConfig cfg;
  cfg.module_count = 4;
  cfg.module_species = 2;
  cfg.blueprint_count = 2;
  cfg.hyper_count = 2;
  Populations pops = init_populations(a, cfg, rng);
  GenerationPlan plan;
  plan.algorithm = a;
  plan.networks_per_generation = 1;
  plan.dataset = tiny_data();
  plan.train.iterations = 20;
  plan.ctr.meta_iterations = 2;
  plan.ctr.iterations_per_meta = 5;
  plan.caps = {8, 2, 2, 8};
  plan.seed = seed;
  return plan_generation(plan, pops, 0, rng).at(0);
}

TEST(AlgorithmName, RoundTripsAndRejectsUnknown) {
  for (auto a : {Algorithm::kSingle, Algorithm::kSoft, Algorithm::kCm, Algorithm::kCmsr,
                 Algorithm::kCtr, Algorithm::kCmtr}) {
    EXPECT_EQ(algorithm_from_string(to_string(a)), a);
  }
  EXPECT_THROW(algorithm_from_string("cmx"), ConfigError);
}

TEST(JobJson, RoundTripKeepsEveryField) {
  for (auto a : {Algorithm::kCm, Algorithm::kCmsr, Algorithm::kCmtr}) {
    Job job = evolved_job(a);
    job.deadline_s = 12.5;
    job.train.lr_decay = true;
    job.ctr.alpha = 1e-3;
    const std::string text = job_to_json(job);
    const Job back = job_from_json(text);
    EXPECT_EQ(job_to_json(back), text);
    EXPECT_EQ(back.algorithm, a);
    EXPECT_EQ(back.module_uids, job.module_uids);
    EXPECT_EQ(back.blueprint_uid, job.blueprint_uid);
    EXPECT_EQ(back.hyper, job.hyper);
    EXPECT_EQ(back.dataset, job.dataset);
    EXPECT_EQ(back.ctr.alpha, 1e-3);
  }
}

TEST(JobJson, MalformedTextIsParseError) {
  EXPECT_THROW(job_from_json("{"), ParseError);
  EXPECT_THROW(job_from_json("{\"job_id\": 1}"), ParseError);
}

TEST(ResultJson, FitnessPresentExactlyWhenOk) {
  JobResult ok;
  ok.job_id = 3;
  ok.status = JobStatus::kOk;
  ok.fitness = 0.1 + 0.2;
  ok.task_accuracy = {1.0 / 3.0, 0.7};
  ok.worker_id = "w";
  const JobResult back = result_from_json(result_to_json(ok));
  EXPECT_EQ(back.fitness, ok.fitness);  // bit-exact through JSON
  EXPECT_EQ(back.task_accuracy, ok.task_accuracy);

  JobResult failed;
  failed.status = JobStatus::kFailed;
  failed.message = "boom";
  EXPECT_FALSE(result_from_json(result_to_json(failed)).fitness);

  failed.fitness = 0.5;
  EXPECT_THROW(result_from_json(result_to_json(failed)), ParseError);
  ok.fitness.reset();
  EXPECT_THROW(result_from_json(result_to_json(ok)), ParseError);
}

class RunEveryAlgorithm : public ::testing::TestWithParam<Algorithm> {};

TEST_P(RunEveryAlgorithm, ProducesAccuracyPerTaskAndSealsTest) {
  const Algorithm a = GetParam();
  const Job job = (a == Algorithm::kSingle || a == Algorithm::kSoft || a == Algorithm::kCtr)
                      ? base_job(a)
                      : evolved_job(a);
  const auto spec = materialize(job.dataset);
  const JobOutcome out = run_job(job, *spec);
  ASSERT_EQ(out.val_accuracy.size(), 2u);
  for (double v : out.val_accuracy) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(out.fitness, mean(out.val_accuracy));
  EXPECT_TRUE(out.test_accuracy.empty());
  EXPECT_GT(out.parameter_count, 0u);
  EXPECT_TRUE(spec->test_sealed());
  const bool routed = a == Algorithm::kCtr || a == Algorithm::kCmtr;
  EXPECT_EQ(out.checkpoint.has_value(), routed);
}

TEST_P(RunEveryAlgorithm, EvaluateLocalIsDeterministic) {
  const Algorithm a = GetParam();
  const Job job = (a == Algorithm::kSingle || a == Algorithm::kSoft || a == Algorithm::kCtr)
                      ? base_job(a)
                      : evolved_job(a);
  const JobResult r1 = evaluate_local(job);
  const JobResult r2 = evaluate_local(job);
  ASSERT_EQ(r1.status, JobStatus::kOk) << r1.message;
  EXPECT_EQ(r1.fitness, r2.fitness);
  EXPECT_EQ(r1.task_accuracy, r2.task_accuracy);
}

INSTANTIATE_TEST_SUITE_P(All, RunEveryAlgorithm,
                         ::testing::Values(Algorithm::kSingle, Algorithm::kSoft, Algorithm::kCm,
                                           Algorithm::kCmsr, Algorithm::kCtr, Algorithm::kCmtr));

TEST(RunJob, WithTestFillsTestAccuracyAndReseals) {
  const Job job = base_job(Algorithm::kSoft);
  const auto spec = materialize(job.dataset);
  const JobOutcome out = run_job(job, *spec, true);
  EXPECT_EQ(out.test_accuracy.size(), 2u);
  EXPECT_TRUE(spec->test_sealed());
}

TEST(EvaluateLocal, UntrainedNetworksScoreNearChance) {
  // Balanced validation split: a net that ignores its input scores exactly
  // 1/classes, and random nets should average close to that.
  double total = 0.0;
  const int n = 20;
  for (int s = 0; s < n; ++s) {
    Job job = base_job(Algorithm::kSoft, 100 + s);
    job.train.iterations = 0;
    const JobResult r = evaluate_local(job);
    ASSERT_EQ(r.status, JobStatus::kOk);
    total += *r.fitness;
  }
  EXPECT_NEAR(total / n, 1.0 / 3.0, 0.1);
}

TEST(EvaluateLocal, BrokenJobIsReportedAsFailed) {
  Job job = evolved_job(Algorithm::kCmsr);
  job.blueprint.reset();
  const JobResult r = evaluate_local(job, "w1");
  EXPECT_EQ(r.status, JobStatus::kFailed);
  EXPECT_FALSE(r.fitness);
  EXPECT_EQ(r.worker_id, "w1");
  EXPECT_NE(r.message.find("blueprint"), std::string::npos);
}

}  // namespace
}  // namespace mtlevo
