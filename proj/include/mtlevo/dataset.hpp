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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mtlevo/random.hpp"
#include "mtlevo/tensor.hpp"

namespace mtlevo {

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);

struct Example {
  Tensor image;  // H x W x 1, values in [0, 1]
  std::size_t label = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct TaskDataset {
  std::string task_id;
  std::size_t class_count = 0;
  std::vector<Example> examples;
  SplitIndices split;
};

class TestSplitAccess;

/// Ordered, immutable collection of tasks sharing one image size. The test
/// split is sealed: reading it requires a live TestSplitAccess, which only
/// final evaluation code takes out.
class MultitaskSpec {
 public:
  MultitaskSpec() = default;
  MultitaskSpec(std::vector<TaskDataset> tasks, std::uint64_t order_seed, std::size_t image_side);

  std::size_t task_count() const noexcept { return tasks_ ? tasks_->size() : 0; }
  const TaskDataset& task(std::size_t t) const { return tasks_->at(t); }
  const std::vector<TaskDataset>& tasks() const { return *tasks_; }
  std::uint64_t order_seed() const noexcept { return order_seed_; }
  std::size_t image_side() const noexcept { return image_side_; }
  std::vector<std::size_t> class_counts() const;
  Shape image_shape() const { return {image_side_, image_side_, 1}; }
  bool has_split() const noexcept { return has_split_; }

  /// Index list of one split. Throws StateError for the test split while
  /// it is sealed, and when no split has been applied.
  const std::vector<std::size_t>& indices(std::size_t task, Split split) const;

  bool test_sealed() const noexcept { return guard_->load() == 0; }
  TestSplitAccess unseal_test() const;

  /// Spec holding only the listed tasks (shares the test guard).
  MultitaskSpec subset(const std::vector<std::size_t>& task_indices) const;

 private:
  friend MultitaskSpec split_fixed(const MultitaskSpec& spec, std::uint64_t seed);
  friend class TestSplitAccess;

  std::shared_ptr<const std::vector<TaskDataset>> tasks_;
  std::uint64_t order_seed_ = 0;
  std::size_t image_side_ = 0;
  bool has_split_ = false;
  std::shared_ptr<std::atomic<int>> guard_ = std::make_shared<std::atomic<int>>(0);
};

/// RAII unseal of a spec's test split.
class TestSplitAccess {
 public:
  TestSplitAccess(const TestSplitAccess&) = delete;
  TestSplitAccess& operator=(const TestSplitAccess&) = delete;
  TestSplitAccess(TestSplitAccess&& other) noexcept : guard_(std::move(other.guard_)) {}
  ~TestSplitAccess() {
    if (guard_) guard_->fetch_sub(1);
  }

 private:
  friend class MultitaskSpec;
  explicit TestSplitAccess(std::shared_ptr<std::atomic<int>> guard) : guard_(std::move(guard)) {
    guard_->fetch_add(1);
  }
  std::shared_ptr<std::atomic<int>> guard_;
};

/// Decodes an 8-bit binary PGM (P5) into H x W x 1 with values in [0, 1].
Tensor read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& image);

Tensor resize_nearest(const Tensor& image, std::size_t side);

/// Reads root/<task>/<class>/<image>.pgm. Class labels follow sorted class
/// directory names; task order is a seeded shuffle of the sorted task names.
MultitaskSpec load_image_dir(const std::filesystem::path& root, std::size_t image_side,
                             std::uint64_t order_seed = 0);

/// Per task and per class: seeded shuffle, then floor(20%) validation,
/// floor(30%) test, the rest train. Requires at least 10 examples per task.
MultitaskSpec split_fixed(const MultitaskSpec& spec, std::uint64_t seed);

struct Sample {
  std::size_t task = 0;
  const Example* example = nullptr;
};

/// One uniformly drawn example per task, in task order.
std::vector<Sample> sample_iteration(const MultitaskSpec& spec, Split split, Rng& rng);

/// Random binary prototypes per class; every example flips each prototype
/// pixel with probability noise.
MultitaskSpec synth_generate(std::uint64_t seed, std::size_t n_tasks, std::size_t n_classes,
                             std::size_t image_side, double noise,
                             std::size_t examples_per_class = 30);

/// Text listing of every task's split index lists.
std::string manifest_text(const MultitaskSpec& spec);

/// Self-contained description of a dataset; enough for a worker to rebuild
/// the identical split spec.
struct DatasetRef {
  enum class Kind { kSynth, kDirectory };
  Kind kind = Kind::kSynth;
  std::uint64_t synth_seed = 7;
  std::size_t tasks = 5;
  std::size_t classes = 4;
  double noise = 0.1;
  std::size_t examples_per_class = 30;
  std::string directory;
  std::size_t image_side = 8;
  std::uint64_t order_seed = 0;
  std::uint64_t split_seed = 0;

  bool operator==(const DatasetRef&) const = default;
};

/// Builds and splits the dataset; results are cached per ref.
std::shared_ptr<const MultitaskSpec> materialize(const DatasetRef& ref);

}  // namespace mtlevo
