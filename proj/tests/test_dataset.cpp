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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mtlevo/dataset.hpp"
#include "mtlevo/error.hpp"

namespace mtlevo {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mtlevo_ds_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_constant_pgm(const fs::path& p, std::size_t w, std::size_t h, unsigned char value) {
  std::ofstream out(p, std::ios::binary);
  out << "P5\n# comment line\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < w * h; ++i) out.put(static_cast<char>(value));
}

TEST(LoadImageDir, CountsTasksClassesExamples) {
  TempDir dir;
  for (const char* task : {"alpha", "beta"}) {
    for (int c = 0; c < 3; ++c) {
      fs::path cls = dir.path() / task / ("char" + std::to_string(c));
      fs::create_directories(cls);
      for (int i = 0; i < 20; ++i) {
        write_constant_pgm(cls / ("img" + std::to_string(i) + ".pgm"), 12, 12,
                           static_cast<unsigned char>(10 * c));
      }
    }
  }
  MultitaskSpec spec = load_image_dir(dir.path(), 6, 4);
  ASSERT_EQ(spec.task_count(), 2u);
  for (const TaskDataset& t : spec.tasks()) {
    EXPECT_EQ(t.class_count, 3u);
    EXPECT_EQ(t.examples.size(), 60u);
    EXPECT_EQ(t.examples[0].image.shape(), (Shape{6, 6, 1}));
  }
  MultitaskSpec again = load_image_dir(dir.path(), 6, 4);
  EXPECT_EQ(again.task(0).task_id, spec.task(0).task_id);
  EXPECT_EQ(again.task(1).examples[59].image, spec.task(1).examples[59].image);
}

TEST(LoadImageDir, WhiteImageResizesToOnes) {
  TempDir dir;
  fs::path p = dir.path() / "white.pgm";
  write_constant_pgm(p, 105, 105, 255);
  Tensor img = resize_nearest(read_pgm(p), 28);
  EXPECT_EQ(img.shape(), (Shape{28, 28, 1}));
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_EQ(img[i], 1.0);
}

TEST(LoadImageDir, TruncatedHeaderIsDataError) {
  TempDir dir;
  fs::path p = dir.path() / "bad.pgm";
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n12";
  }
  try {
    read_pgm(p);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
  }
  fs::path q = dir.path() / "short.pgm";
  {
    std::ofstream out(q, std::ios::binary);
    out << "P5\n4 4\n255\n" << "abc";
  }
  EXPECT_THROW(read_pgm(q), DataError);
}

TEST(LoadImageDir, EmptyClassDirectoryIsDataError) {
  TempDir dir;
  fs::create_directories(dir.path() / "t" / "c0");
  EXPECT_THROW(load_image_dir(dir.path(), 8), DataError);
}

TEST(Split, TwentyPerClassGivesTenFourSix) {
  MultitaskSpec spec = split_fixed(synth_generate(1, 2, 3, 4, 0.1, 20), 5);
  for (std::size_t t = 0; t < 2; ++t) {
    const TaskDataset& task = spec.task(t);
    EXPECT_EQ(task.split.train.size(), 30u);
    EXPECT_EQ(task.split.val.size(), 12u);
    EXPECT_EQ(task.split.test.size(), 18u);
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t tr = 0, va = 0, te = 0;
      for (auto i : task.split.train) tr += task.examples[i].label == c;
      for (auto i : task.split.val) va += task.examples[i].label == c;
      for (auto i : task.split.test) te += task.examples[i].label == c;
      EXPECT_EQ(tr, 10u);
      EXPECT_EQ(va, 4u);
      EXPECT_EQ(te, 6u);
    }
  }
}

TEST(Split, TenExamplesGivesFiveTwoThree) {
  // floor(0.2 * 10) = 2, floor(0.3 * 10) = 3, remainder 5.
  MultitaskSpec spec = split_fixed(synth_generate(1, 1, 1, 4, 0.1, 10), 5);
  EXPECT_EQ(spec.task(0).split.train.size(), 5u);
  EXPECT_EQ(spec.task(0).split.val.size(), 2u);
  EXPECT_EQ(spec.task(0).split.test.size(), 3u);
}

TEST(Split, DeterministicAndDisjoint) {
  MultitaskSpec raw = synth_generate(9, 4, 5, 4, 0.2, 13);
  MultitaskSpec a = split_fixed(raw, 77);
  MultitaskSpec b = split_fixed(raw, 77);
  for (std::size_t t = 0; t < a.task_count(); ++t) {
    EXPECT_EQ(a.task(t).split.train, b.task(t).split.train);
    EXPECT_EQ(a.task(t).split.val, b.task(t).split.val);
    EXPECT_EQ(a.task(t).split.test, b.task(t).split.test);
    std::multiset<std::size_t> all;
    for (auto* l : {&a.task(t).split.train, &a.task(t).split.val, &a.task(t).split.test}) {
      all.insert(l->begin(), l->end());
    }
    ASSERT_EQ(all.size(), a.task(t).examples.size());
    std::size_t expect = 0;
    for (std::size_t i : all) EXPECT_EQ(i, expect++);
  }
}

TEST(Split, TooFewExamples) {
  EXPECT_THROW(split_fixed(synth_generate(1, 1, 3, 4, 0.1, 3), 0), DataError);
}

TEST(TestGuard, SealedUntilUnsealed) {
  MultitaskSpec spec = split_fixed(synth_generate(1, 2, 2, 4, 0.1, 10), 0);
  EXPECT_NO_THROW(spec.indices(0, Split::kVal));
  EXPECT_THROW(spec.indices(0, Split::kTest), StateError);
  Rng rng(1);
  EXPECT_THROW(sample_iteration(spec, Split::kTest, rng), StateError);
  {
    auto access = spec.unseal_test();
    EXPECT_FALSE(spec.test_sealed());
    EXPECT_EQ(spec.indices(0, Split::kTest).size(), 6u);
  }
  EXPECT_TRUE(spec.test_sealed());
  EXPECT_THROW(spec.subset({1}).indices(0, Split::kTest), StateError);
}

TEST(Sample, OnePerTaskInOrder) {
  MultitaskSpec spec = split_fixed(synth_generate(3, 20, 2, 4, 0.1, 10), 0);
  Rng rng(4);
  auto samples = sample_iteration(spec, Split::kTrain, rng);
  ASSERT_EQ(samples.size(), 20u);
  for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(samples[t].task, t);
}

TEST(Sample, SingletonSplitAlwaysReturnsIt) {
  std::vector<TaskDataset> tasks(1);
  tasks[0].task_id = "t";
  tasks[0].class_count = 2;
  // Class 0 has 6 examples (floor(1.2) = 1 val), class 1 has 4 (floor(0.8) = 0 val).
  for (std::size_t i = 0; i < 10; ++i) {
    tasks[0].examples.push_back({Tensor({2, 2, 1}, i * 0.1), i < 6 ? 0u : 1u});
  }
  MultitaskSpec spec = split_fixed(MultitaskSpec(tasks, 0, 2), 0);
  ASSERT_EQ(spec.task(0).split.val.size(), 1u);
  const Example* only = &spec.task(0).examples[spec.task(0).split.val[0]];
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(sample_iteration(spec, Split::kVal, rng)[0].example, only);
  }
}

TEST(Sample, FrequenciesAreUniform) {
  MultitaskSpec spec = split_fixed(synth_generate(5, 1, 1, 2, 0.0, 20), 0);
  const auto& idx = spec.task(0).split.train;
  ASSERT_EQ(idx.size(), 10u);
  std::map<const Example*, int> counts;
  Rng rng(12);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) counts[sample_iteration(spec, Split::kTrain, rng)[0].example]++;
  ASSERT_EQ(counts.size(), 10u);
  const double p = 0.1, expected = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (auto [ex, n] : counts) {
    EXPECT_LE(std::abs(n - expected), 3 * sigma);
    chi2 += (n - expected) * (n - expected) / expected;
  }
  EXPECT_LT(chi2, 27.88);  // chi-square(9) 0.999 quantile
}

TEST(Synth, ZeroNoiseClassesAreIdentical) {
  MultitaskSpec spec = synth_generate(2, 2, 3, 6, 0.0, 30);
  for (const TaskDataset& t : spec.tasks()) {
    ASSERT_EQ(t.examples.size(), 90u);
    for (const Example& e : t.examples) {
      EXPECT_EQ(e.image, t.examples[e.label * 30].image);
    }
  }
}

TEST(Synth, Deterministic) {
  MultitaskSpec a = synth_generate(7, 3, 4, 8, 0.1);
  MultitaskSpec b = synth_generate(7, 3, 4, 8, 0.1);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < a.task(t).examples.size(); ++i) {
      ASSERT_EQ(a.task(t).examples[i].image, b.task(t).examples[i].image);
    }
  }
  EXPECT_THROW(synth_generate(7, 1, 1, 8, 0.5), ConfigError);
  EXPECT_THROW(synth_generate(7, 0, 1, 8, 0.1), ConfigError);
}

TEST(Synth, NearestPrototypeOracleSeparatesClasses) {
  MultitaskSpec spec = split_fixed(synth_generate(7, 5, 4, 8, 0.1), 0);
  std::size_t correct = 0, total = 0;
  for (const TaskDataset& t : spec.tasks()) {
    // Majority-vote prototypes from the train split.
    std::vector<std::vector<double>> votes(t.class_count, std::vector<double>(64, 0));
    std::vector<int> n(t.class_count, 0);
    for (auto i : t.split.train) {
      const Example& e = t.examples[i];
      ++n[e.label];
      for (std::size_t p = 0; p < 64; ++p) votes[e.label][p] += e.image[p];
    }
    for (auto i : t.split.val) {
      const Example& e = t.examples[i];
      std::size_t best = 0;
      double best_d = 1e9;
      for (std::size_t c = 0; c < t.class_count; ++c) {
        double d = 0;
        for (std::size_t p = 0; p < 64; ++p) {
          d += std::abs(e.image[p] - (votes[c][p] * 2 > n[c] ? 1.0 : 0.0));
        }
        if (d < best_d) best_d = d, best = c;
      }
      correct += best == e.label;
      ++total;
    }
  }
  EXPECT_GT(static_cast<double>(correct) / total, 0.95);
}

TEST(Manifest, ListsEverySplit) {
  MultitaskSpec spec = split_fixed(synth_generate(7, 2, 2, 4, 0.1, 10), 0);
  const std::string text = manifest_text(spec);
  EXPECT_NE(text.find("task synth00"), std::string::npos);
  EXPECT_NE(text.find("  test:"), std::string::npos);
}

TEST(Materialize, CachesIdenticalRefs) {
  DatasetRef ref;
  ref.tasks = 2;
  auto a = materialize(ref);
  auto b = materialize(ref);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_TRUE(a->has_split());
}

}  // namespace
}  // namespace mtlevo
