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
#include "mtlevo/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "mtlevo/error.hpp"

namespace mtlevo {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

MultitaskSpec::MultitaskSpec(std::vector<TaskDataset> tasks, std::uint64_t order_seed,
                             std::size_t image_side)
    : order_seed_(order_seed), image_side_(image_side) {
  for (const TaskDataset& t : tasks) {
    for (const Example& e : t.examples) {
      if (e.label >= t.class_count) {
        throw DataError("task " + t.task_id + ": label " + std::to_string(e.label) +
                        " exceeds class count " + std::to_string(t.class_count));
      }
      if (e.image.shape() != Shape{image_side, image_side, 1}) {
        throw DataError("task " + t.task_id + ": image shape " + shape_string(e.image.shape()) +
                        " differs from " + std::to_string(image_side) + "x" +
                        std::to_string(image_side) + "x1");
      }
    }
  }
  tasks_ = std::make_shared<const std::vector<TaskDataset>>(std::move(tasks));
}

std::vector<std::size_t> MultitaskSpec::class_counts() const {
  std::vector<std::size_t> out;
  for (const TaskDataset& t : tasks()) out.push_back(t.class_count);
  return out;
}

const std::vector<std::size_t>& MultitaskSpec::indices(std::size_t task, Split split) const {
  if (!has_split_) throw StateError("dataset has no train/val/test split");
  const TaskDataset& t = tasks_->at(task);
  switch (split) {
    case Split::kTrain: return t.split.train;
    case Split::kVal: return t.split.val;
    case Split::kTest:
      if (test_sealed()) {
        throw StateError("test split of task " + t.task_id +
                         " read outside final evaluation");
      }
      return t.split.test;
  }
  return t.split.train;
}

TestSplitAccess MultitaskSpec::unseal_test() const { return TestSplitAccess(guard_); }

MultitaskSpec MultitaskSpec::subset(const std::vector<std::size_t>& task_indices) const {
  MultitaskSpec out;
  std::vector<TaskDataset> tasks;
  for (std::size_t i : task_indices) tasks.push_back(tasks_->at(i));
  out.tasks_ = std::make_shared<const std::vector<TaskDataset>>(std::move(tasks));
  out.order_seed_ = order_seed_;
  out.image_side_ = image_side_;
  out.has_split_ = has_split_;
  out.guard_ = guard_;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string read_token(std::istream& in, const fs::path& path) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(c);
  }
  if (token.empty()) throw DataError(path.string() + ": truncated PGM header");
  return token;
}

std::size_t parse_header_number(const std::string& token, const fs::path& path) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit)) {
    throw DataError(path.string() + ": malformed PGM header field '" + token + "'");
  }
  return std::stoul(token);
}

}  // namespace

Tensor read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open image");
  if (read_token(in, path) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  const std::size_t width = parse_header_number(read_token(in, path), path);
  const std::size_t height = parse_header_number(read_token(in, path), path);
  const std::size_t maxval = parse_header_number(read_token(in, path), path);
  if (width == 0 || height == 0) throw DataError(path.string() + ": empty PGM image");
  if (maxval == 0 || maxval > 255) {
    throw DataError(path.string() + ": only 8-bit PGM is supported (maxval " +
                    std::to_string(maxval) + ")");
  }
  std::vector<unsigned char> bytes(width * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw DataError(path.string() + ": truncated PGM pixel data");
  }
  Tensor image({height, width, 1});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    image[i] = static_cast<Real>(std::min<std::size_t>(bytes[i], maxval)) / static_cast<Real>(maxval);
  }
  return image;
}

void write_pgm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.shape()[2] != 1) {
    throw DimensionError("write_pgm expects H x W x 1, got " + shape_string(image.shape()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write image");
  out << "P5\n" << image.shape()[1] << " " << image.shape()[0] << "\n255\n";
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Real v = std::clamp(image[i], 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

Tensor resize_nearest(const Tensor& image, std::size_t side) {
  if (image.rank() != 3) throw DimensionError("resize expects H x W x C");
  const std::size_t H = image.shape()[0], W = image.shape()[1], C = image.shape()[2];
  Tensor out({side, side, C});
  for (std::size_t h = 0; h < side; ++h) {
    const std::size_t sh = h * H / side;
    for (std::size_t w = 0; w < side; ++w) {
      const std::size_t sw = w * W / side;
      for (std::size_t c = 0; c < C; ++c) out.at(h, w, c) = image.at(sh, sw, c);
    }
  }
  return out;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

MultitaskSpec load_image_dir(const fs::path& root, std::size_t image_side, std::uint64_t order_seed) {
  if (image_side == 0) throw ConfigError("image side must be positive");
  if (!fs::is_directory(root)) throw DataError(root.string() + ": not a directory");
  std::vector<fs::path> task_dirs = sorted_entries(root, true);
  if (task_dirs.empty()) throw DataError(root.string() + ": no task directories");
  Rng rng(order_seed);
  shuffle(task_dirs, rng);

  std::vector<TaskDataset> tasks;
  for (const fs::path& task_dir : task_dirs) {
    TaskDataset task;
    task.task_id = task_dir.filename().string();
    const std::vector<fs::path> class_dirs = sorted_entries(task_dir, true);
    if (class_dirs.empty()) throw DataError(task_dir.string() + ": no class directories");
    task.class_count = class_dirs.size();
    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
      std::vector<fs::path> files;
      for (const fs::path& f : sorted_entries(class_dirs[label], false)) {
        if (f.extension() == ".pgm") files.push_back(f);
      }
      if (files.empty()) throw DataError(class_dirs[label].string() + ": empty class directory");
      for (const fs::path& f : files) {
        task.examples.push_back({resize_nearest(read_pgm(f), image_side), label});
      }
    }
    tasks.push_back(std::move(task));
  }
  return MultitaskSpec(std::move(tasks), order_seed, image_side);
}

MultitaskSpec split_fixed(const MultitaskSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TaskDataset> tasks = spec.tasks();
  for (TaskDataset& task : tasks) {
    if (task.examples.size() < 10) {
      throw DataError("task " + task.task_id + " has " + std::to_string(task.examples.size()) +
                      " examples; at least 10 are required for a split");
    }
    task.split = SplitIndices{};
    for (std::size_t label = 0; label < task.class_count; ++label) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < task.examples.size(); ++i) {
        if (task.examples[i].label == label) members.push_back(i);
      }
      shuffle(members, rng);
      const std::size_t n = members.size();
      const std::size_t n_val = n * 2 / 10;
      const std::size_t n_test = n * 3 / 10;
      const std::size_t n_train = n - n_val - n_test;
      auto first = members.begin();
      task.split.train.insert(task.split.train.end(), first, first + n_train);
      task.split.val.insert(task.split.val.end(), first + n_train, first + n_train + n_val);
      task.split.test.insert(task.split.test.end(), first + n_train + n_val, members.end());
    }
  }
  MultitaskSpec out(std::move(tasks), spec.order_seed(), spec.image_side());
  out.has_split_ = true;
  return out;
}

std::vector<Sample> sample_iteration(const MultitaskSpec& spec, Split split, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(spec.task_count());
  for (std::size_t t = 0; t < spec.task_count(); ++t) {
    const std::vector<std::size_t>& idx = spec.indices(t, split);
    if (idx.empty()) {
      throw StateError("task " + spec.task(t).task_id + " has an empty " +
                       std::string(to_string(split)) + " split");
    }
    out.push_back({t, &spec.task(t).examples[idx[uniform_index(rng, idx.size())]]});
  }
  return out;
}

MultitaskSpec synth_generate(std::uint64_t seed, std::size_t n_tasks, std::size_t n_classes,
                             std::size_t image_side, double noise, std::size_t examples_per_class) {
  if (n_tasks < 1 || n_classes < 1 || image_side < 1 || examples_per_class < 1) {
    throw ConfigError("synthetic corpus needs at least one task, class, pixel and example");
  }
  if (!(noise >= 0.0 && noise < 0.5)) throw ConfigError("synthetic noise must lie in [0, 0.5)");
  Rng rng(seed);
  const std::size_t pixels = image_side * image_side;
  std::vector<TaskDataset> tasks;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskDataset task;
    char name[32];
    std::snprintf(name, sizeof(name), "synth%02zu", t);
    task.task_id = name;
    task.class_count = n_classes;
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::vector<Real> proto(pixels);
      for (Real& p : proto) p = bernoulli(rng, 0.5) ? 1.0 : 0.0;
      for (std::size_t e = 0; e < examples_per_class; ++e) {
        Tensor image({image_side, image_side, 1});
        for (std::size_t i = 0; i < pixels; ++i) {
          image[i] = bernoulli(rng, noise) ? 1.0 - proto[i] : proto[i];
        }
        task.examples.push_back({std::move(image), c});
      }
    }
    tasks.push_back(std::move(task));
  }
  return MultitaskSpec(std::move(tasks), seed, image_side);
}

std::string manifest_text(const MultitaskSpec& spec) {
  std::ostringstream os;
  auto list = [&](const char* name, const std::vector<std::size_t>& idx) {
    os << "  " << name << ":";
    for (std::size_t i : idx) os << " " << i;
    os << "\n";
  };
  for (const TaskDataset& t : spec.tasks()) {
    os << "task " << t.task_id << " classes " << t.class_count << " examples " << t.examples.size()
       << "\n";
    list("train", t.split.train);
    list("val", t.split.val);
    list("test", t.split.test);
  }
  return os.str();
}

std::shared_ptr<const MultitaskSpec> materialize(const DatasetRef& ref) {
  static std::mutex mu;
  static std::vector<std::pair<DatasetRef, std::shared_ptr<const MultitaskSpec>>> cache;
  std::lock_guard lock(mu);
  for (const auto& [key, spec] : cache) {
    if (key == ref) return spec;
  }
  MultitaskSpec raw = ref.kind == DatasetRef::Kind::kSynth
                          ? synth_generate(ref.synth_seed, ref.tasks, ref.classes, ref.image_side,
                                           ref.noise, ref.examples_per_class)
                          : load_image_dir(ref.directory, ref.image_side, ref.order_seed);
  auto spec = std::make_shared<const MultitaskSpec>(split_fixed(raw, ref.split_seed));
  if (cache.size() >= 8) cache.erase(cache.begin());
  cache.emplace_back(ref, spec);
  return spec;
}

}  // namespace mtlevo
