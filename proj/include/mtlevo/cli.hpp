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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtlevo/config.hpp"
#include "mtlevo/harness.hpp"

namespace mtlevo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// SHA-1 of a git blob holding content, as lowercase hex.
std::string git_blob_sha1(std::string_view content);

/// SHA-1 over labels and pixels of every task, in task order.
std::string dataset_sha1(const MultitaskSpec& spec);

std::string ctr_row_to_json(const CtrHistoryRow& row);

/// Runs the configured pipeline and fills out_dir with config.json,
/// manifest.json, history.jsonl (evolved and CTR runs), checkpoint.json
/// (CTR and CMTR), best_network.json (evolved runs), report.json and run.log.
int cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool dry_run,
            std::ostream& out, std::ostream& err);

/// Long-format CSV (run_id, step, best, mean) of one or more history files.
int cmd_report(const std::vector<std::filesystem::path>& histories, std::ostream& out,
               std::ostream& err);

/// DOT text of module k of a checkpoint, or of task t's champion routing.
int cmd_export_dot(const std::filesystem::path& checkpoint, std::optional<std::size_t> module,
                   std::optional<std::size_t> task, std::ostream& out, std::ostream& err);

/// Test accuracy of a run directory's checkpoint.
int cmd_eval_test(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

/// Whole command line, subcommand included. Returns the exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtlevo
