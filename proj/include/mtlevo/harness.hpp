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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtlevo/coevolve.hpp"
#include "mtlevo/job.hpp"

namespace mtlevo {

/// Environment variable read by workers when no address is given.
inline constexpr const char* kCoordinatorEnv = "MTLEVO_COORDINATOR";

struct HarnessOptions {
  double heartbeat_interval_s = 10.0;
  double liveness_timeout_s = 30.0;
  /// Coordinator: give up when no worker is connected for this long while
  /// jobs are outstanding.
  double connect_timeout_s = 60.0;
  /// Coordinator: a job reissued this many times is recorded as timeout.
  std::size_t max_attempts = 3;
  double backoff_initial_s = 1.0;
  double backoff_max_s = 60.0;
  /// Worker: consecutive failed connection attempts before giving up; 0 = never.
  std::size_t max_connect_attempts = 0;
};

// Frames are a 4-byte big-endian length followed by one JSON message.
std::string encode_frame(std::string_view payload);
/// Removes and returns the first complete frame in buffer, if any.
std::optional<std::string> take_frame(std::string& buffer);
inline constexpr std::size_t kMaxFrameBytes = 64u << 20;

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};
HostPort parse_host_port(std::string_view text);  // ConfigError when malformed

class Coordinator {
 public:
  explicit Coordinator(const std::string& bind_addr, HarnessOptions options = {});
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  std::uint16_t port() const;
  std::size_t worker_count() const;

  /// Hands jobs to idle workers and returns one result per job, in job
  /// order. The first result for a job id wins; later ones are dropped.
  std::vector<JobResult> evaluate(const std::vector<Job>& jobs);

  /// Sends shutdown to every connected worker and closes the listener.
  void shutdown();

  /// Reassignments, duplicates and dead workers, in order.
  std::vector<std::string> events() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<JobResult> serve_coordinator(const std::string& bind_addr, const std::vector<Job>& jobs,
                                         const HarnessOptions& options = {});

Evaluator coordinator_evaluator(std::shared_ptr<Coordinator> coordinator);

/// Connects, evaluates jobs until a shutdown message arrives, and returns
/// 0. Lost connections are retried with exponential backoff. An empty
/// address falls back to MTLEVO_COORDINATOR.
int run_worker(std::string coordinator_addr, const HarnessOptions& options = {},
               std::string worker_id = {});

}  // namespace mtlevo
