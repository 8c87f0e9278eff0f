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
#include "mtlevo/harness.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "mtlevo/error.hpp"

namespace mtlevo {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw HarnessError("frame exceeds size limit");
  const auto n = std::uint32_t(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(char((n >> 24) & 0xFF));
  out.push_back(char((n >> 16) & 0xFF));
  out.push_back(char((n >> 8) & 0xFF));
  out.push_back(char(n & 0xFF));
  out.append(payload);
  return out;
}

std::optional<std::string> take_frame(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  const auto b = reinterpret_cast<const unsigned char*>(buffer.data());
  const std::uint32_t n = (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
                          (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  if (n > kMaxFrameBytes) throw HarnessError("incoming frame of " + std::to_string(n) + " bytes");
  if (buffer.size() < 4 + std::size_t(n)) return std::nullopt;
  std::string payload = buffer.substr(4, n);
  buffer.erase(0, 4 + std::size_t(n));
  return payload;
}

HostPort parse_host_port(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == text.size()) {
    throw ConfigError("address '" + std::string(text) + "' is not host:port");
  }
  HostPort hp;
  hp.host = std::string(text.substr(0, colon));
  if (hp.host.empty()) hp.host = "0.0.0.0";
  const std::string port(text.substr(colon + 1));
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) throw ConfigError("bad port in '" + std::string(text) + "'");
  hp.port = std::uint16_t(p);
  return hp;
}

namespace {

std::string message(std::string_view type, json body = json::object()) {
  body["type"] = type;
  return encode_frame(body.dump());
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(std::size_t(n));
  }
  return true;
}

bool recv_exact(int fd, char* out, std::size_t n) {
  while (n > 0) {
    const ssize_t got = ::recv(fd, out, n, 0);
    if (got == 0) return false;
    if (got < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    out += got;
    n -= std::size_t(got);
  }
  return true;
}

std::optional<std::string> read_frame_blocking(int fd) {
  char head[4];
  if (!recv_exact(fd, head, 4)) return std::nullopt;
  std::string buf(head, 4);
  const auto b = reinterpret_cast<const unsigned char*>(head);
  const std::uint32_t n = (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
                          (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  if (n > kMaxFrameBytes) return std::nullopt;
  buf.resize(4 + n);
  if (!recv_exact(fd, buf.data() + 4, n)) return std::nullopt;
  return take_frame(buf);
}

int connect_to(const HostPort& hp) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(hp.port);
  if (::getaddrinfo(hp.host.c_str(), port.c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

double seconds_since(Clock::time_point t, Clock::time_point now) {
  return std::chrono::duration<double>(now - t).count();
}

}  // namespace

struct Coordinator::Impl {
  struct Conn {
    int fd = -1;
    std::string inbuf;
    std::string worker_id;
    bool hello = false;
    bool busy = false;
    std::optional<std::size_t> job;  // index into the current batch
    Clock::time_point last_seen;
    Clock::time_point assigned_at;
    bool dead = false;
  };

  HarnessOptions opt;
  int listen_fd = -1;
  std::uint16_t port = 0;
  std::vector<Conn> conns;
  std::vector<std::string> events;
  mutable std::mutex mu;  // guards events for readers on other threads

  void note(std::string e) {
    std::lock_guard lock(mu);
    events.push_back(std::move(e));
  }

  void accept_all(Clock::time_point now) {
    while (true) {
      const int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) return;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      Conn c;
      c.fd = fd;
      c.last_seen = now;
      conns.push_back(std::move(c));
    }
  }
};

Coordinator::Coordinator(const std::string& bind_addr, HarnessOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->opt = options;
  const HostPort hp = parse_host_port(bind_addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(hp.port);
  if (::getaddrinfo(hp.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    throw HarnessError("cannot resolve bind address " + bind_addr);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_NONBLOCK, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw HarnessError("socket() failed");
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd);
    throw HarnessError("cannot listen on " + bind_addr + ": " + err);
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  impl_->listen_fd = fd;
  impl_->port = ntohs(addr.sin_port);
}

Coordinator::~Coordinator() {
  try {
    shutdown();
  } catch (...) {
  }
}

std::uint16_t Coordinator::port() const { return impl_->port; }

std::size_t Coordinator::worker_count() const {
  return std::size_t(std::count_if(impl_->conns.begin(), impl_->conns.end(),
                                   [](const auto& c) { return c.hello && !c.dead; }));
}

std::vector<std::string> Coordinator::events() const {
  std::lock_guard lock(impl_->mu);
  return impl_->events;
}

std::vector<JobResult> Coordinator::evaluate(const std::vector<Job>& jobs) {
  Impl& s = *impl_;
  if (s.listen_fd < 0) throw StateError("coordinator is shut down");
  const std::size_t n = jobs.size();
  std::map<std::uint64_t, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(jobs[i].job_id, i).second) {
      throw ConfigError("duplicate job id " + std::to_string(jobs[i].job_id));
    }
  }
  std::vector<std::optional<JobResult>> results(n);
  std::vector<std::size_t> attempts(n, 0);
  std::deque<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) pending.push_back(i);
  std::size_t resolved = 0;

  auto now = Clock::now();
  for (auto& c : s.conns) {
    c.last_seen = now;
    c.job.reset();  // a worker still busy from an earlier batch stays busy
  }
  auto last_with_worker = now;

  auto give_up = [&](std::size_t i, JobStatus status, const std::string& why) {
    if (results[i]) return;
    JobResult r;
    r.job_id = jobs[i].job_id;
    r.status = status;
    r.message = why;
    results[i] = std::move(r);
    ++resolved;
  };
  auto requeue = [&](std::size_t i, const std::string& why) {
    if (results[i]) return;
    if (attempts[i] >= s.opt.max_attempts) {
      give_up(i, JobStatus::kTimeout, why + "; attempts exhausted");
      return;
    }
    if (std::find(pending.begin(), pending.end(), i) == pending.end()) pending.push_front(i);
    s.note("reassign job " + std::to_string(jobs[i].job_id) + ": " + why);
  };

  while (resolved < n) {
    now = Clock::now();
    for (auto& c : s.conns) {
      while (c.hello && !c.busy && !c.dead && !pending.empty()) {
        const std::size_t i = pending.front();
        pending.pop_front();
        if (results[i]) continue;
        json body;
        body["job"] = json::parse(job_to_json(jobs[i]));
        if (!send_all(c.fd, message("job", body))) {
          c.dead = true;
          pending.push_front(i);
          break;
        }
        c.busy = true;
        c.job = i;
        c.assigned_at = now;
        ++attempts[i];
      }
    }

    std::vector<pollfd> fds;
    fds.push_back({s.listen_fd, POLLIN, 0});
    for (auto& c : s.conns) fds.push_back({c.fd, POLLIN, 0});
    ::poll(fds.data(), fds.size(), 50);
    now = Clock::now();
    if (fds[0].revents & POLLIN) s.accept_all(now);

    for (std::size_t k = 0; k + 1 < fds.size(); ++k) {
      auto& c = s.conns[k];
      if (!(fds[k + 1].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      char buf[65536];
      while (true) {
        const ssize_t got = ::recv(c.fd, buf, sizeof buf, MSG_DONTWAIT);
        if (got > 0) {
          c.inbuf.append(buf, std::size_t(got));
          continue;
        }
        if (got == 0 || (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)) c.dead = true;
        break;
      }
      try {
        while (auto frame = take_frame(c.inbuf)) {
          c.last_seen = now;
          json msg = json::parse(*frame);
          const std::string type = msg.at("type").get<std::string>();
          if (type == "hello") {
            c.hello = true;
            c.worker_id = msg.value("worker_id", "worker");
          } else if (type == "result") {
            JobResult r = result_from_json(msg.at("result").dump());
            c.busy = false;
            c.job.reset();
            auto it = index.find(r.job_id);
            if (it == index.end() || results[it->second]) {
              s.note("drop duplicate result for job " + std::to_string(r.job_id));
              continue;
            }
            if (r.worker_id.empty()) r.worker_id = c.worker_id;
            results[it->second] = std::move(r);
            ++resolved;
          }
          // heartbeat: last_seen already updated
        }
      } catch (const std::exception& e) {
        s.note("drop worker " + c.worker_id + ": bad frame (" + e.what() + ")");
        c.dead = true;
      }
    }

    for (auto& c : s.conns) {
      if (!c.dead && seconds_since(c.last_seen, now) > s.opt.liveness_timeout_s) {
        s.note("worker " + c.worker_id + " missed heartbeats");
        c.dead = true;
      }
      if (!c.dead && c.job && seconds_since(c.assigned_at, now) > jobs[*c.job].deadline_s) {
        const std::size_t i = *c.job;
        c.job.reset();  // the worker stays busy until it answers
        requeue(i, "deadline passed on " + c.worker_id);
      }
    }
    for (auto& c : s.conns) {
      if (!c.dead) continue;
      if (c.job) requeue(*c.job, "worker " + c.worker_id + " disconnected");
      ::close(c.fd);
    }
    std::erase_if(s.conns, [](const auto& c) { return c.dead; });

    if (worker_count() > 0) {
      last_with_worker = now;
    } else if (seconds_since(last_with_worker, now) > s.opt.connect_timeout_s) {
      throw HarnessError("no worker connected for " + std::to_string(s.opt.connect_timeout_s) +
                         " s with " + std::to_string(n - resolved) + " jobs outstanding");
    }
  }
  std::vector<JobResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

void Coordinator::shutdown() {
  Impl& s = *impl_;
  for (auto& c : s.conns) {
    send_all(c.fd, message("shutdown"));
    ::close(c.fd);
  }
  s.conns.clear();
  if (s.listen_fd >= 0) {
    ::close(s.listen_fd);
    s.listen_fd = -1;
  }
}

std::vector<JobResult> serve_coordinator(const std::string& bind_addr, const std::vector<Job>& jobs,
                                         const HarnessOptions& options) {
  Coordinator c(bind_addr, options);
  auto out = c.evaluate(jobs);
  c.shutdown();
  return out;
}

Evaluator coordinator_evaluator(std::shared_ptr<Coordinator> coordinator) {
  return [coordinator](const std::vector<Job>& jobs) { return coordinator->evaluate(jobs); };
}

int run_worker(std::string coordinator_addr, const HarnessOptions& options, std::string worker_id) {
  if (coordinator_addr.empty()) {
    const char* env = std::getenv(kCoordinatorEnv);
    if (!env || !*env) {
      throw ConfigError(std::string("no coordinator address and ") + kCoordinatorEnv + " is unset");
    }
    coordinator_addr = env;
  }
  const HostPort hp = parse_host_port(coordinator_addr);
  if (worker_id.empty()) {
    char host[256] = {0};
    ::gethostname(host, sizeof host - 1);
    worker_id = std::string(host) + ":" + std::to_string(::getpid());
  }
  double backoff = options.backoff_initial_s;
  std::size_t failures = 0;
  while (true) {
    const int fd = connect_to(hp);
    if (fd < 0) {
      ++failures;
      if (options.max_connect_attempts > 0 && failures >= options.max_connect_attempts) {
        throw HarnessError("cannot reach coordinator at " + coordinator_addr);
      }
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff = std::min(options.backoff_max_s, backoff * 2.0);
      continue;
    }
    failures = 0;
    backoff = options.backoff_initial_s;

    std::mutex send_mu;
    auto send = [&](const std::string& frame) {
      std::lock_guard lock(send_mu);
      return send_all(fd, frame);
    };
    std::mutex cv_mu;
    std::condition_variable cv;
    bool stop = false;
    std::thread heartbeat([&] {
      std::unique_lock lock(cv_mu);
      while (!cv.wait_for(lock, std::chrono::duration<double>(options.heartbeat_interval_s),
                          [&] { return stop; })) {
        lock.unlock();
        send(message("heartbeat"));
        lock.lock();
      }
    });
    auto stop_heartbeat = [&] {
      {
        std::lock_guard lock(cv_mu);
        stop = true;
      }
      cv.notify_all();
      heartbeat.join();
    };

    bool shutdown = false;
    if (send(message("hello", {{"worker_id", worker_id}}))) {
      while (auto frame = read_frame_blocking(fd)) {
        json msg;
        try {
          msg = json::parse(*frame);
        } catch (const json::exception&) {
          break;
        }
        const std::string type = msg.value("type", "");
        if (type == "shutdown") {
          shutdown = true;
          break;
        }
        if (type != "job") continue;
        JobResult r;
        try {
          const Job job = job_from_json(msg.at("job").dump());
          r = evaluate_local(job, worker_id);
        } catch (const std::exception& e) {
          r.job_id = msg.contains("job") ? msg["job"].value("job_id", std::uint64_t{0}) : 0;
          r.status = JobStatus::kFailed;
          r.worker_id = worker_id;
          r.message = e.what();
        }
        if (!send(message("result", {{"result", json::parse(result_to_json(r))}}))) break;
      }
    }
    stop_heartbeat();
    ::close(fd);
    if (shutdown) return 0;
    std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    backoff = std::min(options.backoff_max_s, backoff * 2.0);
  }
}

}  // namespace mtlevo
