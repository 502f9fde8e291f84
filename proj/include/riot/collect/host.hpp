#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "riot/collect/clock.hpp"
#include "riot/collect/socket.hpp"

namespace riot::collect {

using ClockFn = std::function<std::int64_t()>;

/// Wall-clock time in µs since the epoch.
std::int64_t system_now_us();

struct HostOptions {
  std::string bind_addr = "127.0.0.1";
  std::uint16_t port = kDefaultPort;  // 0: ephemeral
  std::filesystem::path output_dir = "collect_out";
  int sync_rounds = 3;
  Millis session_timeout{10000};
  ClockFn clock;                       // default: system_now_us
  std::size_t drop_acks_for_testing = 0;  // first N batch Acks, re-Acks included, are withheld
};

struct SessionRecord {
  std::string device_id;
  std::size_t samples = 0;
  std::size_t batches = 0;
  bool partial = false;
  std::string reason;  // why the session ended early
  double offset_us = 0.0;
  double round_trip_us = 0.0;
  std::int64_t t0_host_us = 0;
  double sample_rate_hz = 0.0;
  std::string trace_file;
};

struct RefusedSession {
  std::string device_id;
  std::string reason;
};

struct HostSummary {
  std::vector<SessionRecord> sessions;
  std::vector<RefusedSession> refused;
  nlohmann::ordered_json manifest() const;
};

/// Accepts guest sessions on a background thread, one handler thread each.
/// Trace files and manifest.json land in output_dir.
class Host {
 public:
  explicit Host(HostOptions opt);
  ~Host();
  Host(const Host&) = delete;
  Host& operator=(const Host&) = delete;

  void start();
  std::uint16_t port() const { return port_; }
  /// True once `n` sessions have finished (complete or partial) or been refused.
  bool wait_for_sessions(std::size_t n, Millis timeout);
  void stop();
  HostSummary summary() const;

 private:
  void accept_loop();
  void handle(Socket s);
  void finish(SessionRecord rec);
  void refuse(const std::string& id, const std::string& reason);
  void write_manifest_locked();

  HostOptions opt_;
  std::unique_ptr<Listener> listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::vector<std::thread> workers_;
  std::vector<Socket*> live_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::set<std::string> claimed_ids_;
  HostSummary summary_;
  std::size_t acks_dropped_ = 0;
};

/// Runs a host until `sessions` sessions have ended or `max_wait` elapses.
HostSummary host_serve(const HostOptions& opt, std::size_t sessions, Millis max_wait);

}  // namespace riot::collect
