#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "riot/collect/host.hpp"
#include "riot/trace.hpp"

namespace riot::collect {

struct GuestOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
  std::size_t batch_size = 100;
  Millis ack_timeout{1000};  // doubles on each retry
  int max_retries = 3;
  bool realtime = false;     // pace batches at the source sample rate
  std::int64_t clock_skew_us = 0;   // simulated guest clock = clock() + skew
  std::int64_t sync_delay_us = 0;   // injected symmetric one-way delay per sync exchange
  int protocol_version = kProtocolVersion;
  std::optional<std::size_t> disconnect_after_batches;  // fault injection
  Millis connect_timeout{5000};
  Millis session_timeout{10000};
  ClockFn clock;  // default: system_now_us
};

struct GuestResult {
  std::size_t batches_sent = 0;
  std::size_t samples_sent = 0;
  std::size_t retries = 0;
  bool disconnected_early = false;
};

/// Streams the trace through one host session. `source.t0_us` is taken to be
/// on the guest clock. Throws IoError (unreachable host) or ProtocolError
/// (rejection, Ack timeout).
GuestResult guest_run(const trace::CurrentTrace& source, const GuestOptions& opt);

}  // namespace riot::collect
