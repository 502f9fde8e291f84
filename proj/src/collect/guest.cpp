#include "riot/collect/guest.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace riot::collect {

namespace {

void sleep_us(std::int64_t us) {
  if (us > 0) std::this_thread::sleep_for(std::chrono::microseconds(us));
}

/// Sends `m` and waits for Ack{seq}, resending with doubling timeouts.
void send_acked(Socket& s, const Message& m, std::uint64_t seq, const GuestOptions& opt, GuestResult& res) {
  Millis timeout = opt.ack_timeout;
  for (int attempt = 0;; ++attempt) {
    s.send_message(m);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    try {
      for (;;) {
        const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw TimeoutError("ack timeout");
        auto reply = s.recv_message(left);
        if (auto* a = std::get_if<Ack>(&reply)) {
          if (a->seq_no == seq) return;
          if (a->seq_no < seq) continue;  // late duplicate
          throw ProtocolError("Ack for future seq_no " + std::to_string(a->seq_no));
        }
        if (auto* r = std::get_if<Reject>(&reply)) throw ProtocolError("host rejected session: " + r->reason);
        throw ProtocolError("unexpected " + std::string(type_name(reply)) + " while awaiting Ack");
      }
    } catch (const TimeoutError&) {
      if (attempt >= opt.max_retries)
        throw ProtocolError("Ack timeout at seq_no " + std::to_string(seq) + " after " +
                            std::to_string(opt.max_retries) + " retries");
      ++res.retries;
      timeout *= 2;
    }
  }
}

}  // namespace

GuestResult guest_run(const trace::CurrentTrace& source, const GuestOptions& opt) {
  if (opt.batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (!(source.sample_rate_hz > 0.0)) throw ValidationError("source sample_rate_hz must be > 0");
  const ClockFn base = opt.clock ? opt.clock : ClockFn(system_now_us);
  const auto guest_now = [&] { return base() + opt.clock_skew_us; };

  GuestResult res;
  Socket s = connect_tcp(opt.host, opt.port, opt.connect_timeout);
  s.send_message(Hello{source.device_id, source.sample_rate_hz, opt.protocol_version, source.t0_us});
  s.send_message(ConfigReport{source.config_tags});

  for (;;) {
    auto m = s.recv_message(opt.session_timeout);
    if (auto* r = std::get_if<SyncRequest>(&m)) {
      sleep_us(opt.sync_delay_us);
      const std::int64_t t2 = guest_now();
      const std::int64_t t3 = guest_now();
      sleep_us(opt.sync_delay_us);
      s.send_message(SyncResponse{r->t1_us, t2, t3});
    } else if (auto* a = std::get_if<Ack>(&m); a != nullptr && a->seq_no == 0) {
      break;
    } else if (auto* rej = std::get_if<Reject>(&m)) {
      throw ProtocolError("host rejected session: " + rej->reason);
    } else {
      throw ProtocolError("unexpected " + std::string(type_name(m)) + " before streaming");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = source.size();
  std::uint64_t seq = 0;
  for (std::size_t i = 0; i < n; i += opt.batch_size) {
    if (opt.disconnect_after_batches && res.batches_sent == *opt.disconnect_after_batches) {
      s.close();
      res.disconnected_early = true;
      return res;
    }
    const std::size_t k = std::min(opt.batch_size, n - i);
    SampleBatch b{++seq, i, std::vector<double>(source.samples_ua.begin() + i, source.samples_ua.begin() + i + k)};
    if (opt.realtime) {
      std::this_thread::sleep_until(start + std::chrono::microseconds(static_cast<std::int64_t>(
                                                static_cast<double>(i + k) * 1e6 / source.sample_rate_hz)));
    }
    send_acked(s, b, seq, opt, res);
    ++res.batches_sent;
    res.samples_sent += k;
  }
  send_acked(s, End{n}, seq, opt, res);
  return res;
}

}  // namespace riot::collect
