#include "riot/collect/host.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "riot/kvconfig.hpp"
#include "riot/trace.hpp"

namespace riot::collect {

std::int64_t system_now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

namespace {

bool valid_device_id(const std::string& id) {
  if (id.empty() || id.size() > 64 || id == "network" || id == "manifest") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && id[0] != '.';
}

void try_send(Socket& s, const Message& m) {
  try {
    s.send_message(m);
  } catch (const Error&) {
  }
}

}  // namespace

nlohmann::ordered_json HostSummary::manifest() const {
  nlohmann::ordered_json devices = nlohmann::ordered_json::array();
  for (const auto& r : sessions) {
    devices.push_back({{"device_id", r.device_id},
                       {"trace_file", r.trace_file},
                       {"samples", r.samples},
                       {"batches", r.batches},
                       {"sample_rate_hz", r.sample_rate_hz},
                       {"t0_host_us", r.t0_host_us},
                       {"clock_offset_us", r.offset_us},
                       {"round_trip_us", r.round_trip_us},
                       {"partial", r.partial},
                       {"reason", r.reason}});
  }
  nlohmann::ordered_json ref = nlohmann::ordered_json::array();
  for (const auto& r : refused) ref.push_back({{"device_id", r.device_id}, {"reason", r.reason}});
  return {{"protocol_version", kProtocolVersion}, {"devices", std::move(devices)}, {"refused", std::move(ref)}};
}

Host::Host(HostOptions opt) : opt_(std::move(opt)) {
  if (!opt_.clock) opt_.clock = system_now_us;
  if (opt_.sync_rounds < 1) throw ValidationError("sync_rounds must be >= 1");
}

Host::~Host() { stop(); }

void Host::start() {
  std::error_code ec;
  std::filesystem::create_directories(opt_.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + opt_.output_dir.string() + ": " + ec.message());
  listener_ = std::make_unique<Listener>(opt_.bind_addr, opt_.port);
  port_ = listener_->port();
  {
    std::lock_guard lk(mu_);
    write_manifest_locked();
  }
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Host::accept_loop() {
  while (!stopping_) {
    std::optional<Socket> s;
    try {
      s = listener_->accept(Millis(100));
    } catch (const Error&) {
      if (stopping_) break;
      continue;
    }
    if (!s) continue;
    std::lock_guard lk(mu_);
    workers_.emplace_back([this, sock = std::move(*s)]() mutable { handle(std::move(sock)); });
  }
}

void Host::stop() {
  if (stopping_.exchange(true)) {
    return;
  }
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lk(mu_);
    for (Socket* s : live_) s->shutdown();
  }
  // Workers may still be appended by nobody now; join outside the lock.
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  if (listener_) listener_->close();
}

bool Host::wait_for_sessions(std::size_t n, Millis timeout) {
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, timeout, [&] { return summary_.sessions.size() + summary_.refused.size() >= n; });
}

HostSummary Host::summary() const {
  std::lock_guard lk(mu_);
  return summary_;
}

void Host::write_manifest_locked() {
  const auto path = opt_.output_dir / "manifest.json";
  const auto tmp = opt_.output_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    out << summary_.manifest().dump(2) << "\n";
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
}

void Host::finish(SessionRecord rec) {
  std::lock_guard lk(mu_);
  summary_.sessions.push_back(std::move(rec));
  write_manifest_locked();
  cv_.notify_all();
}

void Host::refuse(const std::string& id, const std::string& reason) {
  std::lock_guard lk(mu_);
  summary_.refused.push_back({id, reason});
  write_manifest_locked();
  cv_.notify_all();
}

void Host::handle(Socket s) {
  {
    std::lock_guard lk(mu_);
    live_.push_back(&s);
  }
  struct Unregister {
    Host* h;
    Socket* s;
    ~Unregister() {
      std::lock_guard lk(h->mu_);
      h->live_.erase(std::remove(h->live_.begin(), h->live_.end(), s), h->live_.end());
    }
  } unregister{this, &s};

  const auto timeout = opt_.session_timeout;
  Hello hello;
  try {
    auto m = s.recv_message(timeout);
    const auto* h = std::get_if<Hello>(&m);
    if (h == nullptr) {
      const std::string why = "expected Hello, got " + std::string(type_name(m));
      try_send(s, Reject{why});
      refuse("", why);
      return;
    }
    hello = *h;
  } catch (const Error& e) {
    refuse("", std::string("no Hello: ") + e.what());
    return;
  }

  std::string why;
  if (hello.protocol_version != kProtocolVersion)
    why = "unsupported protocol_version " + std::to_string(hello.protocol_version) + " (host speaks " +
          std::to_string(kProtocolVersion) + ")";
  else if (!valid_device_id(hello.device_id))
    why = "invalid device_id '" + hello.device_id + "'";
  else if (!(hello.sample_rate_hz > 0.0) || !std::isfinite(hello.sample_rate_hz))
    why = "sample_rate_hz must be > 0";
  if (why.empty()) {
    std::lock_guard lk(mu_);
    if (!claimed_ids_.insert(hello.device_id).second) why = "duplicate device_id '" + hello.device_id + "'";
  }
  if (!why.empty()) {
    try_send(s, Reject{why});
    refuse(hello.device_id, why);
    return;
  }

  SessionRecord rec;
  rec.device_id = hello.device_id;
  rec.sample_rate_hz = hello.sample_rate_hz;
  trace::CurrentTrace tr;
  tr.device_id = hello.device_id;
  tr.sample_rate_hz = hello.sample_rate_hz;
  bool offset_known = false;

  try {
    auto m = s.recv_message(timeout);
    auto* cfg = std::get_if<ConfigReport>(&m);
    if (cfg == nullptr) throw ProtocolError("protocol order: expected ConfigReport, got " + std::string(type_name(m)));
    tr.config_tags = cfg->config_tags;

    std::vector<ClockOffset> offsets;
    for (int attempt = 0; static_cast<int>(offsets.size()) < opt_.sync_rounds; ++attempt) {
      if (attempt >= 4 * opt_.sync_rounds) throw ProtocolError("too many rejected sync exchanges");
      const std::int64_t t1 = opt_.clock();
      s.send_message(SyncRequest{t1});
      auto r = s.recv_message(timeout);
      const std::int64_t t4 = opt_.clock();
      auto* resp = std::get_if<SyncResponse>(&r);
      if (resp == nullptr) throw ProtocolError("protocol order: expected SyncResponse, got " + std::string(type_name(r)));
      if (resp->t1_us != t1) throw ProtocolError("SyncResponse does not echo t1");
      try {
        offsets.push_back(estimate_offset(t1, resp->t2_us, resp->t3_us, t4));
      } catch (const ValidationError&) {
        // rejected measurement; run another exchange
      }
    }
    const auto best = median_offset(offsets);
    rec.offset_us = best.offset_us;
    rec.round_trip_us = best.round_trip_us;
    offset_known = true;
    s.send_message(Ack{0});

    std::uint64_t last_seq = 0;
    for (;;) {
      auto msg = s.recv_message(timeout);
      if (auto* b = std::get_if<SampleBatch>(&msg)) {
        if (b->seq_no == last_seq + 1 && b->first_sample_index == tr.samples_ua.size()) {
          tr.samples_ua.insert(tr.samples_ua.end(), b->samples_ua.begin(), b->samples_ua.end());
          last_seq = b->seq_no;
          ++rec.batches;
        } else if (b->seq_no != last_seq || last_seq == 0) {
          throw ProtocolError("out-of-order SampleBatch seq_no " + std::to_string(b->seq_no) + " after " +
                              std::to_string(last_seq));
        }
        // A repeat of the last stored batch is a guest retry: Ack again, store nothing.
        bool drop = false;
        {
          std::lock_guard lk(mu_);
          if (acks_dropped_ < opt_.drop_acks_for_testing) {
            ++acks_dropped_;
            drop = true;
          }
        }
        if (!drop) s.send_message(Ack{last_seq});
      } else if (auto* e = std::get_if<End>(&msg)) {
        if (e->total_samples != tr.samples_ua.size())
          throw ProtocolError("End reports " + std::to_string(e->total_samples) + " samples, host received " +
                              std::to_string(tr.samples_ua.size()));
        s.send_message(Ack{rec.batches});
        break;
      } else {
        throw ProtocolError("protocol order: unexpected " + std::string(type_name(msg)) + " while streaming");
      }
    }
  } catch (const Error& e) {
    rec.partial = true;
    rec.reason = e.what();
    if (e.code() == ErrorCode::kProtocol) try_send(s, Reject{rec.reason});
  }

  tr.t0_us = hello.t0_us - static_cast<std::int64_t>(std::llround(rec.offset_us));
  rec.t0_host_us = tr.t0_us;
  rec.samples = tr.samples_ua.size();
  tr.config_tags["clock_offset_us"] = format_double(rec.offset_us);
  tr.config_tags["round_trip_us"] = format_double(rec.round_trip_us);
  tr.config_tags["offset_known"] = offset_known ? "true" : "false";
  tr.config_tags["partial"] = rec.partial ? "true" : "false";
  rec.trace_file = hello.device_id + ".csv";
  try {
    trace::write_trace(tr, opt_.output_dir / rec.trace_file);
  } catch (const Error& e) {
    rec.partial = true;
    rec.reason += std::string(rec.reason.empty() ? "" : "; ") + e.what();
  }
  finish(std::move(rec));
}

HostSummary host_serve(const HostOptions& opt, std::size_t sessions, Millis max_wait) {
  Host h(opt);
  h.start();
  h.wait_for_sessions(sessions, max_wait);
  h.stop();
  return h.summary();
}

}  // namespace riot::collect
