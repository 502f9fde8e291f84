#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "riot/collect/guest.hpp"
#include "riot/collect/host.hpp"
#include "riot/collect/protocol.hpp"
#include "riot/trace.hpp"

using namespace riot;
using namespace riot::collect;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("riot_collect_" + name);
  fs::remove_all(d);
  return d;
}

trace::CurrentTrace ramp(const std::string& id, std::size_t n, std::int64_t t0 = 0) {
  trace::CurrentTrace t;
  t.device_id = id;
  t.t0_us = t0;
  t.sample_rate_hz = 1000.0;
  for (std::size_t k = 0; k < n; ++k) t.samples_ua.push_back(0.1 * static_cast<double>(k) + 1.0 / 3.0);
  t.config_tags["vlc.pwm_duty_pct"] = "50";
  return t;
}

HostOptions host_opts(const fs::path& dir) {
  HostOptions o;
  o.port = 0;
  o.output_dir = dir;
  o.session_timeout = Millis(3000);
  return o;
}

GuestOptions guest_opts(std::uint16_t port) {
  GuestOptions g;
  g.port = port;
  g.ack_timeout = Millis(500);
  g.session_timeout = Millis(3000);
  return g;
}

}  // namespace

TEST_CASE("message round trips") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1e6);
  std::vector<double> big(10000);
  for (auto& x : big) x = u(rng);
  const std::vector<Message> msgs = {
      Hello{"node-1", 1000.0, 1, 1'700'000'000'000'123}, ConfigReport{{{"ble.interval", "45"}}},
      SyncRequest{42}, SyncResponse{1, 2, 3}, SampleBatch{7, 700, big}, End{10000}, Ack{7}, Reject{"duplicate"}};
  for (const auto& m : msgs) {
    CAPTURE(type_name(m));
    CHECK(decode(encode(m)) == m);
  }
  const auto f = encode(Ack{7});
  CHECK(f.size() == 4 + encode_body(Ack{7}).size());
  CHECK(static_cast<unsigned char>(f[0]) == 0);
}

TEST_CASE("frame errors") {
  const auto f = encode(Ack{7});
  CHECK_THROWS_AS(decode(f.substr(0, f.size() - 1)), FrameError);
  CHECK_THROWS_AS(decode(f.substr(0, 3)), FrameError);
  CHECK_THROWS_AS(decode(std::string("\x01\x00\x00\x01", 4) + "x"), FrameError);  // > 16 MiB
  try {
    decode_body(R"({"type":"Telemetry"})");
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("Telemetry") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_body(R"({"type":"Ack"})"), ProtocolError);
  CHECK_THROWS_AS(decode_body("not json"), ProtocolError);
}

TEST_CASE("clock offset estimation") {
  auto c = estimate_offset(100, 150, 152, 110);
  CHECK(c.offset_us == 46.0);
  CHECK(c.round_trip_us == 8.0);
  const std::int64_t delta = -12345, d = 777;
  const std::int64_t t1 = 1000, t2 = t1 + d + delta, t3 = t2 + 5, t4 = t3 - delta + d;
  CHECK(estimate_offset(t1, t2, t3, t4).offset_us == static_cast<double>(delta));
  CHECK_THROWS_AS(estimate_offset(100, 150, 149, 110), ValidationError);
  CHECK_THROWS_AS(estimate_offset(100, 150, 152, 99), ValidationError);
  CHECK(median_offset({{5, 1, 0}, {1, 1, 0}, {9, 1, 0}}).offset_us == 5.0);
}

TEST_CASE("single guest streams losslessly for any batch size") {
  const auto dir = fresh_dir("lossless");
  Host host(host_opts(dir));
  host.start();
  auto src = ramp("g1", 2500);
  std::vector<std::size_t> sizes = {1, 7, 1000, 5000};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    auto s = src;
    s.device_id = "g" + std::to_string(i);
    auto g = guest_opts(host.port());
    g.batch_size = sizes[i];
    auto r = guest_run(s, g);
    CHECK(r.samples_sent == 2500);
  }
  REQUIRE(host.wait_for_sessions(sizes.size(), Millis(5000)));
  host.stop();
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    auto back = trace::read_trace(dir / ("g" + std::to_string(i) + ".csv"));
    CHECK(back.samples_ua == src.samples_ua);
    CHECK(back.config_tags.at("partial") == "false");
    CHECK(back.config_tags.at("vlc.pwm_duty_pct") == "50");
  }
  auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  CHECK(manifest["devices"].size() == sizes.size());
}

TEST_CASE("duplicate device id and wrong version are refused") {
  const auto dir = fresh_dir("refuse");
  Host host(host_opts(dir));
  host.start();
  auto g = guest_opts(host.port());
  guest_run(ramp("dup", 10), g);
  try {
    guest_run(ramp("dup", 10), g);
    FAIL("expected refusal");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("duplicate device_id") != std::string::npos);
  }
  g.protocol_version = 2;
  try {
    guest_run(ramp("v2", 10), g);
    FAIL("expected refusal");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("protocol_version") != std::string::npos);
  }
  REQUIRE(host.wait_for_sessions(3, Millis(3000)));
  host.stop();
  auto s = host.summary();
  CHECK(s.sessions.size() == 1);
  CHECK(s.refused.size() == 2);
}

TEST_CASE("guest disconnect mid-stream flags the trace partial, others unaffected") {
  const auto dir = fresh_dir("partial");
  Host host(host_opts(dir));
  host.start();
  auto quitter = guest_opts(host.port());
  quitter.batch_size = 100;
  quitter.disconnect_after_batches = 3;
  std::thread t([&] { guest_run(ramp("quitter", 1000), quitter); });
  auto r = guest_run(ramp("steady", 1000), guest_opts(host.port()));
  t.join();
  CHECK(r.samples_sent == 1000);
  REQUIRE(host.wait_for_sessions(2, Millis(5000)));
  host.stop();
  auto q = trace::read_trace(dir / "quitter.csv");
  CHECK(q.size() == 300);
  CHECK(q.config_tags.at("partial") == "true");
  CHECK(trace::read_trace(dir / "steady.csv").config_tags.at("partial") == "false");
  auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  int partial = 0;
  for (const auto& d : manifest["devices"]) partial += d["partial"].get<bool>();
  CHECK(partial == 1);
}

TEST_CASE("lost acks are retried") {
  const auto dir = fresh_dir("retry");
  auto ho = host_opts(dir);
  ho.drop_acks_for_testing = 2;
  Host host(ho);
  host.start();
  auto g = guest_opts(host.port());
  g.ack_timeout = Millis(50);
  g.batch_size = 10;
  auto r = guest_run(ramp("flaky", 100), g);
  CHECK(r.retries == 2);
  REQUIRE(host.wait_for_sessions(1, Millis(3000)));
  host.stop();
  CHECK(trace::read_trace(dir / "flaky.csv").samples_ua == ramp("flaky", 100).samples_ua);
}

TEST_CASE("ack timeout aborts with the seq position") {
  const auto dir = fresh_dir("timeout");
  auto ho = host_opts(dir);
  ho.drop_acks_for_testing = 100;
  Host host(ho);
  host.start();
  auto g = guest_opts(host.port());
  g.ack_timeout = Millis(10);
  try {
    guest_run(ramp("mute", 50), g);
    FAIL("expected Ack timeout");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("seq_no 1") != std::string::npos);
  }
  host.stop();
}

TEST_CASE("unreachable host") {
  Listener l("127.0.0.1", 0);
  const auto port = l.port();
  l.close();
  auto g = guest_opts(port);
  g.connect_timeout = Millis(500);
  CHECK_THROWS_AS(guest_run(ramp("x", 5), g), IoError);
}
