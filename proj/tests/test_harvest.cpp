#include <cmath>

#include "doctest.h"
#include "riot/error.hpp"
#include "riot/harvest.hpp"

using namespace riot;
using namespace riot::scenario;

namespace {

Timeline constant_load(double mw, double seconds) {
  Timeline t;
  t.entries.push_back({0.0, seconds, mw, Unit::kPowerMw, "load"});
  t.total_duration_s = seconds;
  return t;
}

HarvestConfig cap(double c, double v0, double vmax, double vcut) {
  HarvestConfig cfg;
  cfg.supercap = {c, v0, vmax, vcut, std::nullopt};
  return cfg;
}

}  // namespace

TEST_CASE("equilibrium holds the voltage") {
  auto cfg = cap(0.5, 2.2, 2.7, 1.8);
  cfg.input_power_mw = {{0.0, 12.0}};
  auto r = simulate_harvest(constant_load(12.0, 100.0), cfg);
  CHECK(r.v_end == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(r.events.empty());
}

TEST_CASE("discharge matches the closed-form energy balance") {
  auto cfg = cap(1.0, 2.0, 2.5, 1.0);
  auto r = simulate_harvest(constant_load(10.0, 1.0), cfg);
  const double closed = std::sqrt(4.0 - 2.0 * 0.010 / 1.0);
  CHECK(closed == doctest::Approx(1.995).epsilon(1e-3));
  CHECK(std::abs(r.v_end - closed) / closed < 1e-3);
}

TEST_CASE("energy conservation without clipping") {
  auto sc = builtin_scenario("1m");
  sc.horizon_s = 600.0;
  auto t = expand_scenario(sc);
  auto cfg = cap(5.0, 2.4, 2.7, 0.5);
  cfg.input_power_mw = {{0.0, 5.0}, {200.0, 20.0}, {400.0, 0.0}};
  auto r = simulate_harvest(t, cfg);
  REQUIRE(r.events.empty());
  REQUIRE(r.clipped_j == 0.0);
  const double stored = 0.5 * cfg.supercap.capacitance_f * (r.v_end * r.v_end - 2.4 * 2.4);
  const double net = 5e-3 * 200 + 20e-3 * 200 - integrate(t).energy_j;
  CHECK(std::abs(stored - net) <= 0.005 * std::abs(net));
  CHECK(r.harvested_j - r.consumed_j == doctest::Approx(net).epsilon(1e-9));
}

TEST_CASE("depletion, halt and restore") {
  auto cfg = cap(0.1, 2.0, 2.5, 1.8);
  cfg.halted_power_mw = 0.0;
  cfg.input_power_mw = {{0.0, 0.0}, {100.0, 50.0}};
  auto r = simulate_harvest(constant_load(30.0, 200.0), cfg);
  REQUIRE(r.events.size() >= 2);
  CHECK(r.events[0].kind == HarvestEventKind::kDepleted);
  // 0.5 * 0.1 * (4 - 3.24) = 0.038 J at 30 mW -> about 1.27 s
  CHECK(r.events[0].t_s == doctest::Approx(0.038 / 0.030).epsilon(0.02));
  CHECK(r.events[1].kind == HarvestEventKind::kRestored);
  CHECK(r.events[1].t_s > 100.0);
  CHECK(r.halted_s > 98.0);
  for (const auto& s : r.voltage) CHECK(s.v >= 1.8 - 1e-12);
}

TEST_CASE("ceiling at v_max") {
  auto cfg = cap(0.1, 2.6, 2.7, 1.8);
  cfg.input_power_mw = {{0.0, 100.0}};
  auto r = simulate_harvest(constant_load(1.0, 60.0), cfg);
  CHECK(r.v_end == doctest::Approx(2.7));
  CHECK(r.clipped_j > 0.0);
  for (const auto& s : r.voltage) CHECK(s.v <= 2.7 + 1e-12);
}

TEST_CASE("harvest validation and numeric guard") {
  auto t = constant_load(10.0, 1.0);
  CHECK_THROWS_AS(simulate_harvest(t, cap(0.0, 2.0, 2.5, 1.0)), ValidationError);
  CHECK_THROWS_AS(simulate_harvest(t, cap(1.0, 1.0, 2.5, 1.0)), ValidationError);
  CHECK_THROWS_AS(simulate_harvest(t, cap(1.0, 3.0, 2.5, 1.0)), ValidationError);
  auto bad = cap(1.0, 2.0, 2.5, 1.0);
  bad.input_power_mw = {{5.0, 1.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(simulate_harvest(t, bad), ValidationError);
  CHECK_THROWS_AS(simulate_harvest(constant_load(100.0, 10.0), cap(0.001, 0.1, 2.5, 0.0)), DomainError);
  CHECK(parse_harvest_source("rf") == HarvestSource::kRf);
  CHECK_THROWS_AS(parse_harvest_source("solar"), ValidationError);
}

TEST_CASE("harvest is deterministic") {
  auto t = expand_scenario(builtin_scenario("4m"));
  auto cfg = cap(1.0, 2.5, 2.7, 1.8);
  cfg.input_power_mw = {{0.0, 1.0}};
  auto a = simulate_harvest(t, cfg);
  auto b = simulate_harvest(t, cfg);
  CHECK(a.v_end == b.v_end);
  CHECK(a.voltage.size() == b.voltage.size());
  CHECK(a.events.size() == b.events.size());
}
