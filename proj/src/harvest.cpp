#include "riot/harvest.hpp"

#include <algorithm>
#include <cmath>

#include "riot/calibration.hpp"
#include "riot/error.hpp"

namespace riot::scenario {

namespace {
constexpr double kEps = 1e-12;
constexpr double kVoltageFloor = 1e-6;
}  // namespace

std::string to_string(HarvestSource s) { return s == HarvestSource::kRf ? "rf" : "light"; }

HarvestSource parse_harvest_source(const std::string& s) {
  if (s == "rf" || s == "RF") return HarvestSource::kRf;
  if (s == "light" || s == "Light") return HarvestSource::kLight;
  throw ValidationError("unknown harvest source '" + s + "' (expected rf or light)");
}

double Supercap::restart_voltage() const {
  return v_restart_v ? *v_restart_v : v_cutoff_v + 0.1 * (v_max_v - v_cutoff_v);
}

std::size_t HarvestResult::depletion_count() const {
  return std::count_if(events.begin(), events.end(),
                       [](const HarvestEvent& e) { return e.kind == HarvestEventKind::kDepleted; });
}

void validate(const HarvestConfig& cfg) {
  const auto& c = cfg.supercap;
  if (!(c.capacitance_f > 0.0)) throw ValidationError("supercap capacitance_f must be > 0");
  if (!(c.v_cutoff_v >= 0.0)) throw ValidationError("supercap v_cutoff_v must be >= 0");
  if (!(c.v_cutoff_v < c.v_init_v)) throw ValidationError("supercap requires v_cutoff_v < v_init_v");
  if (!(c.v_init_v <= c.v_max_v)) throw ValidationError("supercap requires v_init_v <= v_max_v");
  const double vr = c.restart_voltage();
  if (!(vr > c.v_cutoff_v && vr <= c.v_max_v))
    throw ValidationError("supercap v_restart_v must lie in (v_cutoff_v, v_max_v]");
  if (!(cfg.step_s > 0.0)) throw ValidationError("harvest step_s must be > 0");
  if (!(cfg.load_voltage_v > 0.0)) throw ValidationError("harvest load_voltage_v must be > 0");
  if (!(cfg.record_interval_s >= 0.0)) throw ValidationError("harvest record_interval_s must be >= 0");
  if (cfg.halted_power_mw && !(*cfg.halted_power_mw >= 0.0))
    throw ValidationError("harvest halted_power_mw must be >= 0");
  for (std::size_t i = 0; i < cfg.input_power_mw.size(); ++i) {
    const auto& p = cfg.input_power_mw[i];
    if (!(p.power_mw >= 0.0) || !std::isfinite(p.power_mw))
      throw ValidationError("harvest input power must be finite and >= 0");
    if (i > 0 && p.t_s < cfg.input_power_mw[i - 1].t_s)
      throw ValidationError("harvest profile times must be nondecreasing");
  }
}

double harvest_power_at(const std::vector<HarvestPoint>& profile, double t_s) {
  double p = 0.0;
  for (const auto& pt : profile) {
    if (pt.t_s > t_s + kEps) break;
    p = pt.power_mw;
  }
  return p;
}

HarvestResult simulate_harvest(const Timeline& t, const HarvestConfig& cfg) {
  validate(cfg);
  const auto& cap = cfg.supercap;
  const double halted_mw =
      cfg.halted_power_mw ? *cfg.halted_power_mw
                          : calibration::shipped_calibration().power_mw(node::NodeState::kDeepSleep);
  const double v_restart = cap.restart_voltage();

  HarvestResult r;
  double v = cap.v_init_v;
  bool halted = false;
  double next_record = 0.0;
  auto record = [&](double now, bool force) {
    if (force || cfg.record_interval_s == 0.0 || now + kEps >= next_record) {
      if (r.voltage.empty() || r.voltage.back().t_s != now) r.voltage.push_back({now, v});
      while (cfg.record_interval_s > 0.0 && next_record <= now + kEps) next_record += cfg.record_interval_s;
    }
  };
  record(0.0, true);

  // Profile breakpoints, so each substep sees a constant harvest power.
  std::vector<double> breaks;
  for (const auto& p : cfg.input_power_mw) breaks.push_back(p.t_s);

  for (const auto& e : t.entries) {
    const double load_mw = e.unit == Unit::kPowerMw ? e.value : e.value * cfg.load_voltage_v;
    const double end = e.t_start_s + e.duration_s;
    double now = e.t_start_s;
    while (now < end - kEps) {
      double step_end = std::min(end, now + cfg.step_s);
      auto it = std::upper_bound(breaks.begin(), breaks.end(), now + kEps);
      if (it != breaks.end() && *it < step_end) step_end = *it;
      const double dt = step_end - now;
      const double ph = harvest_power_at(cfg.input_power_mw, now);
      const double pl = halted ? halted_mw : load_mw;
      double dv = (ph - pl) * 1e-3 / (cap.capacitance_f * v) * dt;
      double v_new = v + dv;

      if (v_new <= kVoltageFloor && cap.v_cutoff_v <= kVoltageFloor)
        throw DomainError("supercap voltage collapsed to 0 V at t = " + std::to_string(now) +
                          " s (v_cutoff_v = 0 gives no halt floor)");

      double harvested = ph * 1e-3 * dt;
      if (v_new > cap.v_max_v) {
        // Excess beyond full charge is discarded.
        const double stored = 0.5 * cap.capacitance_f * (cap.v_max_v * cap.v_max_v - v * v);
        const double excess = std::max(0.0, (ph - pl) * 1e-3 * dt - stored);
        r.clipped_j += excess;
        harvested -= excess;
        v_new = cap.v_max_v;
      }
      r.harvested_j += harvested;
      r.consumed_j += pl * 1e-3 * dt;
      if (halted) r.halted_s += dt;

      now = step_end;
      if (!halted && v_new < cap.v_cutoff_v) {
        v = cap.v_cutoff_v;
        halted = true;
        r.events.push_back({now, HarvestEventKind::kDepleted});
        record(now, true);
      } else if (halted && v_new >= v_restart) {
        v = v_new;
        halted = false;
        r.events.push_back({now, HarvestEventKind::kRestored});
        record(now, true);
      } else {
        v = halted ? std::max(v_new, cap.v_cutoff_v) : v_new;
        record(now, false);
      }
    }
  }
  record(t.total_duration_s, true);
  r.v_end = v;
  return r;
}

}  // namespace riot::scenario
