#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riot/scenario.hpp"

namespace riot::scenario {

enum class HarvestSource { kRf, kLight };

std::string to_string(HarvestSource s);
HarvestSource parse_harvest_source(const std::string& s);

/// Step profile: power holds from `t_s` until the next point.
struct HarvestPoint {
  double t_s = 0.0;
  double power_mw = 0.0;
};

struct Supercap {
  double capacitance_f = 1.0;
  double v_init_v = 2.5;
  double v_max_v = 2.7;
  double v_cutoff_v = 1.8;
  std::optional<double> v_restart_v;  // default: cutoff + 10% of (max - cutoff)

  double restart_voltage() const;
};

struct HarvestConfig {
  HarvestSource source = HarvestSource::kLight;
  std::vector<HarvestPoint> input_power_mw;
  Supercap supercap;
  double step_s = 0.01;
  double load_voltage_v = 3.0;             // converts current-unit segments to power
  std::optional<double> halted_power_mw;   // default: calibrated DeepSleep power
  double record_interval_s = 1.0;          // voltage trace decimation; 0 records every step
};

void validate(const HarvestConfig& cfg);

struct VoltageSample {
  double t_s;
  double v;
};

enum class HarvestEventKind { kDepleted, kRestored };

struct HarvestEvent {
  double t_s;
  HarvestEventKind kind;
};

struct HarvestResult {
  std::vector<VoltageSample> voltage;
  std::vector<HarvestEvent> events;
  double v_end = 0.0;
  double harvested_j = 0.0;  // energy actually drawn from the source
  double consumed_j = 0.0;   // load energy including halted draw
  double clipped_j = 0.0;    // harvest discarded at v_max
  double halted_s = 0.0;
  std::size_t depletion_count() const;
};

double harvest_power_at(const std::vector<HarvestPoint>& profile, double t_s);

/// Forward Euler on dV/dt = (P_harvest - P_load) / (C V) with a fixed substep,
/// split additionally at timeline boundaries and profile breakpoints.
HarvestResult simulate_harvest(const Timeline& t, const HarvestConfig& cfg);

}  // namespace riot::scenario
