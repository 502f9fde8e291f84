#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "riot/gateway.hpp"
#include "riot/node.hpp"

namespace riot::scenario {

using SegmentState = std::variant<node::NodeState, gateway::ApOperatingPoint>;

struct StateSegment {
  SegmentState state;
  double duration_s = 0.0;
};

struct Once {};

/// How `value_s` relates to the cycle: either the distance between two cycle
/// starts, or the filler gap appended after each active cycle.
enum class PeriodBasis { kStartToStart, kGapAfterActive };

struct Periodic {
  double value_s = 60.0;
  PeriodBasis basis = PeriodBasis::kGapAfterActive;
};

struct RandomPoisson {
  double mean_rate_per_s = 0.0;
  std::uint64_t seed = 0;
};

using Repetition = std::variant<Once, Periodic, RandomPoisson>;

struct Scenario {
  std::string name;
  std::vector<StateSegment> preamble;
  std::vector<StateSegment> cycle;
  std::optional<SegmentState> filler;  // fills gaps between cycles
  Repetition repetition = Once{};
  double horizon_s = 86400.0;
};

double active_duration(const std::vector<StateSegment>& segments);

/// Validates the scenario's invariants; throws ValidationError.
void validate(const Scenario& s);

/// Absolute-time schedule of states, before any power/current is attached.
struct ScheduledSegment {
  double t_start_s;
  double duration_s;
  SegmentState state;
};
using Schedule = std::vector<ScheduledSegment>;

Schedule expand_schedule(const Scenario& s);
std::size_t count_cycle_starts(const Scenario& s);

enum class Unit { kPowerMw, kCurrentMa };

struct TimelineEntry {
  double t_start_s;
  double duration_s;
  double value;  // mW or mA depending on unit
  Unit unit;
  std::string label;
};

struct Timeline {
  std::vector<TimelineEntry> entries;
  double total_duration_s = 0.0;

  /// Value at time t (holding the segment containing t), nullopt past the end.
  const TimelineEntry* at(double t_s) const;
};

/// Resolves segment states to power/current.
struct StateEvaluator {
  const node::NodePowerCalibration* calibration = nullptr;  // null: shipped calibration
  const gateway::GatewayConstants* constants = nullptr;     // null: compiled-in defaults
};

Timeline evaluate(const Schedule& schedule, const StateEvaluator& eval = {});
Timeline expand_scenario(const Scenario& s, const StateEvaluator& eval = {});

/// T2 shifted to start where T1 ends.
Timeline concat(const Timeline& a, const Timeline& b);
Timeline scale_durations(const Timeline& t, double k);

struct EnergyTotals {
  double duration_s = 0.0;
  double energy_j = 0.0;
  double avg_power_mw = 0.0;
  std::optional<double> charge_c;
  std::optional<double> avg_current_ma;
};

/// Exact piecewise-constant integration. `supply_voltage_v` converts current
/// segments to power (required when any are present) and power segments to
/// current (optional; without it charge is only reported for all-current timelines).
EnergyTotals integrate(const Timeline& t, std::optional<double> supply_voltage_v = std::nullopt);

// Built-in node duty-cycle scenarios: ids "1m","1h",...,"5m","5h" (scenario
// number, then 1-minute or 1-hour period), each over a 24 h horizon.
std::vector<Scenario> builtin_scenarios();
std::vector<std::string> builtin_scenario_ids();
Scenario builtin_scenario(const std::string& id);
Scenario builtin_scenario(int number, double period_s);

/// Access-point profile spanning boot, idle, VLC/BLE activity and Ethernet TX.
Scenario ap_validation_profile();

}  // namespace riot::scenario
