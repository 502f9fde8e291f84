#include "riot/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "riot/calibration.hpp"
#include "riot/error.hpp"

namespace riot::scenario {
namespace {

using node::NodeState;

// Relative slack when comparing accumulated times against the horizon.
constexpr double kTimeEps = 1e-9;

void check_segments(const std::vector<StateSegment>& segs, const char* what) {
  for (const auto& seg : segs) {
    if (!(seg.duration_s > 0.0) || !std::isfinite(seg.duration_s)) {
      throw ValidationError(std::string(what) + " segment durations must be positive");
    }
    if (const auto* ap = std::get_if<gateway::ApOperatingPoint>(&seg.state)) gateway::validate(*ap);
  }
}

class ScheduleBuilder {
 public:
  ScheduleBuilder(double horizon_s, const std::optional<SegmentState>& filler)
      : horizon_(horizon_s), filler_(filler) {}

  double now() const { return t_; }
  bool done() const { return t_ >= horizon_ * (1.0 - kTimeEps); }

  void push(const SegmentState& state, double duration_s) {
    if (done() || duration_s <= 0.0) return;
    const double d = std::min(duration_s, horizon_ - t_);
    if (d <= horizon_ * kTimeEps) {
      t_ = horizon_;
      return;
    }
    out_.push_back({t_, d, state});
    t_ += d;
  }

  void push_all(const std::vector<StateSegment>& segs) {
    for (const auto& s : segs) push(s.state, s.duration_s);
  }

  /// Advance to absolute time `until` with the filler state.
  void fill_to(double until) {
    const double gap = std::min(until, horizon_) - t_;
    if (gap <= horizon_ * kTimeEps) return;
    if (!filler_) throw ValidationError("scenario leaves a gap but defines no filler state");
    push(*filler_, gap);
  }

  Schedule take() { return std::move(out_); }

 private:
  double horizon_;
  const std::optional<SegmentState>& filler_;
  double t_ = 0.0;
  Schedule out_;
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct ExpandResult {
  Schedule schedule;
  std::size_t cycle_starts = 0;
};

ExpandResult expand_impl(const Scenario& s) {
  validate(s);
  ScheduleBuilder b(s.horizon_s, s.filler);
  b.push_all(s.preamble);
  const double origin = b.now();
  const double active = active_duration(s.cycle);
  std::size_t starts = 0;

  std::visit(
      Overloaded{
          [&](const Once&) {
            if (!s.cycle.empty() && !b.done()) {
              ++starts;
              b.push_all(s.cycle);
            }
            if (s.filler) b.fill_to(s.horizon_s);
          },
          [&](const Periodic& p) {
            const double period = p.basis == PeriodBasis::kStartToStart ? p.value_s : active + p.value_s;
            for (std::size_t k = 0;; ++k) {
              const double start = origin + static_cast<double>(k) * period;
              if (start >= s.horizon_s * (1.0 - kTimeEps)) break;
              b.fill_to(start);
              ++starts;
              b.push_all(s.cycle);
              b.fill_to(start + period);
              if (b.done()) break;
            }
          },
          [&](const RandomPoisson& p) {
            if (p.mean_rate_per_s > 0.0 && !s.cycle.empty()) {
              std::mt19937_64 rng(p.seed);
              std::exponential_distribution<double> gap(p.mean_rate_per_s);
              double arrival = origin;
              while (true) {
                arrival += gap(rng);
                const double start = std::max(arrival, b.now());
                if (start >= s.horizon_s * (1.0 - kTimeEps)) break;
                b.fill_to(start);
                ++starts;
                b.push_all(s.cycle);
                if (b.done()) break;
              }
            }
            if (s.filler) b.fill_to(s.horizon_s);
          },
      },
      s.repetition);
  return {b.take(), starts};
}

std::string label_of(const SegmentState& st) {
  return std::visit(Overloaded{[](NodeState n) { return std::string(node::to_string(n)); },
                               [](const gateway::ApOperatingPoint& p) { return gateway::describe(p); }},
                    st);
}

}  // namespace

double active_duration(const std::vector<StateSegment>& segments) {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration_s;
  return total;
}

void validate(const Scenario& s) {
  if (!(s.horizon_s > 0.0) || !std::isfinite(s.horizon_s)) throw ValidationError("horizon_s must be positive");
  check_segments(s.preamble, "preamble");
  check_segments(s.cycle, "cycle");
  if (s.filler) {
    if (const auto* ap = std::get_if<gateway::ApOperatingPoint>(&*s.filler)) gateway::validate(*ap);
  }
  if (const auto* p = std::get_if<Periodic>(&s.repetition)) {
    if (s.cycle.empty()) throw ValidationError("periodic scenario needs a non-empty cycle");
    if (p->basis == PeriodBasis::kStartToStart) {
      if (!(p->value_s > 0.0)) throw ValidationError("period_s must be positive");
      if (active_duration(s.cycle) > p->value_s * (1.0 + kTimeEps)) {
        std::ostringstream os;
        os << "cycle active time " << active_duration(s.cycle) << " s exceeds period " << p->value_s << " s";
        throw ValidationError(os.str());
      }
    } else if (!(p->value_s >= 0.0)) {
      throw ValidationError("gap_s must be nonnegative");
    }
  }
  if (const auto* p = std::get_if<RandomPoisson>(&s.repetition)) {
    if (!(p->mean_rate_per_s >= 0.0)) throw ValidationError("mean_rate_per_s must be nonnegative");
  }
}

Schedule expand_schedule(const Scenario& s) { return expand_impl(s).schedule; }
std::size_t count_cycle_starts(const Scenario& s) { return expand_impl(s).cycle_starts; }

const TimelineEntry* Timeline::at(double t_s) const {
  if (entries.empty() || t_s < entries.front().t_start_s || t_s >= total_duration_s) return nullptr;
  auto it = std::upper_bound(entries.begin(), entries.end(), t_s,
                             [](double t, const TimelineEntry& e) { return t < e.t_start_s; });
  return &*std::prev(it);
}

Timeline evaluate(const Schedule& schedule, const StateEvaluator& eval) {
  const node::NodePowerCalibration& calib =
      eval.calibration != nullptr ? *eval.calibration : calibration::shipped_calibration();
  const gateway::GatewayConstants& k = eval.constants != nullptr ? *eval.constants : gateway::default_constants();
  Timeline t;
  t.entries.reserve(schedule.size());
  for (const auto& seg : schedule) {
    TimelineEntry e{seg.t_start_s, seg.duration_s, 0.0, Unit::kPowerMw, label_of(seg.state)};
    std::visit(Overloaded{[&](NodeState n) {
                            e.value = calib.power_mw(n);
                            e.unit = Unit::kPowerMw;
                          },
                          [&](const gateway::ApOperatingPoint& p) {
                            e.value = gateway::ap_operating_current(p, k);
                            e.unit = Unit::kCurrentMa;
                          }},
               seg.state);
    t.entries.push_back(std::move(e));
  }
  if (!schedule.empty()) t.total_duration_s = schedule.back().t_start_s + schedule.back().duration_s;
  return t;
}

Timeline expand_scenario(const Scenario& s, const StateEvaluator& eval) { return evaluate(expand_schedule(s), eval); }

Timeline concat(const Timeline& a, const Timeline& b) {
  Timeline out = a;
  for (auto e : b.entries) {
    e.t_start_s += a.total_duration_s;
    out.entries.push_back(std::move(e));
  }
  out.total_duration_s = a.total_duration_s + b.total_duration_s;
  return out;
}

Timeline scale_durations(const Timeline& t, double k) {
  Timeline out = t;
  for (auto& e : out.entries) {
    e.t_start_s *= k;
    e.duration_s *= k;
  }
  out.total_duration_s *= k;
  return out;
}

EnergyTotals integrate(const Timeline& t, std::optional<double> supply_voltage_v) {
  if (t.entries.empty()) throw ValidationError("cannot integrate an empty timeline");
  if (supply_voltage_v && !(*supply_voltage_v > 0.0)) throw ValidationError("supply voltage must be positive");
  double energy_mj = 0.0;  // mW·s
  double charge_mc = 0.0;  // mA·s
  double duration = 0.0;
  bool charge_known = true;
  for (const auto& e : t.entries) {
    duration += e.duration_s;
    if (e.unit == Unit::kCurrentMa) {
      if (!supply_voltage_v) throw ValidationError("timeline has current segments; a supply voltage is required");
      energy_mj += e.value * e.duration_s * *supply_voltage_v;
      charge_mc += e.value * e.duration_s;
    } else {
      energy_mj += e.value * e.duration_s;
      if (supply_voltage_v) {
        charge_mc += e.value / *supply_voltage_v * e.duration_s;
      } else {
        charge_known = false;
      }
    }
  }
  EnergyTotals r;
  r.duration_s = duration;
  r.energy_j = energy_mj / 1000.0;
  r.avg_power_mw = energy_mj / duration;
  if (charge_known) {
    r.charge_c = charge_mc / 1000.0;
    r.avg_current_ma = charge_mc / duration;
  }
  return r;
}

namespace {

constexpr double kDay = 86400.0;

StateSegment seg(NodeState s, double d) { return {s, d}; }

std::vector<StateSegment> ble_preamble(NodeState connected_idle) {
  return {seg(NodeState::kBleAdvertisingFast, 10.0), seg(connected_idle, 5.0), seg(NodeState::kBmeInit, 0.916),
          seg(connected_idle, 10.0)};
}

// Scenario 3 BLE uplink: two 45 ms connection events.
constexpr double kScenario3BleTxS = 0.090;

}  // namespace

Scenario builtin_scenario(int number, double period_s) {
  Scenario s;
  s.horizon_s = kDay;
  std::ostringstream name;
  name << "scenario" << number << "-" << (period_s >= 3600.0 ? "1h" : "1m");
  s.name = name.str();
  switch (number) {
    case 1: {
      const auto listen = NodeState::kBleConnectedIdleVlcListening;
      s.preamble = ble_preamble(listen);
      s.cycle = {seg(NodeState::kSensing, 0.516), seg(listen, 1.0), seg(NodeState::kEinkUpdate, 0.435),
                 seg(listen, 1.0), seg(NodeState::kVlcTxFrame, 0.908)};
      s.filler = listen;
      s.repetition = Periodic{period_s, PeriodBasis::kStartToStart};
      break;
    }
    case 2:
    case 3: {
      const auto idle = NodeState::kBleConnectedIdle;
      s.preamble = ble_preamble(idle);
      s.cycle = {seg(NodeState::kSensing, 0.516), seg(idle, 1.0), seg(NodeState::kEinkUpdate, 0.435), seg(idle, 1.0),
                 number == 2 ? seg(NodeState::kVlcTxFrame, 0.908) : seg(NodeState::kBleTx, kScenario3BleTxS)};
      s.filler = idle;
      s.repetition = Periodic{period_s, PeriodBasis::kGapAfterActive};
      break;
    }
    case 4: {
      const auto idle = NodeState::kIdleVlcListening;
      s.cycle = {seg(NodeState::kStartup, 0.911), seg(idle, 0.030),     seg(NodeState::kSensing, 0.149),
                 seg(idle, 0.250),                seg(NodeState::kEinkUpdate, 0.450), seg(idle, 0.250),
                 seg(NodeState::kVlcTxFrame, 0.908)};
      s.filler = NodeState::kDeepSleepVlcArmed;
      s.repetition = Periodic{period_s, PeriodBasis::kGapAfterActive};
      break;
    }
    case 5: {
      s.cycle = {seg(NodeState::kStartup, 0.909), seg(NodeState::kIdle, 0.030), seg(NodeState::kSensing, 0.149),
                 seg(NodeState::kIdle, 0.250), seg(NodeState::kEinkUpdate, 0.544)};
      s.filler = NodeState::kDeepSleep;
      s.repetition = Periodic{period_s, PeriodBasis::kGapAfterActive};
      break;
    }
    default:
      throw NotFoundError("no built-in scenario " + std::to_string(number) + " (1-5)");
  }
  return s;
}

std::vector<std::string> builtin_scenario_ids() {
  return {"1m", "1h", "2m", "2h", "3m", "3h", "4m", "4h", "5m", "5h"};
}

Scenario builtin_scenario(const std::string& id) {
  if (id.size() == 2 && id[0] >= '1' && id[0] <= '5' && (id[1] == 'm' || id[1] == 'h')) {
    return builtin_scenario(id[0] - '0', id[1] == 'm' ? 60.0 : 3600.0);
  }
  if (id == "ap-validation") return ap_validation_profile();
  throw NotFoundError("unknown built-in scenario: " + id);
}

std::vector<Scenario> builtin_scenarios() {
  std::vector<Scenario> out;
  for (const auto& id : builtin_scenario_ids()) out.push_back(builtin_scenario(id));
  return out;
}

Scenario ap_validation_profile() {
  using namespace gateway;
  auto ap = [](VlcMode vlc, BleMode ble = BleOff{}, bool eth_tx = false) {
    ApOperatingPoint p;
    p.vlc = vlc;
    p.ble = ble;
    p.eth_tx_active = eth_tx;
    return p;
  };
  ApOperatingPoint boot;
  boot.booting = true;
  const BleScanning scan{50.0, 100.0};
  const double frame_s = 6 * kVlcChunkDurationS;

  Scenario s;
  s.name = "ap-validation";
  s.repetition = Once{};
  auto& c = s.cycle;
  c.push_back({boot, default_constants().ap.boot_duration_s});
  c.push_back({ap(VlcOff{}), 30.0});
  c.push_back({ap(VlcIdle{20.0}), 30.0});
  c.push_back({ap(VlcIdle{50.0}), 30.0});
  for (int i = 0; i < 5; ++i) {
    c.push_back({ap(VlcTx{50.0, 6}), frame_s});
    c.push_back({ap(VlcIdle{50.0}), 2.0 - frame_s});
  }
  c.push_back({ap(VlcRx{50.0}), 10.0});
  c.push_back({ap(VlcIdle{50.0}, scan), 30.0});
  for (int i = 0; i < 5; ++i) {
    c.push_back({ap(VlcTx{50.0, 6}, scan), frame_s});
    c.push_back({ap(VlcIdle{50.0}, scan), 2.0 - frame_s});
  }
  c.push_back({ap(VlcIdle{20.0}, BleConnected{45.0, BlePhase::kIdle}), 20.0});
  for (int i = 0; i < 5; ++i) {
    c.push_back({ap(VlcIdle{20.0}, BleConnected{45.0, BlePhase::kTxCommand}), 0.0045});
    c.push_back({ap(VlcIdle{20.0}, BleConnected{45.0, BlePhase::kIdle}), 0.5});
    c.push_back({ap(VlcIdle{20.0}, BleConnected{45.0, BlePhase::kRxData}), 0.0025});
    c.push_back({ap(VlcIdle{20.0}, BleConnected{45.0, BlePhase::kIdle}), 2.0 - 0.5 - 0.0045 - 0.0025});
  }
  c.push_back({ap(VlcOff{}, BleOff{}, true), 20.0});
  c.push_back({ap(VlcOff{}), 20.0});
  s.horizon_s = active_duration(c);
  return s;
}

}  // namespace riot::scenario
