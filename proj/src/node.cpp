#include "riot/node.hpp"

#include <sstream>

#include "riot/error.hpp"

namespace riot::node {

std::string_view to_string(NodeState s) {
  switch (s) {
    case NodeState::kStartup: return "Startup";
    case NodeState::kBleAdvertisingFast: return "BleAdvertisingFast";
    case NodeState::kBleConnectedIdle: return "BleConnectedIdle";
    case NodeState::kBleConnectedIdleVlcListening: return "BleConnectedIdleVlcListening";
    case NodeState::kBmeInit: return "BmeInit";
    case NodeState::kSensing: return "Sensing";
    case NodeState::kEinkUpdate: return "EinkUpdate";
    case NodeState::kVlcTxFrame: return "VlcTxFrame";
    case NodeState::kBleTx: return "BleTx";
    case NodeState::kBleRx: return "BleRx";
    case NodeState::kIdle: return "Idle";
    case NodeState::kIdleVlcListening: return "IdleVlcListening";
    case NodeState::kDeepSleep: return "DeepSleep";
    case NodeState::kDeepSleepVlcArmed: return "DeepSleepVlcArmed";
    case NodeState::kWakeUp: return "WakeUp";
  }
  return "?";
}

std::optional<NodeState> parse_node_state(std::string_view name) {
  for (NodeState s : kAllNodeStates) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

void NodePowerCalibration::set(NodeState s, double power_mw, std::string provenance) {
  entries_[s] = CalibrationEntry{power_mw, std::move(provenance)};
}

const CalibrationEntry* NodePowerCalibration::find(NodeState s) const {
  auto it = entries_.find(s);
  return it == entries_.end() ? nullptr : &it->second;
}

double NodePowerCalibration::power_mw(NodeState s) const {
  const CalibrationEntry* e = find(s);
  if (e == nullptr) {
    throw CalibrationError("calibration incomplete: no power for state " + std::string(to_string(s)));
  }
  return e->power_mw;
}

void NodePowerCalibration::check_invariants() const {
  for (const auto& [s, e] : entries_) {
    if (!(e.power_mw >= 0.0)) {
      throw CalibrationError("negative or non-finite power for state " + std::string(to_string(s)));
    }
  }
  const auto* sleep = find(NodeState::kDeepSleep);
  const auto* idle = find(NodeState::kIdle);
  const auto* listen = find(NodeState::kIdleVlcListening);
  if (sleep && idle && listen &&
      !(sleep->power_mw < idle->power_mw && idle->power_mw < listen->power_mw)) {
    throw CalibrationError("calibration violates DeepSleep < Idle < IdleVlcListening");
  }
}

KeyValueFile NodePowerCalibration::to_key_values() const {
  KeyValueFile kv;
  kv.add_comment("node state average power: <state> = <power_mW> <provenance>");
  for (const auto& [s, e] : entries_) kv.set(std::string(to_string(s)), format_double(e.power_mw), {e.provenance});
  return kv;
}

NodePowerCalibration NodePowerCalibration::from_key_values(const KeyValueFile& kv) {
  NodePowerCalibration c;
  for (const auto& e : kv.entries()) {
    auto s = parse_node_state(e.key);
    if (!s) throw ValidationError("unknown node state in calibration: " + e.key);
    if (e.tags.size() != 1) throw ValidationError("calibration entry " + e.key + " needs exactly one provenance tag");
    c.set(*s, *kv.get_double(e.key), e.tags.front());
  }
  c.check_invariants();
  return c;
}

NodePowerCalibration NodePowerCalibration::load(const std::filesystem::path& path) {
  return from_key_values(KeyValueFile::load(path));
}

void NodePowerCalibration::save(const std::filesystem::path& path) const { to_key_values().save(path); }

bool operator==(const NodePowerCalibration& a, const NodePowerCalibration& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (const auto& [s, e] : a.entries_) {
    const auto* o = b.find(s);
    if (o == nullptr || o->power_mw != e.power_mw || o->provenance != e.provenance) return false;
  }
  return true;
}

double node_state_power(NodeState state, const NodePowerCalibration& calib) { return calib.power_mw(state); }

}  // namespace riot::node
