#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "riot/kvconfig.hpp"

namespace riot::node {

enum class NodeState {
  kStartup,
  kBleAdvertisingFast,
  kBleConnectedIdle,
  kBleConnectedIdleVlcListening,
  kBmeInit,
  kSensing,
  kEinkUpdate,
  kVlcTxFrame,
  kBleTx,
  kBleRx,
  kIdle,
  kIdleVlcListening,
  kDeepSleep,
  kDeepSleepVlcArmed,  // sleep with the VLC front-end left powered
  kWakeUp,
};

inline constexpr std::array kAllNodeStates = {
    NodeState::kStartup,      NodeState::kBleAdvertisingFast, NodeState::kBleConnectedIdle,
    NodeState::kBleConnectedIdleVlcListening, NodeState::kBmeInit, NodeState::kSensing,
    NodeState::kEinkUpdate,   NodeState::kVlcTxFrame,         NodeState::kBleTx,
    NodeState::kBleRx,        NodeState::kIdle,               NodeState::kIdleVlcListening,
    NodeState::kDeepSleep,    NodeState::kDeepSleepVlcArmed,  NodeState::kWakeUp,
};

std::string_view to_string(NodeState s);
std::optional<NodeState> parse_node_state(std::string_view name);

inline constexpr std::string_view kProvenanceFitted = "fitted";
inline constexpr std::string_view kProvenancePrior = "prior";

struct CalibrationEntry {
  double power_mw = 0.0;
  std::string provenance;
};

/// Average power per node state, in mW, each tagged with where it came from.
class NodePowerCalibration {
 public:
  void set(NodeState s, double power_mw, std::string provenance);
  bool contains(NodeState s) const { return entries_.contains(s); }
  /// Throws CalibrationError naming the state when it has no entry.
  double power_mw(NodeState s) const;
  const CalibrationEntry* find(NodeState s) const;
  const std::map<NodeState, CalibrationEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  /// Nonnegative powers, and DeepSleep < Idle < IdleVlcListening when all three are present.
  void check_invariants() const;

  KeyValueFile to_key_values() const;
  static NodePowerCalibration from_key_values(const KeyValueFile& kv);
  static NodePowerCalibration load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const NodePowerCalibration& a, const NodePowerCalibration& b);

 private:
  std::map<NodeState, CalibrationEntry> entries_;
};

double node_state_power(NodeState state, const NodePowerCalibration& calib);

}  // namespace riot::node
