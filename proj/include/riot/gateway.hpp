#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "riot/kvconfig.hpp"

// Average-current models of the BBB access point and the mini-lamp gateway as
// a function of VLC PWM duty cycle and BLE configuration. All currents in mA.
namespace riot::gateway {

struct BleOff {};
struct BleScanning {
  double scan_window_ms = 50.0;
  double scan_interval_ms = 100.0;
  double duty() const { return scan_window_ms / scan_interval_ms; }
};
enum class BlePhase { kIdle, kTxCommand, kRxData };
struct BleConnected {
  double conn_interval_ms = 45.0;
  BlePhase phase = BlePhase::kIdle;
};
using BleMode = std::variant<BleOff, BleScanning, BleConnected>;

struct VlcOff {};
struct VlcIdle {
  double pwm_duty_pct = 0.0;
};
struct VlcTx {
  double pwm_duty_pct = 0.0;
  int n_chunks = 6;
};
struct VlcRx {
  double pwm_duty_pct = 0.0;
};
using VlcMode = std::variant<VlcOff, VlcIdle, VlcTx, VlcRx>;

inline constexpr double kVlcChunkDurationS = 0.068;
inline constexpr double kMaxPwmDutyPct = 98.0;
inline constexpr double kMinConnIntervalMs = 11.25;
inline constexpr double kMaxConnIntervalMs = 1000.0;

struct ApOperatingPoint {
  VlcMode vlc = VlcOff{};
  BleMode ble = BleOff{};
  bool usb_connected = true;
  bool eth_connected = true;
  bool eth_tx_active = false;
  bool booting = false;
};

struct ApBaseConstants {
  double boot_current_ma = 405.0;
  double boot_duration_s = 72.0;
  double idle_usb_eth_ma = 255.0;
  double idle_bare_ma = 170.0;
  double idle_eth_only_ma = 241.0;
  double eth_tx_increment_ma = 133.0;
  double supply_voltage_v = 5.0;
  double usb_increment_ma = 14.0;
  double eth_link_increment_ma = 71.0;
};

struct MiniLampConstants {
  double scan_slope_ma_per_unit_duty = 9.3;
  double scan_intercept_ma = 11.8;
  double conn_current_ma = 12.1;
  double bbb_excess_ma = 242.5;
  double supply_voltage_v = 5.0;  // not stated for the mini-lamp; assumed USB-class supply
};

/// Cubic fit of AP idle current against PWM duty (BLE off), plus the affine
/// transfer relations from idle current to TX and BLE-peak currents.
struct ApFitCoefficients {
  double c3 = 3e-5;
  double c2 = -5.582e-3;
  double c1 = 2.319;
  double c0 = 255.654;
  double scan_intercept_ma = 254.3;
  double scan_slope_ma = 9.3;
  double tx_gain = 1.003;
  double tx_offset_ma = 0.4656;
  double tx_scan_gain = 0.9995;
  double tx_scan_offset_ma = 3.113;
  double ble_rx_gain = 0.9915;
  double ble_rx_offset_ma = 106.1;
  double ble_tx_gain = 1.015;
  double ble_tx_offset_ma = 74.25;
  double ble_tx_peak_ms = 4.5;
  double ble_rx_peak_ms = 2.5;
};

struct GatewayConstants {
  ApBaseConstants ap;
  MiniLampConstants minilamp;
  ApFitCoefficients fit;
};

const GatewayConstants& default_constants();

/// Reads `key = value` overrides on top of the compiled-in defaults. Unknown
/// keys are rejected.
GatewayConstants load_constants(const std::filesystem::path& path);
GatewayConstants constants_from(const KeyValueFile& kv);
KeyValueFile to_key_values(const GatewayConstants& k);

double ap_vlc_idle_current(double pwm_duty_pct, const GatewayConstants& k = default_constants());
double ap_ble_scan_only_current(double duty, const GatewayConstants& k = default_constants());
double ap_vlc_idle_ble_scan_current(double pwm_duty_pct, double ble_duty,
                                    const GatewayConstants& k = default_constants());
double ap_vlc_tx_current(double pwm_duty_pct, bool ble_scanning, double ble_duty = 0.0,
                         const GatewayConstants& k = default_constants());
double ap_vlc_rx_current(double pwm_duty_pct, bool ble_scanning, double ble_duty = 0.0,
                         const GatewayConstants& k = default_constants());

enum class BleDirection { kTxCommand, kRxData };
struct BlePeak {
  double current_ma;
  double duration_ms;
};
BlePeak ap_ble_peak_current(double pwm_duty_pct, BleDirection direction,
                            const GatewayConstants& k = default_constants());

double minilamp_current(double pwm_duty_pct, const BleMode& ble,
                        const GatewayConstants& k = default_constants());

/// Checks the operating point's invariants. Throws on hard violations and
/// returns soft warnings (connection interval outside the measured range).
std::vector<std::string> validate(const ApOperatingPoint& p);

double ap_operating_current(const ApOperatingPoint& p, const GatewayConstants& k = default_constants());

std::string describe(const ApOperatingPoint& p);

}  // namespace riot::gateway
