#include "riot/gateway.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "riot/error.hpp"

namespace riot::gateway {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Every tunable constant, addressed by its file key.
struct KeyTable {
  std::vector<std::pair<std::string, double*>> bind(GatewayConstants& k) const {
    return {
        {"ap.boot_current_ma", &k.ap.boot_current_ma},
        {"ap.boot_duration_s", &k.ap.boot_duration_s},
        {"ap.idle_usb_eth_ma", &k.ap.idle_usb_eth_ma},
        {"ap.idle_bare_ma", &k.ap.idle_bare_ma},
        {"ap.idle_eth_only_ma", &k.ap.idle_eth_only_ma},
        {"ap.eth_tx_increment_ma", &k.ap.eth_tx_increment_ma},
        {"ap.supply_voltage_v", &k.ap.supply_voltage_v},
        {"ap.usb_increment_ma", &k.ap.usb_increment_ma},
        {"ap.eth_link_increment_ma", &k.ap.eth_link_increment_ma},
        {"minilamp.scan_slope_ma_per_unit_duty", &k.minilamp.scan_slope_ma_per_unit_duty},
        {"minilamp.scan_intercept_ma", &k.minilamp.scan_intercept_ma},
        {"minilamp.conn_current_ma", &k.minilamp.conn_current_ma},
        {"minilamp.bbb_excess_ma", &k.minilamp.bbb_excess_ma},
        {"minilamp.supply_voltage_v", &k.minilamp.supply_voltage_v},
        {"fit.c3", &k.fit.c3},
        {"fit.c2", &k.fit.c2},
        {"fit.c1", &k.fit.c1},
        {"fit.c0", &k.fit.c0},
        {"fit.scan_intercept_ma", &k.fit.scan_intercept_ma},
        {"fit.scan_slope_ma", &k.fit.scan_slope_ma},
        {"fit.tx_gain", &k.fit.tx_gain},
        {"fit.tx_offset_ma", &k.fit.tx_offset_ma},
        {"fit.tx_scan_gain", &k.fit.tx_scan_gain},
        {"fit.tx_scan_offset_ma", &k.fit.tx_scan_offset_ma},
        {"fit.ble_rx_gain", &k.fit.ble_rx_gain},
        {"fit.ble_rx_offset_ma", &k.fit.ble_rx_offset_ma},
        {"fit.ble_tx_gain", &k.fit.ble_tx_gain},
        {"fit.ble_tx_offset_ma", &k.fit.ble_tx_offset_ma},
        {"fit.ble_tx_peak_ms", &k.fit.ble_tx_peak_ms},
        {"fit.ble_rx_peak_ms", &k.fit.ble_rx_peak_ms},
    };
  }
};

void check_pwm(double x) {
  if (!(x >= 0.0 && x <= kMaxPwmDutyPct)) {
    std::ostringstream os;
    os << "VLC PWM duty " << x << "% outside the modelled range [0, 98]%";
    throw DomainError(os.str());
  }
}

void check_ble_duty(double d) {
  if (!(d >= 0.0 && d <= 1.0)) {
    std::ostringstream os;
    os << "BLE scan duty " << d << " outside [0, 1] (scan_window / scan_interval)";
    throw DomainError(os.str());
  }
}

double polynomial(double x, const ApFitCoefficients& f) {
  return ((f.c3 * x + f.c2) * x + f.c1) * x + f.c0;
}

double pwm_of(const VlcMode& vlc) {
  return std::visit(Overloaded{[](const VlcOff&) { return 0.0; },
                               [](const auto& m) { return m.pwm_duty_pct; }},
                    vlc);
}

}  // namespace

const GatewayConstants& default_constants() {
  static const GatewayConstants k{};
  return k;
}

GatewayConstants constants_from(const KeyValueFile& kv) {
  GatewayConstants k;
  auto fields = KeyTable{}.bind(k);
  for (const auto& e : kv.entries()) {
    bool known = false;
    for (auto& [key, ptr] : fields) {
      if (key == e.key) {
        *ptr = *kv.get_double(e.key);
        known = true;
        break;
      }
    }
    if (!known) throw ValidationError("unknown gateway constant: " + e.key);
  }
  for (auto& [key, ptr] : fields) {
    if (key.ends_with("_ma") && *ptr < 0.0) throw ValidationError("negative current constant: " + key);
  }
  return k;
}

GatewayConstants load_constants(const std::filesystem::path& path) {
  return constants_from(KeyValueFile::load(path));
}

KeyValueFile to_key_values(const GatewayConstants& k) {
  GatewayConstants copy = k;
  KeyValueFile kv;
  kv.add_comment("gateway / access point current model constants (mA, ms, V, % duty)");
  for (auto& [key, ptr] : KeyTable{}.bind(copy)) kv.set(key, format_double(*ptr));
  return kv;
}

double ap_vlc_idle_current(double pwm_duty_pct, const GatewayConstants& k) {
  check_pwm(pwm_duty_pct);
  return polynomial(pwm_duty_pct, k.fit);
}

double ap_ble_scan_only_current(double duty, const GatewayConstants& k) {
  check_ble_duty(duty);
  return k.fit.scan_slope_ma * duty + k.fit.scan_intercept_ma;
}

double ap_vlc_idle_ble_scan_current(double pwm_duty_pct, double ble_duty, const GatewayConstants& k) {
  check_pwm(pwm_duty_pct);
  check_ble_duty(ble_duty);
  const double x = pwm_duty_pct;
  return ((k.fit.c3 * x + k.fit.c2) * x + k.fit.c1) * x + k.fit.scan_intercept_ma +
         k.fit.scan_slope_ma * ble_duty;
}

double ap_vlc_tx_current(double pwm_duty_pct, bool ble_scanning, double ble_duty, const GatewayConstants& k) {
  if (ble_scanning) {
    return k.fit.tx_scan_gain * ap_vlc_idle_ble_scan_current(pwm_duty_pct, ble_duty, k) + k.fit.tx_scan_offset_ma;
  }
  return k.fit.tx_gain * ap_vlc_idle_current(pwm_duty_pct, k) + k.fit.tx_offset_ma;
}

double ap_vlc_rx_current(double pwm_duty_pct, bool ble_scanning, double ble_duty, const GatewayConstants& k) {
  // Reception adds no measurable overhead over idle.
  if (ble_scanning) return ap_vlc_idle_ble_scan_current(pwm_duty_pct, ble_duty, k);
  return ap_vlc_idle_current(pwm_duty_pct, k);
}

BlePeak ap_ble_peak_current(double pwm_duty_pct, BleDirection direction, const GatewayConstants& k) {
  const double conn_idle = ap_vlc_idle_current(pwm_duty_pct, k);
  if (direction == BleDirection::kRxData) {
    return {k.fit.ble_rx_gain * conn_idle + k.fit.ble_rx_offset_ma, k.fit.ble_rx_peak_ms};
  }
  return {k.fit.ble_tx_gain * conn_idle + k.fit.ble_tx_offset_ma, k.fit.ble_tx_peak_ms};
}

double minilamp_current(double pwm_duty_pct, const BleMode& ble, const GatewayConstants& k) {
  check_pwm(pwm_duty_pct);
  // VLC-dependent part of the AP curve; mini-lamp and AP differ by a constant.
  const double vlc_part = polynomial(pwm_duty_pct, k.fit) - k.fit.c0;
  const double i = std::visit(
      Overloaded{
          [&](const BleOff&) { return polynomial(pwm_duty_pct, k.fit) - k.minilamp.bbb_excess_ma; },
          [&](const BleScanning& s) {
            check_ble_duty(s.duty());
            return vlc_part + k.minilamp.scan_intercept_ma + k.minilamp.scan_slope_ma_per_unit_duty * s.duty();
          },
          [&](const BleConnected&) { return vlc_part + k.minilamp.conn_current_ma; },
      },
      ble);
  if (i < 0.0) {
    throw Error(ErrorCode::kInternal, "mini-lamp model predicts negative current; constants are inconsistent");
  }
  return i;
}

std::vector<std::string> validate(const ApOperatingPoint& p) {
  std::vector<std::string> warnings;
  if (p.booting) return warnings;
  if (p.eth_tx_active && !p.eth_connected) {
    throw ValidationError("eth_tx_active requires eth_connected");
  }
  const bool vlc_on = !std::holds_alternative<VlcOff>(p.vlc);
  if (vlc_on) check_pwm(pwm_of(p.vlc));
  if (const auto* tx = std::get_if<VlcTx>(&p.vlc); tx != nullptr && tx->n_chunks <= 0) {
    throw ValidationError("VLC TX frame needs at least one chunk");
  }
  if (const auto* s = std::get_if<BleScanning>(&p.ble)) {
    if (!(s->scan_window_ms > 0.0 && s->scan_window_ms <= s->scan_interval_ms)) {
      throw ValidationError("BLE scanning requires 0 < scan_window_ms <= scan_interval_ms");
    }
  }
  if (const auto* c = std::get_if<BleConnected>(&p.ble)) {
    if (!(c->conn_interval_ms > 0.0)) throw ValidationError("BLE connection interval must be positive");
    if (c->conn_interval_ms < kMinConnIntervalMs || c->conn_interval_ms > kMaxConnIntervalMs) {
      std::ostringstream os;
      os << "connection interval " << c->conn_interval_ms << " ms outside the measured 11.25-1000 ms range";
      warnings.push_back(os.str());
    }
  }
  return warnings;
}

double ap_operating_current(const ApOperatingPoint& p, const GatewayConstants& k) {
  if (p.booting) return k.ap.boot_current_ma;
  validate(p);
  const double x = pwm_of(p.vlc);
  const auto* scan = std::get_if<BleScanning>(&p.ble);
  const bool scanning = scan != nullptr;
  const double duty = scanning ? scan->duty() : 0.0;

  double base = std::visit(
      Overloaded{
          [&](const VlcTx&) { return ap_vlc_tx_current(x, scanning, duty, k); },
          [&](const VlcRx&) { return ap_vlc_rx_current(x, scanning, duty, k); },
          [&](const auto&) {
            return scanning ? ap_vlc_idle_ble_scan_current(x, duty, k) : ap_vlc_idle_current(x, k);
          },
      },
      p.vlc);

  if (const auto* c = std::get_if<BleConnected>(&p.ble)) {
    if (c->phase == BlePhase::kRxData) base = k.fit.ble_rx_gain * base + k.fit.ble_rx_offset_ma;
    if (c->phase == BlePhase::kTxCommand) base = k.fit.ble_tx_gain * base + k.fit.ble_tx_offset_ma;
  }
  if (!p.usb_connected) base -= k.ap.usb_increment_ma;
  if (!p.eth_connected) base -= k.ap.eth_link_increment_ma;
  if (p.eth_tx_active) base += k.ap.eth_tx_increment_ma;
  return base;
}

std::string describe(const ApOperatingPoint& p) {
  if (p.booting) return "boot";
  std::ostringstream os;
  std::visit(Overloaded{[&](const VlcOff&) { os << "vlc-off"; },
                        [&](const VlcIdle& m) { os << "vlc-idle@" << m.pwm_duty_pct << "%"; },
                        [&](const VlcTx& m) { os << "vlc-tx@" << m.pwm_duty_pct << "%x" << m.n_chunks; },
                        [&](const VlcRx& m) { os << "vlc-rx@" << m.pwm_duty_pct << "%"; }},
             p.vlc);
  std::visit(Overloaded{[&](const BleOff&) {},
                        [&](const BleScanning& s) { os << "+scan " << s.scan_window_ms << "/" << s.scan_interval_ms; },
                        [&](const BleConnected& c) {
                          os << "+conn " << c.conn_interval_ms << "ms";
                          if (c.phase == BlePhase::kTxCommand) os << " tx";
                          if (c.phase == BlePhase::kRxData) os << " rx";
                        }},
             p.ble);
  if (!p.usb_connected) os << " no-usb";
  if (!p.eth_connected) os << " no-eth";
  if (p.eth_tx_active) os << " eth-tx";
  return os.str();
}

}  // namespace riot::gateway
