#include "riot/scenario_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "riot/error.hpp"

namespace riot::scenario {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
}

void allow_keys(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
  require_object(j, where);
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + k + "'");
  }
}

double number(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ValidationError(where + "." + key + ": expected a number");
  return v.get<double>();
}

double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

bool flag_or(const Json& j, const char* key, bool fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ValidationError(where + "." + key + ": expected a boolean");
  return j.at(key).get<bool>();
}

std::string text(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  if (!j.at(key).is_string()) throw ValidationError(where + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

Json segments_json(const std::vector<StateSegment>& segs) {
  Json a = Json::array();
  for (const auto& s : segs) a.push_back({{"state", to_json(s.state)}, {"duration_s", s.duration_s}});
  return a;
}

std::vector<StateSegment> segments_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array");
  std::vector<StateSegment> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    allow_keys(j[i], w, {"state", "duration_s"});
    if (!j[i].contains("state")) throw ValidationError(w + ": missing 'state'");
    out.push_back({segment_state_from_json(j[i].at("state")), number(j[i], "duration_s", w)});
  }
  return out;
}

const char* phase_name(gateway::BlePhase p) {
  switch (p) {
    case gateway::BlePhase::kTxCommand: return "tx_command";
    case gateway::BlePhase::kRxData: return "rx_data";
    default: return "idle";
  }
}

}  // namespace

Json to_json(const gateway::ApOperatingPoint& p) {
  using namespace gateway;
  Json j;
  j["vlc"] = std::visit(Overloaded{[](const VlcOff&) { return Json{{"mode", "off"}}; },
                                   [](const VlcIdle& m) { return Json{{"mode", "idle"}, {"pwm_duty_pct", m.pwm_duty_pct}}; },
                                   [](const VlcTx& m) {
                                     return Json{{"mode", "tx"}, {"pwm_duty_pct", m.pwm_duty_pct}, {"n_chunks", m.n_chunks}};
                                   },
                                   [](const VlcRx& m) { return Json{{"mode", "rx"}, {"pwm_duty_pct", m.pwm_duty_pct}}; }},
                        p.vlc);
  j["ble"] = std::visit(Overloaded{[](const BleOff&) { return Json{{"mode", "off"}}; },
                                   [](const BleScanning& s) {
                                     return Json{{"mode", "scanning"},
                                                 {"scan_window_ms", s.scan_window_ms},
                                                 {"scan_interval_ms", s.scan_interval_ms}};
                                   },
                                   [](const BleConnected& c) {
                                     return Json{{"mode", "connected"},
                                                 {"conn_interval_ms", c.conn_interval_ms},
                                                 {"phase", phase_name(c.phase)}};
                                   }},
                        p.ble);
  j["usb_connected"] = p.usb_connected;
  j["eth_connected"] = p.eth_connected;
  j["eth_tx_active"] = p.eth_tx_active;
  j["booting"] = p.booting;
  return j;
}

gateway::ApOperatingPoint ap_point_from_json(const Json& j) {
  using namespace gateway;
  const std::string w = "ap";
  allow_keys(j, w, {"vlc", "ble", "usb_connected", "eth_connected", "eth_tx_active", "booting"});
  ApOperatingPoint p;
  if (j.contains("vlc")) {
    const auto& v = j.at("vlc");
    allow_keys(v, "ap.vlc", {"mode", "pwm_duty_pct", "n_chunks"});
    const auto mode = text(v, "mode", "ap.vlc");
    const double pwm = number_or(v, "pwm_duty_pct", 0.0, "ap.vlc");
    if (mode == "off") p.vlc = VlcOff{};
    else if (mode == "idle") p.vlc = VlcIdle{pwm};
    else if (mode == "tx") {
      const double n = number_or(v, "n_chunks", 6.0, "ap.vlc");
      if (n != static_cast<int>(n) || n < 1) throw ValidationError("ap.vlc.n_chunks: expected a positive integer");
      p.vlc = VlcTx{pwm, static_cast<int>(n)};
    } else if (mode == "rx") p.vlc = VlcRx{pwm};
    else throw ValidationError("ap.vlc.mode: unknown mode '" + mode + "' (off, idle, tx, rx)");
  }
  if (j.contains("ble")) {
    const auto& b = j.at("ble");
    allow_keys(b, "ap.ble", {"mode", "scan_window_ms", "scan_interval_ms", "conn_interval_ms", "phase"});
    const auto mode = text(b, "mode", "ap.ble");
    if (mode == "off") p.ble = BleOff{};
    else if (mode == "scanning")
      p.ble = BleScanning{number_or(b, "scan_window_ms", 50.0, "ap.ble"), number_or(b, "scan_interval_ms", 100.0, "ap.ble")};
    else if (mode == "connected") {
      BleConnected c{number_or(b, "conn_interval_ms", 45.0, "ap.ble"), BlePhase::kIdle};
      if (b.contains("phase")) {
        const auto ph = text(b, "phase", "ap.ble");
        if (ph == "tx_command") c.phase = BlePhase::kTxCommand;
        else if (ph == "rx_data") c.phase = BlePhase::kRxData;
        else if (ph != "idle") throw ValidationError("ap.ble.phase: unknown phase '" + ph + "'");
      }
      p.ble = c;
    } else throw ValidationError("ap.ble.mode: unknown mode '" + mode + "' (off, scanning, connected)");
  }
  p.usb_connected = flag_or(j, "usb_connected", true, w);
  p.eth_connected = flag_or(j, "eth_connected", true, w);
  p.eth_tx_active = flag_or(j, "eth_tx_active", false, w);
  p.booting = flag_or(j, "booting", false, w);
  return p;
}

Json to_json(const SegmentState& s) {
  if (const auto* n = std::get_if<node::NodeState>(&s)) return std::string(node::to_string(*n));
  return Json{{"ap", to_json(std::get<gateway::ApOperatingPoint>(s))}};
}

SegmentState segment_state_from_json(const Json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (auto s = node::parse_node_state(name)) return *s;
    throw ValidationError("unknown node state '" + name + "'");
  }
  allow_keys(j, "state", {"ap"});
  if (!j.contains("ap")) throw ValidationError("state: expected a node state name or {\"ap\": {...}}");
  return ap_point_from_json(j.at("ap"));
}

Json to_json(const Scenario& s) {
  Json j;
  j["name"] = s.name;
  j["horizon_s"] = s.horizon_s;
  j["preamble"] = segments_json(s.preamble);
  j["cycle"] = segments_json(s.cycle);
  if (s.filler) j["filler"] = to_json(*s.filler);
  j["repetition"] = std::visit(
      Overloaded{[](const Once&) { return Json{{"kind", "once"}}; },
                 [](const Periodic& p) {
                   return Json{{"kind", "periodic"},
                               {"period_s", p.value_s},
                               {"basis", p.basis == PeriodBasis::kStartToStart ? "start_to_start" : "gap_after_active"}};
                 },
                 [](const RandomPoisson& p) {
                   return Json{{"kind", "poisson"}, {"mean_rate_per_s", p.mean_rate_per_s}, {"seed", p.seed}};
                 }},
      s.repetition);
  return j;
}

Scenario scenario_from_json(const Json& j) {
  const std::string w = "scenario";
  allow_keys(j, w, {"name", "horizon_s", "preamble", "cycle", "filler", "repetition"});
  Scenario s;
  s.name = j.contains("name") ? text(j, "name", w) : "";
  s.horizon_s = number_or(j, "horizon_s", 86400.0, w);
  if (j.contains("preamble")) s.preamble = segments_from(j.at("preamble"), "preamble");
  if (j.contains("cycle")) s.cycle = segments_from(j.at("cycle"), "cycle");
  if (j.contains("filler") && !j.at("filler").is_null()) s.filler = segment_state_from_json(j.at("filler"));
  if (j.contains("repetition")) {
    const auto& r = j.at("repetition");
    allow_keys(r, "repetition", {"kind", "period_s", "basis", "mean_rate_per_s", "seed"});
    const auto kind = text(r, "kind", "repetition");
    if (kind == "once") {
      s.repetition = Once{};
    } else if (kind == "periodic") {
      Periodic p{number(r, "period_s", "repetition"), PeriodBasis::kGapAfterActive};
      if (r.contains("basis")) {
        const auto b = text(r, "basis", "repetition");
        if (b == "start_to_start") p.basis = PeriodBasis::kStartToStart;
        else if (b != "gap_after_active")
          throw ValidationError("repetition.basis: expected start_to_start or gap_after_active");
      }
      s.repetition = p;
    } else if (kind == "poisson") {
      RandomPoisson p{number(r, "mean_rate_per_s", "repetition"), 0};
      if (r.contains("seed")) {
        if (!r.at("seed").is_number_unsigned()) throw ValidationError("repetition.seed: expected a nonnegative integer");
        p.seed = r.at("seed").get<std::uint64_t>();
      }
      s.repetition = p;
    } else {
      throw ValidationError("repetition.kind: unknown kind '" + kind + "' (once, periodic, poisson)");
    }
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scenario file " + path.string());
  out << to_json(s).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

Json to_json(const Timeline& t) {
  Json entries = Json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"t_start_s", e.t_start_s},
                       {"duration_s", e.duration_s},
                       {e.unit == Unit::kPowerMw ? "power_mw" : "current_ma", e.value},
                       {"label", e.label}});
  }
  return Json{{"total_duration_s", t.total_duration_s}, {"entries", std::move(entries)}};
}

Json to_json(const EnergyTotals& e) {
  Json j{{"duration_s", e.duration_s}, {"energy_j", e.energy_j}, {"avg_power_mw", e.avg_power_mw}};
  j["charge_c"] = e.charge_c ? Json(*e.charge_c) : Json(nullptr);
  j["avg_current_ma"] = e.avg_current_ma ? Json(*e.avg_current_ma) : Json(nullptr);
  return j;
}

Json to_json(const HarvestConfig& c) {
  Json profile = Json::array();
  for (const auto& p : c.input_power_mw) profile.push_back({{"t_s", p.t_s}, {"power_mw", p.power_mw}});
  Json cap{{"capacitance_f", c.supercap.capacitance_f},
           {"v_init_v", c.supercap.v_init_v},
           {"v_max_v", c.supercap.v_max_v},
           {"v_cutoff_v", c.supercap.v_cutoff_v},
           {"v_restart_v", c.supercap.restart_voltage()}};
  Json j{{"source", to_string(c.source)},
         {"input_power_mw", std::move(profile)},
         {"supercap", std::move(cap)},
         {"step_s", c.step_s},
         {"load_voltage_v", c.load_voltage_v},
         {"record_interval_s", c.record_interval_s}};
  if (c.halted_power_mw) j["halted_power_mw"] = *c.halted_power_mw;
  return j;
}

HarvestConfig harvest_config_from_json(const Json& j) {
  const std::string w = "harvest";
  allow_keys(j, w,
             {"source", "input_power_mw", "supercap", "step_s", "load_voltage_v", "halted_power_mw", "record_interval_s"});
  HarvestConfig c;
  if (j.contains("source")) c.source = parse_harvest_source(text(j, "source", w));
  if (j.contains("input_power_mw")) {
    const auto& p = j.at("input_power_mw");
    if (p.is_number()) {
      c.input_power_mw = {{0.0, p.get<double>()}};
    } else if (p.is_array()) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const std::string pw = "harvest.input_power_mw[" + std::to_string(i) + "]";
        allow_keys(p[i], pw, {"t_s", "power_mw"});
        c.input_power_mw.push_back({number(p[i], "t_s", pw), number(p[i], "power_mw", pw)});
      }
    } else {
      throw ValidationError("harvest.input_power_mw: expected a number or an array of {t_s, power_mw}");
    }
  }
  if (j.contains("supercap")) {
    const auto& s = j.at("supercap");
    const std::string sw = "harvest.supercap";
    allow_keys(s, sw, {"capacitance_f", "v_init_v", "v_max_v", "v_cutoff_v", "v_restart_v"});
    c.supercap.capacitance_f = number_or(s, "capacitance_f", c.supercap.capacitance_f, sw);
    c.supercap.v_init_v = number_or(s, "v_init_v", c.supercap.v_init_v, sw);
    c.supercap.v_max_v = number_or(s, "v_max_v", c.supercap.v_max_v, sw);
    c.supercap.v_cutoff_v = number_or(s, "v_cutoff_v", c.supercap.v_cutoff_v, sw);
    if (s.contains("v_restart_v")) c.supercap.v_restart_v = number(s, "v_restart_v", sw);
  }
  c.step_s = number_or(j, "step_s", c.step_s, w);
  c.load_voltage_v = number_or(j, "load_voltage_v", c.load_voltage_v, w);
  c.record_interval_s = number_or(j, "record_interval_s", c.record_interval_s, w);
  if (j.contains("halted_power_mw")) c.halted_power_mw = number(j, "halted_power_mw", w);
  validate(c);
  return c;
}

Json to_json(const HarvestResult& r) {
  Json v = Json::array();
  for (const auto& s : r.voltage) v.push_back({s.t_s, s.v});
  Json ev = Json::array();
  for (const auto& e : r.events)
    ev.push_back({{"t_s", e.t_s}, {"kind", e.kind == HarvestEventKind::kDepleted ? "depleted" : "restored"}});
  return Json{{"v_end_v", r.v_end},
              {"harvested_j", r.harvested_j},
              {"consumed_j", r.consumed_j},
              {"clipped_j", r.clipped_j},
              {"halted_s", r.halted_s},
              {"depletion_count", r.depletion_count()},
              {"events", std::move(ev)},
              {"voltage", std::move(v)}};
}

}  // namespace riot::scenario
