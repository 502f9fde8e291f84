#include "riot/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "riot/calibration.hpp"
#include "riot/error.hpp"
#include "riot/scenario.hpp"

namespace riot::trace {

using node::NodeState;

DatasetBuild build_dataset(const CurrentTrace& trace, const std::vector<LabeledWindow>& windows) {
  DatasetBuild out;
  for (const auto& w : windows) {
    if (!w.label) {
      ++out.skipped;
      continue;
    }
    const auto first = static_cast<std::size_t>(std::ceil(w.t_start_s * trace.sample_rate_hz - 1e-9));
    const auto last = std::min(trace.size(), static_cast<std::size_t>(std::ceil(
                                                 (w.t_start_s + w.duration_s) * trace.sample_rate_hz - 1e-9)));
    if (first >= last) {
      ++out.skipped;
      continue;
    }
    double sum = 0.0;
    for (std::size_t k = first; k < last; ++k) sum += trace.samples_ua[k];
    out.rows.push_back({w.label->state_duration_s, w.label->vlc_payload_bytes, w.label->ble_payload_bytes,
                        sum / static_cast<double>(last - first)});
  }
  return out;
}

namespace {

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double parse_field(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError(where + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

void write_dataset_csv(const std::vector<DatasetRow>& rows, std::ostream& out) {
  out << kDatasetVersionLine << "\n" << kDatasetHeader << "\n";
  for (const auto& r : rows) {
    out << g6(r.state_duration_s) << "," << g6(r.vlc_payload_bytes) << "," << g6(r.ble_payload_bytes) << ","
        << g6(r.current_ua) << "\n";
  }
}

void write_dataset_csv(const std::vector<DatasetRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  write_dataset_csv(rows, out);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<DatasetRow> read_dataset_csv(std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<DatasetRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (!header) {
      if (line != kDatasetHeader) throw ValidationError(where + ": expected header " + std::string(kDatasetHeader));
      header = true;
      continue;
    }
    double f[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
      const auto comma = line.find(',', pos);
      if ((i < 3) == (comma == std::string::npos)) throw ValidationError(where + ": expected 4 fields");
      f[i] = parse_field(std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos),
                         where);
      pos = comma + 1;
    }
    DatasetRow r{f[0], f[1], f[2], f[3]};
    for (double v : f)
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value");
    if (r.state_duration_s < 0 || r.vlc_payload_bytes < 0 || r.ble_payload_bytes < 0)
      throw ValidationError(where + ": features must be nonnegative");
    rows.push_back(r);
  }
  if (!header) throw ValidationError(origin + ": missing dataset header");
  return rows;
}

std::vector<DatasetRow> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_dataset_csv(in, path.string());
}

double vlc_burst_s(double payload_bytes) { return std::ceil(payload_bytes * 8.0 / 32.0) * 0.068; }
double ble_burst_s(double payload_bytes) { return std::ceil(payload_bytes / 20.0) * 0.045; }

namespace {

struct Window {
  double d, vlc, ble;
};

NodeState base_state(double vlc, double ble) {
  if (vlc > 0 && ble > 0) return NodeState::kBleConnectedIdleVlcListening;
  if (vlc > 0) return NodeState::kIdleVlcListening;
  if (ble > 0) return NodeState::kBleConnectedIdle;
  return NodeState::kIdle;
}

scenario::Scenario window_scenario(const Window& w) {
  scenario::Scenario s;
  s.name = "window";
  const double tv = vlc_burst_s(w.vlc), tb = ble_burst_s(w.ble);
  if (tv > 0) s.cycle.push_back({NodeState::kVlcTxFrame, tv});
  if (tb > 0) s.cycle.push_back({NodeState::kBleTx, tb});
  const double rest = w.d - tv - tb;
  if (rest > 0) s.cycle.push_back({base_state(w.vlc, w.ble), rest});
  s.horizon_s = w.d;
  return s;
}

std::vector<Window> draw_windows(const GeneratorOptions& opt) {
  if (opt.n_rows == 0) throw ValidationError("n_rows must be > 0");
  if (!(opt.min_window_s > 0.0 && opt.max_window_s >= opt.min_window_s))
    throw ValidationError("window bounds must satisfy 0 < min <= max");
  if (opt.vlc_payloads.empty() || opt.ble_payloads.empty()) throw ValidationError("payload choices must be non-empty");
  if (!(opt.node_voltage_v > 0.0)) throw ValidationError("node voltage must be > 0");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> dur(opt.min_window_s, opt.max_window_s);
  std::uniform_int_distribution<std::size_t> pv(0, opt.vlc_payloads.size() - 1), pb(0, opt.ble_payloads.size() - 1);
  std::vector<Window> out;
  out.reserve(opt.n_rows);
  for (std::size_t i = 0; i < opt.n_rows; ++i) {
    Window w;
    w.d = dur(rng);
    w.vlc = opt.vlc_payloads[pv(rng)];
    w.ble = opt.ble_payloads[pb(rng)];
    if (vlc_burst_s(w.vlc) + ble_burst_s(w.ble) > w.d)
      throw ValidationError("payload bursts exceed the window duration; raise min_window_s");
    out.push_back(w);
  }
  return out;
}

}  // namespace

std::vector<DatasetRow> generate_dataset(const GeneratorOptions& opt) {
  const auto windows = draw_windows(opt);
  const scenario::StateEvaluator eval{opt.calibration, nullptr};
  std::mt19937_64 noise_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<DatasetRow> rows;
  rows.reserve(windows.size());
  for (const auto& w : windows) {
    const auto e = scenario::integrate(scenario::expand_scenario(window_scenario(w), eval));
    double ua = e.energy_j / w.d / opt.node_voltage_v * 1e6;
    if (opt.noise_sigma_ua > 0.0) ua += opt.noise_sigma_ua * noise(noise_rng);
    rows.push_back({w.d, w.vlc, w.ble, ua});
  }
  return rows;
}

LabeledTrace generate_labeled_trace(const GeneratorOptions& opt, double sample_rate_hz) {
  const auto windows = draw_windows(opt);
  const scenario::StateEvaluator eval{opt.calibration, nullptr};
  scenario::Timeline all;
  LabeledTrace out;
  for (const auto& w : windows) {
    out.windows.push_back({all.total_duration_s, w.d, WindowLabel{w.d, w.vlc, w.ble}});
    for (auto e : scenario::expand_scenario(window_scenario(w), eval).entries) {
      e.t_start_s += all.total_duration_s;
      all.entries.push_back(std::move(e));
    }
    all.total_duration_s += w.d;
  }
  SynthOptions so;
  so.sample_rate_hz = sample_rate_hz;
  so.noise_sigma_ua = opt.noise_sigma_ua;
  so.seed = opt.seed;
  so.node_voltage_v = opt.node_voltage_v;
  out.trace = synthesize_trace(all, so);
  return out;
}

}  // namespace riot::trace
