#include "riot/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "riot/error.hpp"
#include "riot/kvconfig.hpp"

namespace riot::trace {

double CurrentTrace::charge_c() const {
  return std::accumulate(samples_ua.begin(), samples_ua.end(), 0.0) * 1e-6 / sample_rate_hz;
}

double CurrentTrace::mean_ua() const {
  if (samples_ua.empty()) return 0.0;
  return std::accumulate(samples_ua.begin(), samples_ua.end(), 0.0) / static_cast<double>(samples_ua.size());
}

CurrentTrace synthesize_trace(const scenario::Timeline& t, const SynthOptions& opt) {
  if (!(opt.sample_rate_hz > 0.0)) throw ValidationError("sample_rate_hz must be > 0");
  if (!(opt.noise_sigma_ua >= 0.0)) throw ValidationError("noise_sigma_ua must be >= 0");
  for (const auto& e : t.entries) {
    if (e.unit == scenario::Unit::kPowerMw && !opt.node_voltage_v)
      throw ValidationError("timeline segment '" + e.label +
                            "' is in mW; a node voltage is required to convert power to current");
  }
  if (opt.node_voltage_v && !(*opt.node_voltage_v > 0.0)) throw ValidationError("node voltage must be > 0");

  CurrentTrace out;
  out.device_id = opt.device_id;
  out.t0_us = opt.t0_us;
  out.sample_rate_hz = opt.sample_rate_hz;
  out.config_tags = opt.config_tags;
  const auto n = static_cast<std::size_t>(std::ceil(t.total_duration_s * opt.sample_rate_hz - 1e-9));
  out.samples_ua.reserve(n);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ts = static_cast<double>(k) / opt.sample_rate_hz;
    while (seg + 1 < t.entries.size() && ts >= t.entries[seg + 1].t_start_s) ++seg;
    const auto& e = t.entries[seg];
    const double ma = e.unit == scenario::Unit::kCurrentMa ? e.value : e.value / *opt.node_voltage_v;
    double ua = ma * 1000.0;
    if (opt.noise_sigma_ua > 0.0) ua = std::max(0.0, ua + opt.noise_sigma_ua * noise(rng));
    out.samples_ua.push_back(ua);
  }
  return out;
}

std::vector<CurrentTrace> resample_common_base(const std::vector<CurrentTrace>& traces, double target_rate_hz,
                                               const std::vector<std::int64_t>& clock_offsets_us) {
  if (traces.empty()) throw ValidationError("resample_common_base: no traces");
  if (!(target_rate_hz > 0.0)) throw ValidationError("target rate must be > 0");
  if (!clock_offsets_us.empty() && clock_offsets_us.size() != traces.size())
    throw ValidationError("resample_common_base: one clock offset per trace required");

  std::vector<std::int64_t> t0(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].size() < 2) throw ValidationError("trace '" + traces[i].device_id + "' has fewer than 2 samples");
    if (!(traces[i].sample_rate_hz > 0.0)) throw ValidationError("trace sample_rate_hz must be > 0");
    t0[i] = traces[i].t0_us - (clock_offsets_us.empty() ? 0 : clock_offsets_us[i]);
  }
  const std::int64_t start = *std::max_element(t0.begin(), t0.end());
  // Earliest last-sample time, relative to start.
  double end_rel = INFINITY;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const double last = static_cast<double>(t0[i] - start) + traces[i].offset_us(traces[i].size() - 1);
    end_rel = std::min(end_rel, last);
  }
  if (end_rel < 0.0) throw ValidationError("traces have no temporal overlap (empty intersection)");

  const double step_us = 1e6 / target_rate_hz;
  const auto count = static_cast<std::size_t>(std::floor(end_rel / step_us + 1e-9)) + 1;

  std::vector<CurrentTrace> out;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& src = traces[i];
    CurrentTrace r;
    r.device_id = src.device_id;
    r.t0_us = start;
    r.sample_rate_hz = target_rate_hz;
    r.config_tags = src.config_tags;
    if (clock_offsets_us.empty()) r.config_tags.try_emplace("clock_offset_us", "0");
    else r.config_tags["clock_offset_us"] = std::to_string(clock_offsets_us[i]);
    r.samples_ua.resize(count);
    const double lead_us = static_cast<double>(start - t0[i]);
    const double last = static_cast<double>(src.size() - 1);
    for (std::size_t k = 0; k < count; ++k) {
      const double u = std::clamp((lead_us + static_cast<double>(k) * step_us) * src.sample_rate_hz / 1e6, 0.0, last);
      const auto j = std::min(static_cast<std::size_t>(u), src.size() - 2);
      const double f = u - static_cast<double>(j);
      r.samples_ua[k] = f == 0.0 ? src.samples_ua[j] : src.samples_ua[j] + f * (src.samples_ua[j + 1] - src.samples_ua[j]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> hampel(const std::vector<double>& x, std::size_t window, double n_sigmas, std::size_t* replaced) {
  if (window < 3 || window % 2 == 0) throw ValidationError("Hampel window must be odd and >= 3");
  if (window > x.size()) throw ValidationError("Hampel window larger than the trace");
  if (!(n_sigmas > 0.0)) throw ValidationError("n_sigmas must be > 0");
  const std::size_t h = window / 2;
  std::vector<double> out = x;
  std::vector<double> buf(window), dev(window);
  std::size_t changed = 0;
  for (std::size_t i = h; i + h < x.size(); ++i) {
    std::copy(x.begin() + (i - h), x.begin() + (i + h + 1), buf.begin());
    std::nth_element(buf.begin(), buf.begin() + h, buf.end());
    const double med = buf[h];
    for (std::size_t k = 0; k < window; ++k) dev[k] = std::abs(x[i - h + k] - med);
    std::nth_element(dev.begin(), dev.begin() + h, dev.end());
    const double mad = dev[h];
    if (std::abs(x[i] - med) > n_sigmas * 1.4826 * mad) {
      out[i] = med;
      ++changed;
    }
  }
  if (replaced) *replaced = changed;
  return out;
}

DespikeResult despike(const CurrentTrace& t, std::size_t window, double n_sigmas) {
  DespikeResult r{t, 0};
  r.trace.samples_ua = hampel(t.samples_ua, window, n_sigmas, &r.replaced);
  return r;
}

CurrentTrace aggregate_network(const std::vector<CurrentTrace>& traces) {
  if (traces.empty()) throw ValidationError("aggregate_network: no traces");
  CurrentTrace out;
  out.device_id = "network";
  out.t0_us = traces.front().t0_us;
  out.sample_rate_hz = traces.front().sample_rate_hz;
  out.samples_ua.assign(traces.front().size(), 0.0);
  for (const auto& t : traces) {
    if (t.t0_us != out.t0_us || t.sample_rate_hz != out.sample_rate_hz || t.size() != out.samples_ua.size())
      throw ValidationError("aggregate_network: trace '" + t.device_id +
                            "' is on a different grid; resample to a common base first");
    for (std::size_t k = 0; k < t.size(); ++k) out.samples_ua[k] += t.samples_ua[k];
    for (const auto& [key, v] : t.config_tags) out.config_tags[t.device_id + "." + key] = v;
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_trace(const CurrentTrace& t, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write trace " + csv_path.string());
  out << "t_us,current_uA\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    out << t.t0_us + std::llround(t.offset_us(k)) << "," << format_double(t.samples_ua[k]) << "\n";
  }
  nlohmann::ordered_json meta{{"device_id", t.device_id},
                              {"t0_us", t.t0_us},
                              {"sample_rate_hz", t.sample_rate_hz},
                              {"config_tags", t.config_tags}};
  std::ofstream m(sidecar_path(csv_path));
  if (!m) throw IoError("cannot write trace sidecar for " + csv_path.string());
  m << meta.dump(2) << "\n";
  if (!out || !m) throw IoError("write failed: " + csv_path.string());
}

CurrentTrace read_trace(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open trace " + csv_path.string());
  CurrentTrace t;
  std::ifstream m(sidecar_path(csv_path));
  if (!m) throw IoError("missing trace sidecar " + sidecar_path(csv_path).string());
  try {
    const auto meta = nlohmann::json::parse(m);
    t.device_id = meta.at("device_id").get<std::string>();
    t.t0_us = meta.at("t0_us").get<std::int64_t>();
    t.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    if (meta.contains("config_tags")) t.config_tags = meta.at("config_tags").get<Tags>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(sidecar_path(csv_path).string() + ": " + e.what());
  }
  std::string line;
  if (!std::getline(in, line) || line != "t_us,current_uA")
    throw ValidationError(csv_path.string() + ": expected header t_us,current_uA");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      t.samples_ua.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ValidationError(csv_path.string() + ":" + std::to_string(row) + ": malformed row");
    }
  }
  return t;
}

}  // namespace riot::trace
