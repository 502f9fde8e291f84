#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riot/scenario.hpp"

namespace riot::trace {

using Tags = std::map<std::string, std::string>;

struct CurrentTrace {
  std::string device_id;
  std::int64_t t0_us = 0;
  double sample_rate_hz = 1000.0;
  std::vector<double> samples_ua;
  Tags config_tags;

  std::size_t size() const { return samples_ua.size(); }
  double period_us() const { return 1e6 / sample_rate_hz; }
  /// Time of sample k relative to t0, in µs.
  double offset_us(std::size_t k) const { return static_cast<double>(k) * period_us(); }
  /// Charge over the trace, holding each sample for one period (C).
  double charge_c() const;
  double mean_ua() const;
};

struct SynthOptions {
  double sample_rate_hz = 1000.0;
  double noise_sigma_ua = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> node_voltage_v;  // needed when the timeline holds power segments
  std::int64_t t0_us = 0;
  std::string device_id = "node";
  Tags config_tags;
};

/// Samples the timeline at t0 + k/rate over its whole duration.
CurrentTrace synthesize_trace(const scenario::Timeline& t, const SynthOptions& opt);

/// Interpolates every trace onto the grid spanning the latest start to the
/// earliest end. `clock_offsets_us[i]` (guest minus host) is subtracted from
/// trace i's t0 first and recorded as tag `clock_offset_us`; without offsets an
/// existing tag is kept (traces already corrected by the host).
std::vector<CurrentTrace> resample_common_base(const std::vector<CurrentTrace>& traces, double target_rate_hz,
                                               const std::vector<std::int64_t>& clock_offsets_us = {});

struct DespikeResult {
  CurrentTrace trace;
  std::size_t replaced = 0;
};

/// Hampel filter. The first and last window/2 samples are left as they are.
DespikeResult despike(const CurrentTrace& t, std::size_t window = 5, double n_sigmas = 3.0);
std::vector<double> hampel(const std::vector<double>& x, std::size_t window, double n_sigmas,
                           std::size_t* replaced = nullptr);

CurrentTrace aggregate_network(const std::vector<CurrentTrace>& traces);

void write_trace(const CurrentTrace& t, const std::filesystem::path& csv_path);
CurrentTrace read_trace(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace riot::trace
