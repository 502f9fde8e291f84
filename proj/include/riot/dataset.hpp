#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "riot/node.hpp"
#include "riot/trace.hpp"

namespace riot::trace {

inline constexpr const char* kDatasetVersionLine = "# riot-energy-lab v1";
inline constexpr const char* kDatasetHeader = "state_duration_s,vlc_payload_bytes,ble_payload_bytes,current_uA";

struct DatasetRow {
  double state_duration_s = 0.0;
  double vlc_payload_bytes = 0.0;
  double ble_payload_bytes = 0.0;
  double current_ua = 0.0;

  bool operator==(const DatasetRow&) const = default;
};

struct WindowLabel {
  double state_duration_s;
  double vlc_payload_bytes;
  double ble_payload_bytes;
};

/// A span of a trace, in seconds from its first sample.
struct LabeledWindow {
  double t_start_s = 0.0;
  double duration_s = 0.0;
  std::optional<WindowLabel> label;
};

struct DatasetBuild {
  std::vector<DatasetRow> rows;
  std::size_t skipped = 0;  // unlabeled or empty windows
};

/// One row per labeled window; target is the mean current over the window.
DatasetBuild build_dataset(const CurrentTrace& trace, const std::vector<LabeledWindow>& windows);

void write_dataset_csv(const std::vector<DatasetRow>& rows, std::ostream& out);
void write_dataset_csv(const std::vector<DatasetRow>& rows, const std::filesystem::path& path);
std::vector<DatasetRow> read_dataset_csv(std::istream& in, const std::string& origin = "<stream>");
std::vector<DatasetRow> read_dataset_csv(const std::filesystem::path& path);

struct GeneratorOptions {
  std::size_t n_rows = 5000;
  std::uint64_t seed = 1;
  double noise_sigma_ua = 20.0;
  double node_voltage_v = 3.0;
  double min_window_s = 5.0;
  double max_window_s = 60.0;
  std::vector<double> vlc_payloads = {0, 0, 24, 48, 72, 96};
  std::vector<double> ble_payloads = {0, 0, 20, 64, 128, 244, 512};
  const node::NodePowerCalibration* calibration = nullptr;  // null: shipped
};

/// Burst timing used by the generator.
double vlc_burst_s(double payload_bytes);
double ble_burst_s(double payload_bytes);

/// Builds each window as a one-shot node scenario (VLC burst, BLE burst, then
/// the radio-context idle state), integrates it, and records the mean current.
std::vector<DatasetRow> generate_dataset(const GeneratorOptions& opt);

/// Synthesized node trace with the labeled windows it was built from.
struct LabeledTrace {
  CurrentTrace trace;
  std::vector<LabeledWindow> windows;
};
LabeledTrace generate_labeled_trace(const GeneratorOptions& opt, double sample_rate_hz);

}  // namespace riot::trace
