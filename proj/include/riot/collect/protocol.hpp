#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "riot/error.hpp"

// Collector wire format: 4-byte big-endian body length, then a JSON object
// whose "type" field names the message.
namespace riot::collect {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;
inline constexpr std::uint16_t kDefaultPort = 7420;

struct Hello {
  std::string device_id;
  double sample_rate_hz = 1000.0;
  int protocol_version = kProtocolVersion;
  std::int64_t t0_us = 0;  // guest-clock time of sample 0
  bool operator==(const Hello&) const = default;
};
struct ConfigReport {
  std::map<std::string, std::string> config_tags;
  bool operator==(const ConfigReport&) const = default;
};
struct SyncRequest {
  std::int64_t t1_us = 0;
  bool operator==(const SyncRequest&) const = default;
};
struct SyncResponse {
  std::int64_t t1_us = 0, t2_us = 0, t3_us = 0;
  bool operator==(const SyncResponse&) const = default;
};
struct SampleBatch {
  std::uint64_t seq_no = 0;
  std::uint64_t first_sample_index = 0;
  std::vector<double> samples_ua;
  bool operator==(const SampleBatch&) const = default;
};
struct End {
  std::uint64_t total_samples = 0;
  bool operator==(const End&) const = default;
};
struct Ack {
  std::uint64_t seq_no = 0;
  bool operator==(const Ack&) const = default;
};
struct Reject {
  std::string reason;
  bool operator==(const Reject&) const = default;
};

using Message = std::variant<Hello, ConfigReport, SyncRequest, SyncResponse, SampleBatch, End, Ack, Reject>;

std::string_view type_name(const Message& m);

/// Framing problem: bad length prefix, truncation, oversize body.
class FrameError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

std::string encode_body(const Message& m);
Message decode_body(std::string_view body);

/// Length prefix plus body.
std::string encode(const Message& m);
/// Decodes exactly one complete frame.
Message decode(std::string_view frame);

std::uint32_t read_length_prefix(std::string_view four_bytes);

}  // namespace riot::collect
