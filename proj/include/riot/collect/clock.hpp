#pragma once

#include <cstdint>
#include <vector>

namespace riot::collect {

/// Guest clock minus host clock.
struct ClockOffset {
  double offset_us = 0.0;
  double round_trip_us = 0.0;
  std::int64_t estimated_at_us = 0;  // host time t4
};

/// Four-timestamp exchange: t1/t4 on the host clock, t2/t3 on the guest clock.
/// Throws ValidationError when t4 < t1, t3 < t2, or the round trip is negative.
ClockOffset estimate_offset(std::int64_t t1, std::int64_t t2, std::int64_t t3, std::int64_t t4);

/// The exchange with the median offset (lower median for even counts).
ClockOffset median_offset(std::vector<ClockOffset> samples);

}  // namespace riot::collect
