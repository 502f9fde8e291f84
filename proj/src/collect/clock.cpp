#include "riot/collect/clock.hpp"

#include <algorithm>

#include "riot/error.hpp"

namespace riot::collect {

ClockOffset estimate_offset(std::int64_t t1, std::int64_t t2, std::int64_t t3, std::int64_t t4) {
  if (t4 < t1) throw ValidationError("sync exchange rejected: host clock went backwards (t4 < t1)");
  if (t3 < t2) throw ValidationError("sync exchange rejected: guest replied before receiving (t3 < t2)");
  ClockOffset c;
  c.offset_us = (static_cast<double>(t2 - t1) + static_cast<double>(t3 - t4)) / 2.0;
  c.round_trip_us = static_cast<double>((t4 - t1) - (t3 - t2));
  c.estimated_at_us = t4;
  if (c.round_trip_us < 0) throw ValidationError("sync exchange rejected: negative round trip");
  return c;
}

ClockOffset median_offset(std::vector<ClockOffset> samples) {
  if (samples.empty()) throw ValidationError("no clock offset samples");
  std::sort(samples.begin(), samples.end(),
            [](const ClockOffset& a, const ClockOffset& b) { return a.offset_us < b.offset_us; });
  return samples[(samples.size() - 1) / 2];
}

}  // namespace riot::collect
