#pragma once

#include <chrono>
#include <string>

namespace limes {

using MonoClock = std::chrono::steady_clock;
using Duration = std::chrono::nanoseconds;
using UtcTime = std::chrono::system_clock::time_point;

inline double to_ms(Duration d) {
  return std::chrono::duration<double, std::milli>(d).count();
}

/// ISO-8601 with millisecond precision, e.g. 2025-01-31T12:00:00.123Z.
std::string format_utc(UtcTime t);
UtcTime parse_utc(const std::string &text);

} // namespace limes
