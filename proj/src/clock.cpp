#include "limes/clock.hpp"

#include <ctime>
#include <fmt/format.h>
#include <iomanip>
#include <sstream>

namespace limes {

std::string format_utc(UtcTime t) {
  using namespace std::chrono;
  auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  int frac = static_cast<int>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    --secs;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z",
                     tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                     tm.tm_min, tm.tm_sec, frac);
}

UtcTime parse_utc(const std::string &text) {
  std::tm tm{};
  std::istringstream in(text);
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (in.fail())
    return UtcTime{};
  int frac = 0;
  if (in.peek() == '.') {
    in.get();
    std::string digits;
    while (std::isdigit(in.peek()) && digits.size() < 3)
      digits.push_back(static_cast<char>(in.get()));
    while (digits.size() < 3)
      digits.push_back('0');
    frac = std::stoi(digits);
  }
  auto secs = timegm(&tm);
  return UtcTime{std::chrono::seconds{secs}} + std::chrono::milliseconds{frac};
}

} // namespace limes
