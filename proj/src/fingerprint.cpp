#include "limes/fingerprint.hpp"

#include <algorithm>
#include <sstream>

namespace limes {

EngineFingerprint &EngineFingerprint::normalize() {
  std::sort(feature_flags.begin(), feature_flags.end());
  feature_flags.erase(std::unique(feature_flags.begin(), feature_flags.end()),
                      feature_flags.end());
  return *this;
}

std::string EngineFingerprint::canonical_line() const {
  std::string line = "engine=" + engine_name + ";version=" + engine_version +
                     ";target=" + target_triple + ";features=";
  for (std::size_t i = 0; i < feature_flags.size(); ++i) {
    if (i)
      line += ',';
    line += feature_flags[i];
  }
  return line;
}

std::optional<EngineFingerprint> EngineFingerprint::parse(const std::string &line) {
  static constexpr const char *keys[] = {"engine=", "version=", "target=",
                                         "features="};
  if (line.find('\n') != std::string::npos)
    return std::nullopt;
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string part;
  while (std::getline(in, part, ';'))
    fields.push_back(part);
  if (fields.size() != 4)
    return std::nullopt;
  std::vector<std::string> values;
  for (std::size_t i = 0; i < 4; ++i) {
    std::string_view key = keys[i];
    if (fields[i].compare(0, key.size(), key) != 0)
      return std::nullopt;
    values.push_back(fields[i].substr(key.size()));
  }
  EngineFingerprint fp{values[0], values[1], values[2], {}};
  std::istringstream flags(values[3]);
  while (std::getline(flags, part, ','))
    if (!part.empty())
      fp.feature_flags.push_back(part);
  if (!std::is_sorted(fp.feature_flags.begin(), fp.feature_flags.end()))
    return std::nullopt;
  return fp;
}

} // namespace limes
