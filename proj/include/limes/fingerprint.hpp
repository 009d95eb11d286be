#pragma once

#include <optional>
#include <string>
#include <vector>

namespace limes {

/// Identifies the engine build that produced a compiled artifact. Machine
/// code is only reusable when every field matches.
struct EngineFingerprint {
  std::string engine_name;
  std::string engine_version;
  std::string target_triple;
  std::vector<std::string> feature_flags; // kept sorted

  /// Sorts and de-duplicates feature_flags.
  EngineFingerprint &normalize();

  /// `engine=<n>;version=<v>;target=<t>;features=<a,b,c>`, no newline.
  std::string canonical_line() const;
  static std::optional<EngineFingerprint> parse(const std::string &line);

  friend bool operator==(const EngineFingerprint &,
                         const EngineFingerprint &) = default;
};

} // namespace limes
