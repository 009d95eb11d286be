#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace limes {

enum class ErrorCode {
  MalformedModule,
  MissingExport,
  EngineFailure,
  FingerprintMismatch,
  CorruptArtifact,
  LinkError,
  SandboxError,
  GuestTrap,
  GuestError,
  Interrupted,
  InstanceReused,
  NotRunning,
  UnknownModule,
  CompileFailure,
  StorageFailure,
  EmptySamples,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above so
/// callers (the gateway in particular) can map it without string matching.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace limes
