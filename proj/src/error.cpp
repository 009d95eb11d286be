#include "limes/error.hpp"

namespace limes {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
  case ErrorCode::MalformedModule: return "MalformedModule";
  case ErrorCode::MissingExport: return "MissingExport";
  case ErrorCode::EngineFailure: return "EngineFailure";
  case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
  case ErrorCode::CorruptArtifact: return "CorruptArtifact";
  case ErrorCode::LinkError: return "LinkError";
  case ErrorCode::SandboxError: return "SandboxError";
  case ErrorCode::GuestTrap: return "GuestTrap";
  case ErrorCode::GuestError: return "GuestError";
  case ErrorCode::Interrupted: return "Interrupted";
  case ErrorCode::InstanceReused: return "InstanceReused";
  case ErrorCode::NotRunning: return "NotRunning";
  case ErrorCode::UnknownModule: return "UnknownModule";
  case ErrorCode::CompileFailure: return "CompileFailure";
  case ErrorCode::StorageFailure: return "StorageFailure";
  case ErrorCode::EmptySamples: return "EmptySamples";
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

} // namespace limes
