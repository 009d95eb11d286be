#pragma once

#include "limes/clock.hpp"
#include "limes/fingerprint.hpp"
#include "limes/hash.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace limes {

/// Engine-serialized machine code for one module.
struct CompiledArtifact {
  ContentHash source_hash;
  EngineFingerprint fingerprint;
  std::vector<std::uint8_t> blob;
  UtcTime created_at;
};

/// On-disk container:
///   "LIMESART" | version byte | canonical fingerprint line + '\n' | blob
namespace container {

inline constexpr std::string_view kMagic = "LIMESART";
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::string_view kExtension = ".limesart";

std::vector<std::uint8_t> encode(const CompiledArtifact &artifact);

/// Throws Error{CorruptArtifact} on a bad magic, version or header. The
/// container does not store the source hash; the caller supplies it.
CompiledArtifact decode(std::span<const std::uint8_t> bytes,
                        const ContentHash &source_hash, UtcTime created_at);

/// Cheap check used by the registry: magic, version and a parseable header.
bool looks_valid(std::span<const std::uint8_t> bytes);

} // namespace container
} // namespace limes
