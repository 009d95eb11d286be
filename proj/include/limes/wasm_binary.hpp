#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace limes {

enum class BinaryKind { CoreModule, Component };

struct BinaryCheck {
  bool ok = false;
  BinaryKind kind = BinaryKind::Component;
  std::string reason;
};

/// Structural validation of a WebAssembly binary: preamble, layer, and a walk
/// over the section framing. Does not type-check code; the engine does that
/// when compiling.
BinaryCheck check_wasm_binary(std::span<const std::uint8_t> bytes);

} // namespace limes
