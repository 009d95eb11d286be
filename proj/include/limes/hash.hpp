#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace limes {

/// SHA-256 digest identifying a module by content.
class ContentHash {
public:
  static constexpr std::size_t kSize = 32;
  static constexpr std::string_view kAlgorithm = "sha256";

  ContentHash() = default;
  explicit ContentHash(const std::array<std::uint8_t, kSize> &bytes)
      : bytes_(bytes) {}

  static ContentHash of(std::span<const std::uint8_t> data);
  static std::optional<ContentHash> from_hex(std::string_view hex);

  std::string hex() const;
  const std::array<std::uint8_t, kSize> &bytes() const { return bytes_; }

  friend bool operator==(const ContentHash &, const ContentHash &) = default;
  friend auto operator<=>(const ContentHash &, const ContentHash &) = default;

private:
  std::array<std::uint8_t, kSize> bytes_{};
};

std::string base64_encode(std::span<const std::uint8_t> data);
std::optional<std::string> base64_decode(std::string_view text);

} // namespace limes

template <> struct std::hash<limes::ContentHash> {
  std::size_t operator()(const limes::ContentHash &h) const noexcept {
    std::size_t v = 0;
    for (std::size_t i = 0; i < sizeof(v); ++i)
      v = (v << 8) | h.bytes()[i];
    return v;
  }
};
