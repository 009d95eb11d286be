#include "limes/wasm_binary.hpp"

#include <optional>

namespace limes {

namespace {

std::optional<std::uint32_t> read_leb_u32(std::span<const std::uint8_t> bytes,
                                          std::size_t &pos) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < 35; shift += 7) {
    if (pos >= bytes.size())
      return std::nullopt;
    std::uint8_t b = bytes[pos++];
    value |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if ((b & 0x80) == 0)
      return value <= UINT32_MAX ? std::optional<std::uint32_t>(value)
                                 : std::nullopt;
  }
  return std::nullopt;
}

BinaryCheck fail(std::string reason) { return {false, BinaryKind::Component, std::move(reason)}; }

} // namespace

BinaryCheck check_wasm_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.empty())
    return fail("empty input");
  if (bytes.size() < 8)
    return fail("truncated preamble");
  if (bytes[0] != 0x00 || bytes[1] != 0x61 || bytes[2] != 0x73 || bytes[3] != 0x6d)
    return fail("missing \\0asm magic");

  const std::uint16_t version = bytes[4] | bytes[5] << 8;
  const std::uint16_t layer = bytes[6] | bytes[7] << 8;
  BinaryCheck check;
  if (layer == 0 && version == 1)
    check.kind = BinaryKind::CoreModule;
  else if (layer == 1)
    check.kind = BinaryKind::Component;
  else
    return fail("unsupported version/layer");

  std::size_t pos = 8;
  while (pos < bytes.size()) {
    ++pos; // section id
    auto size = read_leb_u32(bytes, pos);
    if (!size)
      return fail("bad section size encoding");
    if (*size > bytes.size() - pos)
      return fail("section overruns end of binary");
    pos += *size;
  }
  check.ok = true;
  return check;
}

} // namespace limes
