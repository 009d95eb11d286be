#include "limes/artifact.hpp"

#include "limes/error.hpp"

#include <algorithm>

namespace limes::container {

namespace {

struct Header {
  EngineFingerprint fingerprint;
  std::size_t blob_offset = 0;
};

std::optional<Header> parse_header(std::span<const std::uint8_t> bytes) {
  const std::size_t fixed = kMagic.size() + 1;
  if (bytes.size() < fixed)
    return std::nullopt;
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    return std::nullopt;
  if (bytes[kMagic.size()] != kVersion)
    return std::nullopt;
  auto nl = std::find(bytes.begin() + fixed, bytes.end(), std::uint8_t{'\n'});
  if (nl == bytes.end())
    return std::nullopt;
  std::string line(bytes.begin() + fixed, nl);
  auto fp = EngineFingerprint::parse(line);
  if (!fp)
    return std::nullopt;
  return Header{std::move(*fp),
                static_cast<std::size_t>(nl - bytes.begin()) + 1};
}

} // namespace

std::vector<std::uint8_t> encode(const CompiledArtifact &artifact) {
  std::string line = artifact.fingerprint.canonical_line();
  std::vector<std::uint8_t> out;
  out.reserve(kMagic.size() + 1 + line.size() + 1 + artifact.blob.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.insert(out.end(), line.begin(), line.end());
  out.push_back('\n');
  out.insert(out.end(), artifact.blob.begin(), artifact.blob.end());
  return out;
}

CompiledArtifact decode(std::span<const std::uint8_t> bytes,
                        const ContentHash &source_hash, UtcTime created_at) {
  auto header = parse_header(bytes);
  if (!header)
    throw Error(ErrorCode::CorruptArtifact, "artifact container header is invalid");
  if (header->blob_offset >= bytes.size())
    throw Error(ErrorCode::CorruptArtifact, "artifact container has an empty blob");
  CompiledArtifact artifact;
  artifact.source_hash = source_hash;
  artifact.fingerprint = std::move(header->fingerprint);
  artifact.blob.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header->blob_offset),
                       bytes.end());
  artifact.created_at = created_at;
  return artifact;
}

bool looks_valid(std::span<const std::uint8_t> bytes) {
  auto header = parse_header(bytes);
  return header && header->blob_offset < bytes.size();
}

} // namespace limes::container
