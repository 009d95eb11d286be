#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace limes {

/// A fresh temporary directory that is removed when the object dies. Each
/// invocation gets its own so no files leak between tenants.
class SandboxDir {
public:
  /// Creates the directory and copies each seed file into it by file name.
  explicit SandboxDir(std::span<const std::filesystem::path> seeds = {});
  ~SandboxDir();

  SandboxDir(SandboxDir &&other) noexcept;
  SandboxDir &operator=(SandboxDir &&other) noexcept;
  SandboxDir(const SandboxDir &) = delete;
  SandboxDir &operator=(const SandboxDir &) = delete;

  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
};

/// Relative path -> file contents for every regular file under `root`.
using TreeSnapshot = std::map<std::string, std::vector<std::uint8_t>>;
TreeSnapshot snapshot_tree(const std::filesystem::path &root);

} // namespace limes
