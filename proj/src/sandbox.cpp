#include "limes/sandbox.hpp"

#include "limes/error.hpp"

#include <cstdlib>
#include <fmt/format.h>
#include <fstream>

namespace limes {

namespace fs = std::filesystem;

SandboxDir::SandboxDir(std::span<const fs::path> seeds) {
  std::string templ = (fs::temp_directory_path() / "limes-sbx-XXXXXX").string();
  if (!::mkdtemp(templ.data()))
    throw Error(ErrorCode::SandboxError, "cannot create sandbox directory");
  path_ = templ;
  for (const auto &seed : seeds) {
    std::error_code ec;
    fs::copy_file(seed, path_ / seed.filename(), fs::copy_options::overwrite_existing, ec);
    if (ec) {
      fs::remove_all(path_, ec);
      throw Error(ErrorCode::SandboxError,
                  fmt::format("cannot seed sandbox with {}", seed.string()));
    }
  }
}

SandboxDir::~SandboxDir() {
  if (!path_.empty()) {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
}

SandboxDir::SandboxDir(SandboxDir &&other) noexcept : path_(std::move(other.path_)) {
  other.path_.clear();
}

SandboxDir &SandboxDir::operator=(SandboxDir &&other) noexcept {
  if (this != &other) {
    if (!path_.empty()) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
    path_ = std::move(other.path_);
    other.path_.clear();
  }
  return *this;
}

TreeSnapshot snapshot_tree(const fs::path &root) {
  TreeSnapshot snap;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec)
      break;
    if (!it->is_regular_file())
      continue;
    std::ifstream in(it->path(), std::ios::binary);
    snap[fs::relative(it->path(), root).generic_string()] =
        std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
  }
  return snap;
}

} // namespace limes
