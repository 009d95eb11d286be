#include "limes/registry.hpp"

#include "limes/log.hpp"
#include "limes/wasm_binary.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fcntl.h>
#include <fmt/format.h>
#include <fstream>
#include <unistd.h>

namespace limes {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(ModuleState state) noexcept {
  return state == ModuleState::Initialized ? "Initialized" : "Registered";
}

void to_json(json &j, const ModuleDescriptor &d) {
  j = json{{"module_id", d.module_id.hex()},
           {"name", d.name},
           {"size_bytes", d.size_bytes},
           {"registered_at", format_utc(d.registered_at)},
           {"state", to_string(d.state)},
           {"artifact_path", d.artifact_path ? json(*d.artifact_path) : json(nullptr)}};
}

void from_json(const json &j, ModuleDescriptor &d) {
  auto id = ContentHash::from_hex(j.at("module_id").get<std::string>());
  if (!id)
    throw Error(ErrorCode::StorageFailure, "index entry has a malformed module_id");
  d.module_id = *id;
  d.name = j.at("name").get<std::string>();
  d.size_bytes = j.at("size_bytes").get<std::uint64_t>();
  d.registered_at = parse_utc(j.at("registered_at").get<std::string>());
  d.state = j.at("state").get<std::string>() == "Initialized" ? ModuleState::Initialized
                                                             : ModuleState::Registered;
  if (j.contains("artifact_path") && !j.at("artifact_path").is_null())
    d.artifact_path = j.at("artifact_path").get<std::string>();
  else
    d.artifact_path.reset();
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::StorageFailure, fmt::format("cannot open {}", path.string()));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::optional<std::vector<std::uint8_t>> try_read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    return std::nullopt;
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void sync_dir(const fs::path &dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

bool valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
    if (len == 0 || i + len > s.size())
      return false;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2)
        return false;
    i += len;
  }
  return true;
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) >> 6) != 0x2; }));
}

} // namespace

ModuleRegistry::ModuleRegistry(fs::path data_dir, Executor &executor)
    : data_dir_(std::move(data_dir)), executor_(executor) {
  std::error_code ec;
  fs::create_directories(data_dir_ / "modules", ec);
  fs::create_directories(data_dir_ / "artifacts", ec);
  if (ec)
    throw Error(ErrorCode::StorageFailure,
                fmt::format("cannot create data dir {}: {}", data_dir_.string(), ec.message()));
  load_index();
}

ModuleRegistry::~ModuleRegistry() {
  try {
    flush();
  } catch (...) {
  }
}

fs::path ModuleRegistry::default_data_dir() {
  if (const char *dir = std::getenv("LIMES_DATA_DIR"); dir && *dir)
    return dir;
  return "limes-data";
}

fs::path ModuleRegistry::module_path(const ContentHash &id) const {
  return data_dir_ / "modules" / (id.hex() + ".wasm");
}

fs::path ModuleRegistry::artifact_path(const ContentHash &id) const {
  return data_dir_ / "artifacts" / (id.hex() + std::string(container::kExtension));
}

void ModuleRegistry::fault(std::string_view point) const {
  if (fault_hook_)
    fault_hook_(point);
}

void ModuleRegistry::load_index() {
  // Leftover temporaries from an interrupted write are never referenced.
  for (const char *sub : {"", "modules", "artifacts"}) {
    std::error_code ec;
    for (const auto &entry : fs::directory_iterator(data_dir_ / sub, ec))
      if (entry.path().extension() == ".tmp")
        fs::remove(entry.path(), ec);
  }

  auto raw = try_read_file(index_path());
  if (!raw)
    return;
  json doc;
  try {
    doc = json::parse(raw->begin(), raw->end());
  } catch (const json::exception &e) {
    throw Error(ErrorCode::StorageFailure, fmt::format("index.json is unreadable: {}", e.what()));
  }
  if (doc.value("hash_algo", std::string{}) != ContentHash::kAlgorithm)
    throw Error(ErrorCode::StorageFailure,
                fmt::format("store uses hash '{}', expected '{}'",
                            doc.value("hash_algo", std::string{}), ContentHash::kAlgorithm));
  if (doc.value("version", 0) != kIndexVersion)
    throw Error(ErrorCode::StorageFailure, "unsupported index.json version");

  bool repaired = false;
  for (const auto &item : doc.at("entries")) {
    auto d = item.get<ModuleDescriptor>();
    if (!fs::exists(module_path(d.module_id))) {
      repaired = true;
      continue;
    }
    if (d.artifact_path) {
      auto bytes = try_read_file(data_dir_ / *d.artifact_path);
      if (!bytes || !container::looks_valid(*bytes)) {
        d.artifact_path.reset();
        d.state = ModuleState::Registered;
        repaired = true;
      }
    } else if (d.state == ModuleState::Initialized) {
      d.state = ModuleState::Registered;
      repaired = true;
    }
    entries_.emplace(d.module_id, std::move(d));
  }
  compile_count_ = doc.value("compile_count", std::uint64_t{0});
  hit_count_ = doc.value("hit_count", std::uint64_t{0});
  if (repaired) {
    std::lock_guard w(writer_mu_);
    std::shared_lock r(mu_);
    write_index_locked();
  }
}

void ModuleRegistry::write_file_atomic(const fs::path &target,
                                       std::span<const std::uint8_t> bytes,
                                       std::string_view fault_prefix) {
  fs::path tmp = target;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0)
    throw Error(ErrorCode::StorageFailure, fmt::format("cannot write {}", tmp.string()));
  std::size_t done = 0;
  const std::size_t half = bytes.size() / 2;
  bool half_reported = false;
  while (done < bytes.size()) {
    std::size_t chunk = bytes.size() - done;
    if (!half_reported && fault_hook_ && done < half)
      chunk = half - done;
    ssize_t n = ::write(fd, bytes.data() + done, chunk);
    if (n < 0) {
      ::close(fd);
      throw Error(ErrorCode::StorageFailure, fmt::format("short write to {}", tmp.string()));
    }
    done += static_cast<std::size_t>(n);
    if (!half_reported && done >= half) {
      half_reported = true;
      fault(fmt::format("{}-temp-partial", fault_prefix));
    }
  }
  ::fsync(fd);
  ::close(fd);
  fault(fmt::format("{}-temp-written", fault_prefix));
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw Error(ErrorCode::StorageFailure,
                fmt::format("cannot rename {}: {}", tmp.string(), ec.message()));
  sync_dir(target.parent_path());
  fault(fmt::format("{}-renamed", fault_prefix));
}

void ModuleRegistry::write_index_locked() {
  json doc;
  doc["version"] = kIndexVersion;
  doc["hash_algo"] = ContentHash::kAlgorithm;
  std::vector<ModuleDescriptor> ordered;
  for (const auto &[id, d] : entries_)
    ordered.push_back(d);
  doc["entries"] = ordered;
  doc["compile_count"] = compile_count_.load();
  doc["hit_count"] = hit_count_.load();
  std::string text = doc.dump(2) + "\n";
  write_file_atomic(index_path(),
                    {reinterpret_cast<const std::uint8_t *>(text.data()), text.size()},
                    "index");
  counters_dirty_ = false;
}

void ModuleRegistry::flush() {
  if (!counters_dirty_.load())
    return;
  std::lock_guard w(writer_mu_);
  std::shared_lock r(mu_);
  write_index_locked();
}

ModuleDescriptor ModuleRegistry::register_module(std::span<const std::uint8_t> wasm,
                                                 std::string name) {
  auto check = check_wasm_binary(wasm);
  if (!check.ok)
    throw Error(ErrorCode::MalformedModule, check.reason);
  if (check.kind != BinaryKind::Component)
    throw Error(ErrorCode::MalformedModule, "expected a component, got a core module");
  if (!valid_utf8(name))
    throw Error(ErrorCode::InvalidArgument, "module name is not valid UTF-8");
  if (utf8_length(name) > kMaxModuleNameLength)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("module name exceeds {} characters", kMaxModuleNameLength));

  const auto id = ContentHash::of(wasm);
  std::lock_guard w(writer_mu_);
  {
    std::shared_lock r(mu_);
    if (auto it = entries_.find(id); it != entries_.end())
      return it->second;
  }
  write_file_atomic(module_path(id), wasm, "module");

  ModuleDescriptor d;
  d.module_id = id;
  d.name = std::move(name);
  d.size_bytes = wasm.size();
  d.registered_at = std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now());
  {
    std::unique_lock lock(mu_);
    entries_.emplace(id, d);
  }
  std::shared_lock r(mu_);
  write_index_locked();
  return d;
}

void ModuleRegistry::persist_artifact(const ContentHash &id, const CompiledArtifact &artifact) {
  auto bytes = container::encode(artifact);
  write_file_atomic(artifact_path(id), bytes, "artifact");
  {
    std::unique_lock lock(mu_);
    auto &d = entries_.at(id);
    d.state = ModuleState::Initialized;
    d.artifact_path = fs::relative(artifact_path(id), data_dir_).generic_string();
  }
  std::shared_lock r(mu_);
  write_index_locked();
}

std::optional<CompiledArtifact> ModuleRegistry::read_artifact(const ModuleDescriptor &d) const {
  if (!d.artifact_path)
    return std::nullopt;
  const fs::path path = data_dir_ / *d.artifact_path;
  auto bytes = try_read_file(path);
  if (!bytes)
    return std::nullopt;
  try {
    std::error_code ec;
    auto mtime = fs::last_write_time(path, ec);
    auto created = ec ? std::chrono::system_clock::now()
                      : std::chrono::file_clock::to_sys(mtime);
    return container::decode(*bytes, d.module_id,
                             std::chrono::time_point_cast<UtcTime::duration>(created));
  } catch (const Error &) {
    return std::nullopt;
  }
}

ModuleDescriptor ModuleRegistry::initialize(const ContentHash &module_id) {
  auto current = find(module_id);
  if (!current)
    throw Error(ErrorCode::UnknownModule, fmt::format("unknown module {}", module_id.hex()));
  if (current->state == ModuleState::Initialized) {
    if (auto art = read_artifact(*current); art && art->fingerprint == executor_.fingerprint())
      return *current;
  }

  auto bytes = module_bytes(module_id);
  CompiledArtifact artifact;
  try {
    artifact = executor_.compile_module(bytes);
  } catch (const Error &e) {
    throw Error(ErrorCode::CompileFailure, fmt::format("{}: {}", to_string(e.code()), e.what()));
  }

  std::lock_guard w(writer_mu_);
  {
    std::shared_lock r(mu_);
    if (!entries_.count(module_id))
      throw Error(ErrorCode::UnknownModule, fmt::format("module {} was removed", module_id.hex()));
  }
  compile_count_.fetch_add(1);
  persist_artifact(module_id, artifact);
  return *find(module_id);
}

CacheLookup ModuleRegistry::get_or_compile(const ContentHash &module_id) {
  auto current = find(module_id);
  if (!current)
    throw Error(ErrorCode::UnknownModule, fmt::format("unknown module {}", module_id.hex()));

  if (auto artifact = read_artifact(*current)) {
    try {
      CacheLookup out;
      out.handle = executor_.load_artifact(*artifact);
      out.artifact = std::move(*artifact);
      out.cache_hit = true;
      hit_count_.fetch_add(1);
      counters_dirty_ = true;
      return out;
    } catch (const Error &e) {
      log::warn("artifact for {} rejected ({}: {}); recompiling", module_id.hex(),
                to_string(e.code()), e.what());
    }
  } else if (current->artifact_path) {
    log::warn("artifact for {} is missing or unreadable; recompiling", module_id.hex());
  }

  auto bytes = module_bytes(module_id);
  CacheLookup out;
  try {
    out.handle = executor_.compile(bytes);
    out.artifact = executor_.serialize(out.handle);
  } catch (const Error &e) {
    throw Error(ErrorCode::CompileFailure, fmt::format("{}: {}", to_string(e.code()), e.what()));
  }
  out.cache_hit = false;

  std::lock_guard w(writer_mu_);
  {
    std::shared_lock r(mu_);
    if (!entries_.count(module_id))
      throw Error(ErrorCode::UnknownModule, fmt::format("module {} was removed", module_id.hex()));
  }
  compile_count_.fetch_add(1);
  persist_artifact(module_id, out.artifact);
  return out;
}

std::vector<ModuleDescriptor> ModuleRegistry::list_modules() const {
  std::vector<ModuleDescriptor> out;
  {
    std::shared_lock r(mu_);
    for (const auto &[id, d] : entries_)
      out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    if (a.registered_at != b.registered_at)
      return a.registered_at > b.registered_at;
    return a.module_id < b.module_id;
  });
  return out;
}

std::optional<ModuleDescriptor> ModuleRegistry::find(const ContentHash &module_id) const {
  std::shared_lock r(mu_);
  auto it = entries_.find(module_id);
  if (it == entries_.end())
    return std::nullopt;
  return it->second;
}

void ModuleRegistry::remove(const ContentHash &module_id) {
  std::lock_guard w(writer_mu_);
  {
    std::unique_lock lock(mu_);
    if (entries_.erase(module_id) == 0)
      throw Error(ErrorCode::UnknownModule, fmt::format("unknown module {}", module_id.hex()));
  }
  {
    std::shared_lock r(mu_);
    write_index_locked();
  }
  std::error_code ec;
  fs::remove(artifact_path(module_id), ec);
  fs::remove(module_path(module_id), ec);
}

std::vector<std::uint8_t> ModuleRegistry::module_bytes(const ContentHash &module_id) const {
  return read_file(module_path(module_id));
}

} // namespace limes
