#pragma once

#include "limes/artifact.hpp"
#include "limes/clock.hpp"
#include "limes/executor.hpp"
#include "limes/hash.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace limes {

enum class ModuleState { Registered, Initialized };

std::string_view to_string(ModuleState state) noexcept;

struct ModuleDescriptor {
  ContentHash module_id;
  std::string name;
  std::uint64_t size_bytes = 0;
  UtcTime registered_at;
  ModuleState state = ModuleState::Registered;
  std::optional<std::string> artifact_path; // relative to the data dir

  friend bool operator==(const ModuleDescriptor &, const ModuleDescriptor &) = default;
};

void to_json(nlohmann::json &j, const ModuleDescriptor &d);
void from_json(const nlohmann::json &j, ModuleDescriptor &d);

inline constexpr std::size_t kMaxModuleNameLength = 128;
inline constexpr int kIndexVersion = 1;

/// Result of get_or_compile: the artifact, where it came from, and a handle
/// that is already loaded into the engine.
struct CacheLookup {
  CompiledArtifact artifact;
  bool cache_hit = false;
  ModuleHandle handle;
};

/// Content-addressed store of registered modules and their compiled
/// artifacts under a data directory:
///
///   modules/<hex-id>.wasm
///   artifacts/<hex-id>.limesart
///   index.json
///
/// Every file is written to a temporary name and renamed into place, and an
/// artifact is always durable before the index refers to it.
class ModuleRegistry {
public:
  /// Called at named points during writes. Tests use it to simulate crashes.
  using FaultHook = std::function<void(std::string_view point)>;

  ModuleRegistry(std::filesystem::path data_dir, Executor &executor);
  ~ModuleRegistry();
  ModuleRegistry(const ModuleRegistry &) = delete;
  ModuleRegistry &operator=(const ModuleRegistry &) = delete;

  /// LIMES_DATA_DIR, or ./limes-data.
  static std::filesystem::path default_data_dir();

  /// Idempotent on identical bytes; the first registration's name wins.
  ModuleDescriptor register_module(std::span<const std::uint8_t> wasm,
                                   std::string name);

  /// Compiles and persists the artifact unless one is already present.
  ModuleDescriptor initialize(const ContentHash &module_id);

  /// Cached artifact when it loads on this engine, otherwise a fresh compile
  /// that replaces it. A corrupt or foreign artifact is recompiled silently.
  CacheLookup get_or_compile(const ContentHash &module_id);

  /// Newest first.
  std::vector<ModuleDescriptor> list_modules() const;
  std::optional<ModuleDescriptor> find(const ContentHash &module_id) const;
  void remove(const ContentHash &module_id);

  std::vector<std::uint8_t> module_bytes(const ContentHash &module_id) const;

  std::uint64_t compile_count() const { return compile_count_.load(); }
  std::uint64_t hit_count() const { return hit_count_.load(); }

  /// Persists the counters; hits alone do not rewrite the index.
  void flush();

  const std::filesystem::path &data_dir() const { return data_dir_; }
  std::filesystem::path index_path() const { return data_dir_ / "index.json"; }
  std::filesystem::path module_path(const ContentHash &id) const;
  std::filesystem::path artifact_path(const ContentHash &id) const;

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

private:
  void load_index();
  void write_index_locked();
  void write_file_atomic(const std::filesystem::path &target,
                         std::span<const std::uint8_t> bytes,
                         std::string_view fault_prefix);
  void persist_artifact(const ContentHash &id, const CompiledArtifact &artifact);
  void fault(std::string_view point) const;
  std::optional<CompiledArtifact> read_artifact(const ModuleDescriptor &d) const;

  std::filesystem::path data_dir_;
  Executor &executor_;
  FaultHook fault_hook_;

  mutable std::shared_mutex mu_;       // guards entries_
  std::mutex writer_mu_;               // serializes register/initialize/remove
  std::map<ContentHash, ModuleDescriptor> entries_;
  std::atomic<std::uint64_t> compile_count_{0};
  std::atomic<std::uint64_t> hit_count_{0};
  std::atomic<bool> counters_dirty_{false};
};

} // namespace limes
