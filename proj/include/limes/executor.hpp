#pragma once

#include "limes/artifact.hpp"
#include "limes/clock.hpp"
#include "limes/error.hpp"
#include "limes/fingerprint.hpp"
#include "limes/hash.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace limes {

/// Name of the single export every function component must provide:
/// `run: func(input: list<u8>) -> result<list<u8>, string>`.
inline constexpr std::string_view kEntrypoint = "run";

/// WASI capabilities granted to one instance. Network access is never granted.
struct SandboxPolicy {
  std::filesystem::path preopen_dir;
  bool allow_writes = false;
  std::vector<std::uint8_t> stdin_bytes;
  bool capture_stdout = false;
  std::vector<std::string> env_vars; // KEY=VALUE
};

struct EpochConfig {
  std::chrono::milliseconds tick_interval{10};
  std::uint64_t deadline_ticks = 3000;

  Duration deadline() const { return tick_interval * deadline_ticks; }
  void validate() const;

  /// Smallest tick count whose deadline covers `deadline_ms`.
  static EpochConfig for_deadline(std::chrono::milliseconds deadline,
                                  std::chrono::milliseconds tick =
                                      std::chrono::milliseconds{10});
};

enum class InstanceState { Ready, Running, Finished, Interrupted, Failed };

std::string_view to_string(InstanceState state) noexcept;
bool is_terminal(InstanceState state) noexcept;

struct TimingBreakdown {
  Duration cold_start{};
  Duration execution{};
  Duration total{};
  bool cache_hit = false;
};

namespace detail {
struct EngineState;
struct CompiledComponent;
} // namespace detail

/// A compiled component ready for instantiation. Cheap to copy and safe to
/// share between threads.
class ModuleHandle {
public:
  const ContentHash &source_hash() const { return source_hash_; }

private:
  friend class Executor;
  friend class FunctionInstance;

  std::shared_ptr<const detail::CompiledComponent> component_;
  ContentHash source_hash_;
};

struct InvokeResult {
  InstanceState status = InstanceState::Failed;
  std::vector<std::uint8_t> output;
  std::optional<Error> error;
  TimingBreakdown timing;

  /// The output on success, otherwise throws the recorded error.
  const std::vector<std::uint8_t> &value() const;
};

/// One instantiated component. Single-use: it can be invoked exactly once,
/// and interrupt() may be called from any other thread while it runs.
class FunctionInstance {
public:
  ~FunctionInstance();
  FunctionInstance(const FunctionInstance &) = delete;
  FunctionInstance &operator=(const FunctionInstance &) = delete;

  const std::string &instance_id() const;
  const ContentHash &module_hash() const;
  MonoClock::time_point ready_at() const;
  Duration cold_start() const;
  bool cache_hit() const;
  InstanceState state() const;

  /// Every state the instance has been in, in order.
  std::vector<InstanceState> history() const;

  /// Calls the guest's entrypoint. Throws Error{InstanceReused} unless the
  /// instance is Ready; every other failure is reported in the result.
  InvokeResult invoke(std::span<const std::uint8_t> input);

  /// Throws Error{NotRunning} unless the instance is currently Running.
  void interrupt();

  /// Guest stdout, when the policy asked for it to be captured.
  std::string captured_stdout() const;

  struct Impl;

private:
  friend class Executor;
  explicit FunctionInstance(std::unique_ptr<Impl> impl);

  std::unique_ptr<Impl> impl_;
};

struct ColdStart {
  std::shared_ptr<FunctionInstance> instance;
  Duration cold_start{};
  bool cache_hit = false;
};

struct ExecutorOptions {
  /// Period of the background ticker that advances the engine epoch.
  std::chrono::milliseconds tick_interval{10};
};

/// Owns the engine, the shared WASI linker and the epoch ticker.
class Executor {
public:
  explicit Executor(ExecutorOptions options = {});
  ~Executor();
  Executor(const Executor &) = delete;
  Executor &operator=(const Executor &) = delete;

  const EngineFingerprint &fingerprint() const;

  /// JIT-compiles a component. Throws MalformedModule, MissingExport or
  /// EngineFailure.
  ModuleHandle compile(std::span<const std::uint8_t> wasm);

  CompiledArtifact serialize(const ModuleHandle &handle) const;

  /// compile() followed by serialize().
  CompiledArtifact compile_module(std::span<const std::uint8_t> wasm);

  /// Loads serialized machine code without invoking the compiler. Throws
  /// FingerprintMismatch or CorruptArtifact.
  ModuleHandle load_artifact(const CompiledArtifact &artifact) const;
  ModuleHandle load_artifact(const CompiledArtifact &artifact,
                             const EngineFingerprint &current) const;

  /// Throws SandboxError or LinkError. `request_start` anchors the cold-start
  /// measurement; it defaults to the moment this call begins. `cache_hit`
  /// records how the handle was obtained.
  std::shared_ptr<FunctionInstance>
  instantiate(const ModuleHandle &handle, const SandboxPolicy &policy,
              const EpochConfig &epochs,
              std::optional<MonoClock::time_point> request_start = {},
              bool cache_hit = false);

  /// Compile-or-load plus instantiate, timed up to the ready state. A cache
  /// that fails to load falls back to compilation.
  ColdStart measure_cold_start(std::span<const std::uint8_t> wasm,
                               const SandboxPolicy &policy,
                               const EpochConfig &epochs,
                               const CompiledArtifact *cache = nullptr);

  std::uint64_t compile_count() const;
  std::uint64_t load_count() const;

private:
  std::shared_ptr<detail::EngineState> engine_;
};

} // namespace limes
