#include "limes/executor.hpp"

#include "limes/uuid.hpp"
#include "limes/wasm_binary.hpp"

#include <wasi.h>
#include <wasmtime.h>

#include <condition_variable>
#include <fmt/format.h>
#include <mutex>
#include <thread>

namespace limes {

namespace {

#if defined(__x86_64__)
constexpr const char *kArch = "x86_64";
#elif defined(__aarch64__)
constexpr const char *kArch = "aarch64";
#else
constexpr const char *kArch = "unknown";
#endif

#if defined(__linux__)
constexpr const char *kOs = "unknown-linux-gnu";
#elif defined(__APPLE__)
constexpr const char *kOs = "apple-darwin";
#else
constexpr const char *kOs = "unknown";
#endif

struct ErrorDeleter {
  void operator()(wasmtime_error_t *e) const { wasmtime_error_delete(e); }
};
using ErrorPtr = std::unique_ptr<wasmtime_error_t, ErrorDeleter>;

std::string message_of(wasmtime_error_t *raw) {
  ErrorPtr err(raw);
  wasm_name_t msg;
  wasmtime_error_message(err.get(), &msg);
  std::string out(msg.data, msg.size);
  wasm_byte_vec_delete(&msg);
  return out;
}

struct ComponentDeleter {
  void operator()(wasmtime_component_t *c) const { wasmtime_component_delete(c); }
};
struct ExportIndexDeleter {
  void operator()(wasmtime_component_export_index_t *i) const {
    wasmtime_component_export_index_delete(i);
  }
};
struct StoreDeleter {
  void operator()(wasmtime_store_t *s) const { wasmtime_store_delete(s); }
};
struct WasiConfigDeleter {
  void operator()(wasi_config_t *c) const { wasi_config_delete(c); }
};

} // namespace

namespace detail {

struct EngineState {
  wasm_engine_t *engine = nullptr;
  wasmtime_component_linker_t *linker = nullptr;
  EngineFingerprint fingerprint;
  std::atomic<std::uint64_t> compiles{0};
  std::atomic<std::uint64_t> loads{0};

  std::mutex tick_mu;
  std::condition_variable_any tick_cv;
  std::jthread ticker;

  ~EngineState() {
    if (ticker.joinable()) {
      ticker.request_stop();
      tick_cv.notify_all();
      ticker.join();
    }
    if (linker)
      wasmtime_component_linker_delete(linker);
    if (engine)
      wasm_engine_delete(engine);
  }
};

struct CompiledComponent {
  std::shared_ptr<EngineState> engine; // outlives the component
  std::unique_ptr<wasmtime_component_t, ComponentDeleter> component;
  std::unique_ptr<wasmtime_component_export_index_t, ExportIndexDeleter> run_export;
};

} // namespace detail

// ---------------------------------------------------------------------------

void EpochConfig::validate() const {
  if (tick_interval.count() <= 0)
    throw Error(ErrorCode::InvalidArgument, "tick_interval must be positive");
  if (deadline_ticks < 1)
    throw Error(ErrorCode::InvalidArgument, "deadline_ticks must be at least 1");
}

EpochConfig EpochConfig::for_deadline(std::chrono::milliseconds deadline,
                                      std::chrono::milliseconds tick) {
  EpochConfig cfg;
  cfg.tick_interval = tick;
  auto ticks = (deadline.count() + tick.count() - 1) / tick.count();
  cfg.deadline_ticks = static_cast<std::uint64_t>(std::max<std::int64_t>(1, ticks));
  return cfg;
}

std::string_view to_string(InstanceState state) noexcept {
  switch (state) {
  case InstanceState::Ready: return "Ready";
  case InstanceState::Running: return "Running";
  case InstanceState::Finished: return "Finished";
  case InstanceState::Interrupted: return "Interrupted";
  case InstanceState::Failed: return "Failed";
  }
  return "Unknown";
}

bool is_terminal(InstanceState state) noexcept {
  return state == InstanceState::Finished ||
         state == InstanceState::Interrupted || state == InstanceState::Failed;
}

const std::vector<std::uint8_t> &InvokeResult::value() const {
  if (error)
    throw *error;
  return output;
}

// ---------------------------------------------------------------------------

struct FunctionInstance::Impl {
  std::shared_ptr<const detail::CompiledComponent> component;
  std::unique_ptr<wasmtime_store_t, StoreDeleter> store;
  wasmtime_component_func_t run{};
  std::string id;
  ContentHash module_hash;
  MonoClock::time_point request_start;
  MonoClock::time_point ready_at;
  bool cache_hit = false;
  Duration deadline{};

  std::atomic<InstanceState> state{InstanceState::Ready};
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> deadline_fired{false};
  std::atomic<std::int64_t> deadline_at_ns{0};

  mutable std::mutex history_mu;
  std::vector<InstanceState> history{InstanceState::Ready};
  std::string stdout_buf;

  void transition(InstanceState next) {
    std::lock_guard lock(history_mu);
    state.store(next);
    history.push_back(next);
  }

  void arm_deadline(MonoClock::time_point from) {
    deadline_at_ns.store((from + deadline).time_since_epoch().count());
  }

  static wasmtime_error_t *on_epoch(wasmtime_context_t *, void *data,
                                    std::uint64_t *delta,
                                    wasmtime_update_deadline_kind_t *kind) {
    auto *self = static_cast<Impl *>(data);
    auto now = MonoClock::now().time_since_epoch().count();
    if (self->stop_requested.load() || now >= self->deadline_at_ns.load()) {
      self->deadline_fired.store(true);
      return wasmtime_error_new("epoch deadline reached");
    }
    *delta = 1;
    *kind = WASMTIME_UPDATE_DEADLINE_CONTINUE;
    return nullptr;
  }

  static ptrdiff_t on_stdout(void *data, const unsigned char *buf, size_t len) {
    static_cast<Impl *>(data)->stdout_buf.append(reinterpret_cast<const char *>(buf), len);
    return static_cast<ptrdiff_t>(len);
  }
};

FunctionInstance::FunctionInstance(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
FunctionInstance::~FunctionInstance() = default;

const std::string &FunctionInstance::instance_id() const { return impl_->id; }
const ContentHash &FunctionInstance::module_hash() const { return impl_->module_hash; }
MonoClock::time_point FunctionInstance::ready_at() const { return impl_->ready_at; }
Duration FunctionInstance::cold_start() const { return impl_->ready_at - impl_->request_start; }
bool FunctionInstance::cache_hit() const { return impl_->cache_hit; }
InstanceState FunctionInstance::state() const { return impl_->state.load(); }
std::string FunctionInstance::captured_stdout() const { return impl_->stdout_buf; }

std::vector<InstanceState> FunctionInstance::history() const {
  std::lock_guard lock(impl_->history_mu);
  return impl_->history;
}

void FunctionInstance::interrupt() {
  if (impl_->state.load() != InstanceState::Running)
    throw Error(ErrorCode::NotRunning,
                fmt::format("instance {} is {}", impl_->id, to_string(impl_->state.load())));
  impl_->stop_requested.store(true);
  wasmtime_engine_increment_epoch(impl_->component->engine->engine);
}

InvokeResult FunctionInstance::invoke(std::span<const std::uint8_t> input) {
  Impl &s = *impl_;
  {
    std::lock_guard lock(s.history_mu);
    if (s.state.load() != InstanceState::Ready)
      throw Error(ErrorCode::InstanceReused,
                  fmt::format("instance {} is {}", s.id, to_string(s.state.load())));
    s.state.store(InstanceState::Running);
    s.history.push_back(InstanceState::Running);
  }

  wasmtime_component_val_t arg;
  arg.kind = WASMTIME_COMPONENT_LIST;
  wasmtime_component_vallist_new_uninit(&arg.of.list, input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    arg.of.list.data[i].kind = WASMTIME_COMPONENT_U8;
    arg.of.list.data[i].of.u8 = input[i];
  }
  wasmtime_component_val_t ret{};
  wasmtime_context_t *cx = wasmtime_store_context(s.store.get());

  const auto started = MonoClock::now();
  s.arm_deadline(started);
  wasmtime_error_t *err =
      wasmtime_component_func_call(&s.run, cx, &arg, 1, &ret, 1);
  const auto finished = MonoClock::now();
  wasmtime_component_val_delete(&arg);

  InvokeResult result;
  result.timing.cold_start = s.ready_at - s.request_start;
  result.timing.execution = finished - started;
  result.timing.total = finished - s.request_start;
  result.timing.cache_hit = s.cache_hit;

  if (err) {
    std::string msg = message_of(err);
    if (s.deadline_fired.load()) {
      result.status = InstanceState::Interrupted;
      result.error = Error(ErrorCode::Interrupted,
                           s.stop_requested.load() ? "stopped by request"
                                                   : "deadline exceeded");
    } else {
      result.status = InstanceState::Failed;
      result.error = Error(ErrorCode::GuestTrap, msg);
    }
  } else if (ret.kind != WASMTIME_COMPONENT_RESULT || !ret.of.result.val) {
    result.status = InstanceState::Failed;
    result.error = Error(ErrorCode::GuestTrap, "entrypoint returned an unexpected type");
  } else {
    const wasmtime_component_val_t &payload = *ret.of.result.val;
    if (ret.of.result.is_ok && payload.kind == WASMTIME_COMPONENT_LIST) {
      result.status = InstanceState::Finished;
      result.output.resize(payload.of.list.size);
      for (std::size_t i = 0; i < payload.of.list.size; ++i)
        result.output[i] = payload.of.list.data[i].of.u8;
    } else if (!ret.of.result.is_ok && payload.kind == WASMTIME_COMPONENT_STRING) {
      result.status = InstanceState::Failed;
      result.error = Error(ErrorCode::GuestError,
                           std::string(payload.of.string.data, payload.of.string.size));
    } else {
      result.status = InstanceState::Failed;
      result.error = Error(ErrorCode::GuestTrap, "entrypoint returned an unexpected type");
    }
  }
  if (!err)
    wasmtime_component_val_delete(&ret);

  s.transition(result.status);
  return result;
}

// ---------------------------------------------------------------------------

Executor::Executor(ExecutorOptions options) : engine_(std::make_shared<detail::EngineState>()) {
  if (options.tick_interval.count() <= 0)
    throw Error(ErrorCode::InvalidArgument, "tick_interval must be positive");

  wasm_config_t *config = wasm_config_new();
  wasmtime_config_epoch_interruption_set(config, true);
  engine_->engine = wasm_engine_new_with_config(config);
  if (!engine_->engine)
    throw Error(ErrorCode::EngineFailure, "failed to create engine");

  engine_->linker = wasmtime_component_linker_new(engine_->engine);
  if (auto *err = wasmtime_component_linker_add_wasip2(engine_->linker))
    throw Error(ErrorCode::EngineFailure, "linking WASI: " + message_of(err));

  engine_->fingerprint = EngineFingerprint{
      "wasmtime",
      WASMTIME_VERSION,
      fmt::format("{}-{}", kArch, kOs),
      {"component-model", "cranelift", "epoch-interruption", "wasi-p2"}};
  engine_->fingerprint.normalize();

  detail::EngineState *state = engine_.get();
  const auto tick = options.tick_interval;
  engine_->ticker = std::jthread([state, tick](std::stop_token stop) {
    std::unique_lock lock(state->tick_mu);
    while (!stop.stop_requested()) {
      state->tick_cv.wait_for(lock, stop, tick, [] { return false; });
      if (stop.stop_requested())
        break;
      wasmtime_engine_increment_epoch(state->engine);
    }
  });
}

Executor::~Executor() = default;

const EngineFingerprint &Executor::fingerprint() const { return engine_->fingerprint; }
std::uint64_t Executor::compile_count() const { return engine_->compiles.load(); }
std::uint64_t Executor::load_count() const { return engine_->loads.load(); }

namespace {

std::shared_ptr<detail::CompiledComponent>
wrap_component(const std::shared_ptr<detail::EngineState> &engine,
               wasmtime_component_t *raw) {
  auto compiled = std::make_shared<detail::CompiledComponent>();
  compiled->engine = engine;
  compiled->component.reset(raw);
  compiled->run_export.reset(wasmtime_component_get_export_index(
      raw, nullptr, kEntrypoint.data(), kEntrypoint.size()));
  return compiled;
}

} // namespace

ModuleHandle Executor::compile(std::span<const std::uint8_t> wasm) {
  auto check = check_wasm_binary(wasm);
  if (!check.ok)
    throw Error(ErrorCode::MalformedModule, check.reason);
  if (check.kind != BinaryKind::Component)
    throw Error(ErrorCode::MalformedModule,
                "expected a component, got a core module");

  wasmtime_component_t *raw = nullptr;
  if (auto *err = wasmtime_component_new(engine_->engine, wasm.data(), wasm.size(), &raw))
    throw Error(ErrorCode::MalformedModule, message_of(err));
  engine_->compiles.fetch_add(1);

  auto compiled = wrap_component(engine_, raw);
  if (!compiled->run_export)
    throw Error(ErrorCode::MissingExport,
                fmt::format("component does not export '{}'", kEntrypoint));
  ModuleHandle handle;
  handle.component_ = std::move(compiled);
  handle.source_hash_ = ContentHash::of(wasm);
  return handle;
}

CompiledArtifact Executor::serialize(const ModuleHandle &handle) const {
  wasm_byte_vec_t bytes;
  if (auto *err = wasmtime_component_serialize(handle.component_->component.get(), &bytes))
    throw Error(ErrorCode::EngineFailure, "serialize: " + message_of(err));
  CompiledArtifact artifact;
  artifact.source_hash = handle.source_hash_;
  artifact.fingerprint = engine_->fingerprint;
  artifact.blob.assign(reinterpret_cast<const std::uint8_t *>(bytes.data),
                       reinterpret_cast<const std::uint8_t *>(bytes.data) + bytes.size);
  artifact.created_at = std::chrono::system_clock::now();
  wasm_byte_vec_delete(&bytes);
  if (artifact.blob.empty())
    throw Error(ErrorCode::EngineFailure, "engine produced an empty artifact");
  return artifact;
}

CompiledArtifact Executor::compile_module(std::span<const std::uint8_t> wasm) {
  return serialize(compile(wasm));
}

ModuleHandle Executor::load_artifact(const CompiledArtifact &artifact) const {
  return load_artifact(artifact, engine_->fingerprint);
}

ModuleHandle Executor::load_artifact(const CompiledArtifact &artifact,
                                     const EngineFingerprint &current) const {
  if (!(artifact.fingerprint == current) || !(current == engine_->fingerprint))
    throw Error(ErrorCode::FingerprintMismatch,
                fmt::format("artifact built by [{}], engine is [{}]",
                            artifact.fingerprint.canonical_line(),
                            current.canonical_line()));
  if (artifact.blob.empty())
    throw Error(ErrorCode::CorruptArtifact, "artifact blob is empty");

  wasmtime_component_t *raw = nullptr;
  if (auto *err = wasmtime_component_deserialize(engine_->engine, artifact.blob.data(),
                                                 artifact.blob.size(), &raw))
    throw Error(ErrorCode::CorruptArtifact, message_of(err));
  engine_->loads.fetch_add(1);

  auto compiled = wrap_component(engine_, raw);
  if (!compiled->run_export)
    throw Error(ErrorCode::MissingExport,
                fmt::format("component does not export '{}'", kEntrypoint));
  ModuleHandle handle;
  handle.component_ = std::move(compiled);
  handle.source_hash_ = artifact.source_hash;
  return handle;
}

std::shared_ptr<FunctionInstance>
Executor::instantiate(const ModuleHandle &handle, const SandboxPolicy &policy,
                      const EpochConfig &epochs,
                      std::optional<MonoClock::time_point> request_start,
                      bool cache_hit) {
  const auto start = request_start.value_or(MonoClock::now());
  epochs.validate();
  if (!handle.component_)
    throw Error(ErrorCode::InvalidArgument, "empty module handle");

  std::error_code ec;
  if (!std::filesystem::is_directory(policy.preopen_dir, ec))
    throw Error(ErrorCode::SandboxError,
                fmt::format("preopen_dir '{}' is not a directory", policy.preopen_dir.string()));

  auto impl = std::make_unique<FunctionInstance::Impl>();
  impl->component = handle.component_;
  impl->module_hash = handle.source_hash_;
  impl->id = random_uuid();
  impl->request_start = start;
  impl->cache_hit = cache_hit;
  impl->deadline = epochs.deadline();

  std::unique_ptr<wasi_config_t, WasiConfigDeleter> wasi(wasi_config_new());
  const std::string dir = policy.preopen_dir.string();
  // Relative guest paths resolve against "/" in wasi-libc, so expose the
  // sandbox both as "/" and ".".
  if (!wasi_config_preopen_dir(wasi.get(), dir.c_str(), "/", policy.allow_writes) ||
      !wasi_config_preopen_dir(wasi.get(), dir.c_str(), ".", policy.allow_writes))
    throw Error(ErrorCode::SandboxError, fmt::format("cannot preopen '{}'", dir));

  if (!policy.stdin_bytes.empty()) {
    wasm_byte_vec_t in;
    wasm_byte_vec_new(&in, policy.stdin_bytes.size(),
                      reinterpret_cast<const wasm_byte_t *>(policy.stdin_bytes.data()));
    wasi_config_set_stdin_bytes(wasi.get(), &in);
  }
  if (policy.capture_stdout)
    wasi_config_set_stdout_custom(wasi.get(), &FunctionInstance::Impl::on_stdout,
                                  impl.get(), nullptr);
  if (!policy.env_vars.empty()) {
    std::vector<std::string> keys, values;
    for (const auto &kv : policy.env_vars) {
      auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw Error(ErrorCode::SandboxError, fmt::format("bad env entry '{}'", kv));
      keys.push_back(kv.substr(0, eq));
      values.push_back(kv.substr(eq + 1));
    }
    std::vector<const char *> kp, vp;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      kp.push_back(keys[i].c_str());
      vp.push_back(values[i].c_str());
    }
    wasi_config_set_env(wasi.get(), kp.size(), kp.data(), vp.data());
  }

  impl->store.reset(wasmtime_store_new(engine_->engine, nullptr, nullptr));
  wasmtime_context_t *cx = wasmtime_store_context(impl->store.get());
  if (auto *err = wasmtime_context_set_wasi(cx, wasi.release()))
    throw Error(ErrorCode::SandboxError, message_of(err));
  wasmtime_store_epoch_deadline_callback(impl->store.get(),
                                         &FunctionInstance::Impl::on_epoch,
                                         impl.get(), nullptr);
  wasmtime_context_set_epoch_deadline(cx, 1);
  impl->arm_deadline(start);

  wasmtime_component_instance_t instance;
  if (auto *err = wasmtime_component_linker_instantiate(
          engine_->linker, cx, handle.component_->component.get(), &instance))
    throw Error(impl->deadline_fired.load() ? ErrorCode::Interrupted : ErrorCode::LinkError,
                message_of(err));
  if (!wasmtime_component_instance_get_func(&instance, cx,
                                            handle.component_->run_export.get(),
                                            &impl->run))
    throw Error(ErrorCode::MissingExport,
                fmt::format("'{}' is not a function export", kEntrypoint));

  impl->ready_at = MonoClock::now();
  return std::shared_ptr<FunctionInstance>(new FunctionInstance(std::move(impl)));
}

ColdStart Executor::measure_cold_start(std::span<const std::uint8_t> wasm,
                                       const SandboxPolicy &policy,
                                       const EpochConfig &epochs,
                                       const CompiledArtifact *cache) {
  const auto start = MonoClock::now();
  std::optional<ModuleHandle> handle;
  bool hit = false;
  if (cache) {
    try {
      handle = load_artifact(*cache);
      hit = true;
    } catch (const Error &e) {
      if (e.code() != ErrorCode::FingerprintMismatch &&
          e.code() != ErrorCode::CorruptArtifact)
        throw;
    }
  }
  if (!handle)
    handle = compile(wasm);

  ColdStart out;
  out.instance = instantiate(*handle, policy, epochs, start, hit);
  out.cold_start = out.instance->cold_start();
  out.cache_hit = hit;
  return out;
}

} // namespace limes
