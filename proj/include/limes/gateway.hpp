#pragma once

#include "limes/executor.hpp"
#include "limes/registry.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace limes {

struct ServiceConfig {
  std::uint16_t listen_port = 7070;
  std::string bind_address = "0.0.0.0";
  std::size_t max_concurrent_invocations = 64;
  std::uint64_t default_deadline_ms = 30000;
  std::filesystem::path data_dir = "limes-data";
  std::size_t max_body_bytes = 64u << 20;
  std::size_t max_records = 10000;
  /// Whether guests may write inside their per-invocation sandbox.
  bool allow_writes = true;
  /// Files copied into every invocation's sandbox.
  std::vector<std::filesystem::path> seed_files;

  /// Defaults overridden by LIMES_PORT, LIMES_DATA_DIR, LIMES_MAX_CONCURRENCY.
  static ServiceConfig from_env();
  void validate() const;
};

enum class InvocationStatus { Pending, Running, Finished, Interrupted, Failed };
std::string_view to_string(InvocationStatus s) noexcept;

struct InvocationError {
  std::string code;
  std::string message;
};

struct InvocationRecord {
  std::string invocation_id;
  ContentHash module_id;
  std::vector<std::uint8_t> input;
  std::uint64_t deadline_ms = 0;
  InvocationStatus status = InvocationStatus::Pending;
  std::optional<TimingBreakdown> timing;
  std::optional<std::vector<std::uint8_t>> output;
  std::optional<InvocationError> error;
};

nlohmann::json to_json(const InvocationRecord &r);
nlohmann::json to_json(const TimingBreakdown &t);

/// Most recent invocations, oldest evicted first once the cap is reached.
class InvocationTable {
public:
  explicit InvocationTable(std::size_t capacity) : capacity_(capacity) {}

  void insert(InvocationRecord record);
  bool contains(const std::string &id) const;
  std::optional<InvocationRecord> get(const std::string &id) const;
  template <typename F> bool update(const std::string &id, F &&mutate) {
    std::unique_lock lock(mu_);
    auto it = records_.find(id);
    if (it == records_.end())
      return false;
    mutate(it->second);
    return true;
  }
  std::size_t size() const;

private:
  std::size_t capacity_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, InvocationRecord> records_;
  std::deque<std::string> order_;
};

/// Status code plus JSON body, independent of the HTTP library.
struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Runtime manager behind the REST API: admits requests, consults the
/// registry and drives the executor.
class Gateway {
public:
  Gateway(ServiceConfig config, Executor &executor);
  ~Gateway();
  Gateway(const Gateway &) = delete;
  Gateway &operator=(const Gateway &) = delete;

  Response handle_register(std::span<const std::uint8_t> body, std::string name);
  Response handle_initialize(std::string_view module_id);
  Response handle_invoke(std::string_view module_id, std::span<const std::uint8_t> input,
                         std::optional<std::uint64_t> deadline_ms,
                         std::optional<std::string> invocation_id = {});
  Response handle_stop(const std::string &invocation_id);
  Response handle_status(const std::string &invocation_id) const;
  Response handle_list_modules() const;
  Response handle_metrics() const;

  /// Binds and serves on a background thread. Returns the bound port, which
  /// differs from the configured one when that is 0.
  std::uint16_t start();
  /// Stops accepting, waits up to `drain` for in-flight invocations, then
  /// interrupts whatever is still running.
  void shutdown(std::chrono::milliseconds drain = std::chrono::seconds(5));

  std::size_t in_flight() const { return in_flight_.load(); }
  ModuleRegistry &registry() { return registry_; }
  const ServiceConfig &config() const { return config_; }

private:
  struct Live {
    std::shared_ptr<FunctionInstance> instance;
    bool stop_requested = false;
  };

  void bind_routes();
  bool try_admit();
  void interrupt_all();

  ServiceConfig config_;
  Executor &executor_;
  ModuleRegistry registry_;
  InvocationTable records_;

  std::atomic<std::size_t> in_flight_{0};
  std::atomic<bool> draining_{false};
  std::mutex live_mu_;
  std::unordered_map<std::string, Live> live_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

} // namespace limes
