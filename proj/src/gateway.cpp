#include "limes/gateway.hpp"

#include "limes/log.hpp"
#include "limes/sandbox.hpp"
#include "limes/uuid.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdlib>
#include <fmt/format.h>

namespace limes {

using json = nlohmann::json;

namespace {

std::optional<std::uint64_t> parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    return std::nullopt;
  return v;
}

Response error_response(int status, std::string_view code, std::string message) {
  return {status, json{{"error", {{"code", code}, {"message", std::move(message)}}}}};
}

Response error_response(int status, const Error &e) {
  return error_response(status, to_string(e.code()), e.what());
}

InvocationStatus status_from(InstanceState s) {
  switch (s) {
  case InstanceState::Ready: return InvocationStatus::Pending;
  case InstanceState::Running: return InvocationStatus::Running;
  case InstanceState::Finished: return InvocationStatus::Finished;
  case InstanceState::Interrupted: return InvocationStatus::Interrupted;
  case InstanceState::Failed: return InvocationStatus::Failed;
  }
  return InvocationStatus::Failed;
}

} // namespace

// ---------------------------------------------------------------------------

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig cfg;
  if (const char *port = std::getenv("LIMES_PORT"); port && *port) {
    auto v = parse_u64(port);
    if (!v || *v > 65535)
      throw Error(ErrorCode::InvalidArgument, fmt::format("bad LIMES_PORT '{}'", port));
    cfg.listen_port = static_cast<std::uint16_t>(*v);
  }
  cfg.data_dir = ModuleRegistry::default_data_dir();
  if (const char *n = std::getenv("LIMES_MAX_CONCURRENCY"); n && *n) {
    auto v = parse_u64(n);
    if (!v || *v == 0)
      throw Error(ErrorCode::InvalidArgument, fmt::format("bad LIMES_MAX_CONCURRENCY '{}'", n));
    cfg.max_concurrent_invocations = *v;
  }
  return cfg;
}

void ServiceConfig::validate() const {
  if (max_concurrent_invocations < 1)
    throw Error(ErrorCode::InvalidArgument, "max_concurrent_invocations must be at least 1");
  if (default_deadline_ms == 0)
    throw Error(ErrorCode::InvalidArgument, "default_deadline_ms must be positive");
  if (max_body_bytes == 0 || max_records == 0)
    throw Error(ErrorCode::InvalidArgument, "body and record caps must be positive");
}

std::string_view to_string(InvocationStatus s) noexcept {
  switch (s) {
  case InvocationStatus::Pending: return "Pending";
  case InvocationStatus::Running: return "Running";
  case InvocationStatus::Finished: return "Finished";
  case InvocationStatus::Interrupted: return "Interrupted";
  case InvocationStatus::Failed: return "Failed";
  }
  return "Unknown";
}

json to_json(const TimingBreakdown &t) {
  return json{{"cold_start_ms", to_ms(t.cold_start)},
              {"execution_ms", to_ms(t.execution)},
              {"total_ms", to_ms(t.total)},
              {"cache_hit", t.cache_hit}};
}

json to_json(const InvocationRecord &r) {
  json j{{"invocation_id", r.invocation_id},
         {"module_id", r.module_id.hex()},
         {"deadline_ms", r.deadline_ms},
         {"status", to_string(r.status)},
         {"input_base64", base64_encode(r.input)},
         {"timing", r.timing ? to_json(*r.timing) : json(nullptr)},
         {"output_base64", r.output ? json(base64_encode(*r.output)) : json(nullptr)},
         {"error", r.error ? json{{"code", r.error->code}, {"message", r.error->message}}
                           : json(nullptr)}};
  return j;
}

// ---------------------------------------------------------------------------

void InvocationTable::insert(InvocationRecord record) {
  std::unique_lock lock(mu_);
  const std::string id = record.invocation_id;
  if (records_.insert_or_assign(id, std::move(record)).second)
    order_.push_back(id);
  while (order_.size() > capacity_) {
    records_.erase(order_.front());
    order_.pop_front();
  }
}

bool InvocationTable::contains(const std::string &id) const {
  std::shared_lock lock(mu_);
  return records_.count(id) != 0;
}

std::optional<InvocationRecord> InvocationTable::get(const std::string &id) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(id);
  if (it == records_.end())
    return std::nullopt;
  return it->second;
}

std::size_t InvocationTable::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

// ---------------------------------------------------------------------------

Gateway::Gateway(ServiceConfig config, Executor &executor)
    : config_(std::move(config)), executor_(executor),
      registry_((config_.validate(), config_.data_dir), executor),
      records_(config_.max_records) {}

Gateway::~Gateway() { shutdown(std::chrono::milliseconds(0)); }

bool Gateway::try_admit() {
  auto current = in_flight_.load();
  while (current < config_.max_concurrent_invocations)
    if (in_flight_.compare_exchange_weak(current, current + 1))
      return true;
  return false;
}

Response Gateway::handle_register(std::span<const std::uint8_t> body, std::string name) {
  if (body.empty())
    return error_response(400, "MalformedModule", "request body is empty");
  if (body.size() > config_.max_body_bytes)
    return error_response(413, "PayloadTooLarge", "module exceeds the size cap");
  try {
    auto d = registry_.register_module(body, std::move(name));
    return {201, json(d)};
  } catch (const Error &e) {
    switch (e.code()) {
    case ErrorCode::MalformedModule:
    case ErrorCode::InvalidArgument: return error_response(400, e);
    default: return error_response(500, e);
    }
  }
}

Response Gateway::handle_initialize(std::string_view module_id) {
  auto id = ContentHash::from_hex(module_id);
  if (!id)
    return error_response(404, "UnknownModule", fmt::format("unknown module {}", module_id));
  try {
    return {200, json(registry_.initialize(*id))};
  } catch (const Error &e) {
    switch (e.code()) {
    case ErrorCode::UnknownModule: return error_response(404, e);
    case ErrorCode::CompileFailure: return error_response(422, e);
    default: return error_response(500, e);
    }
  }
}

Response Gateway::handle_invoke(std::string_view module_id, std::span<const std::uint8_t> input,
                                std::optional<std::uint64_t> deadline_ms,
                                std::optional<std::string> invocation_id) {
  const auto request_start = MonoClock::now();
  auto id = ContentHash::from_hex(module_id);
  if (!id || !registry_.find(*id))
    return error_response(404, "UnknownModule", fmt::format("unknown module {}", module_id));
  if (deadline_ms && *deadline_ms == 0)
    return error_response(400, "InvalidArgument", "deadline_ms must be positive");
  if (invocation_id) {
    if (!is_uuid(*invocation_id))
      return error_response(400, "InvalidArgument", "invocation_id must be a UUID");
    if (records_.contains(*invocation_id))
      return error_response(409, "InvalidArgument", "invocation_id already in use");
  }
  if (draining_.load())
    return error_response(503, "ShuttingDown", "the service is shutting down");
  if (!try_admit())
    return error_response(429, "TooManyInvocations",
                          fmt::format("{} invocations already in flight",
                                      config_.max_concurrent_invocations));

  struct Release {
    Gateway &g;
    std::string id;
    ~Release() {
      {
        std::lock_guard lock(g.live_mu_);
        g.live_.erase(id);
      }
      g.in_flight_.fetch_sub(1);
    }
  };

  InvocationRecord record;
  record.invocation_id = invocation_id.value_or(random_uuid());
  record.module_id = *id;
  record.input.assign(input.begin(), input.end());
  record.deadline_ms = deadline_ms.value_or(config_.default_deadline_ms);
  const std::string inv = record.invocation_id;
  const auto deadline = std::chrono::milliseconds(record.deadline_ms);
  records_.insert(std::move(record));
  {
    std::lock_guard lock(live_mu_);
    live_[inv];
  }
  Release release{*this, inv};

  auto fail = [&](int http, const Error &e) {
    records_.update(inv, [&](InvocationRecord &r) {
      r.status = InvocationStatus::Failed;
      r.error = InvocationError{std::string(to_string(e.code())), e.what()};
    });
    Response resp{http, to_json(*records_.get(inv))};
    return resp;
  };

  std::shared_ptr<FunctionInstance> instance;
  std::optional<SandboxDir> sandbox;
  try {
    sandbox.emplace(config_.seed_files);
    auto lookup = registry_.get_or_compile(*id);
    SandboxPolicy policy;
    policy.preopen_dir = sandbox->path();
    policy.allow_writes = config_.allow_writes;
    instance = executor_.instantiate(lookup.handle, policy, EpochConfig::for_deadline(deadline),
                                     request_start, lookup.cache_hit);
  } catch (const Error &e) {
    switch (e.code()) {
    case ErrorCode::UnknownModule: return fail(404, e);
    case ErrorCode::CompileFailure: return fail(422, e);
    case ErrorCode::LinkError:
    case ErrorCode::SandboxError: return fail(500, e);
    default: return fail(500, e);
    }
  }

  bool stop_early = false;
  {
    std::lock_guard lock(live_mu_);
    auto &live = live_[inv];
    live.instance = instance;
    stop_early = live.stop_requested;
  }

  if (stop_early) {
    TimingBreakdown t;
    t.cold_start = instance->cold_start();
    t.total = MonoClock::now() - request_start;
    t.cache_hit = instance->cache_hit();
    records_.update(inv, [&](InvocationRecord &r) {
      r.status = InvocationStatus::Interrupted;
      r.timing = t;
      r.error = InvocationError{"Interrupted", "stopped before execution"};
    });
    return {200, to_json(*records_.get(inv))};
  }

  records_.update(inv, [](InvocationRecord &r) { r.status = InvocationStatus::Running; });
  InvokeResult result = instance->invoke(input);
  records_.update(inv, [&](InvocationRecord &r) {
    r.status = status_from(result.status);
    if (result.status == InstanceState::Finished || result.status == InstanceState::Interrupted)
      r.timing = result.timing;
    if (result.error)
      r.error = InvocationError{std::string(to_string(result.error->code())), result.error->what()};
    else
      r.output = std::move(result.output);
  });
  return {200, to_json(*records_.get(inv))};
}

Response Gateway::handle_stop(const std::string &invocation_id) {
  if (!records_.contains(invocation_id))
    return error_response(404, "UnknownInvocation",
                          fmt::format("unknown invocation {}", invocation_id));
  std::shared_ptr<FunctionInstance> instance;
  {
    std::lock_guard lock(live_mu_);
    if (auto it = live_.find(invocation_id); it != live_.end()) {
      it->second.stop_requested = true;
      instance = it->second.instance;
    }
  }
  if (instance) {
    // The instance can sit in Ready for a moment before invoke() starts.
    const auto give_up = MonoClock::now() + std::chrono::seconds(1);
    while (true) {
      try {
        instance->interrupt();
        break;
      } catch (const Error &) {
        if (instance->state() != InstanceState::Ready || MonoClock::now() > give_up)
          break;
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    }
  }
  return {202, to_json(*records_.get(invocation_id))};
}

Response Gateway::handle_status(const std::string &invocation_id) const {
  auto r = records_.get(invocation_id);
  if (!r)
    return error_response(404, "UnknownInvocation",
                          fmt::format("unknown invocation {}", invocation_id));
  return {200, to_json(*r)};
}

Response Gateway::handle_list_modules() const {
  return {200, json(registry_.list_modules())};
}

Response Gateway::handle_metrics() const {
  return {200, json{{"compile_count", registry_.compile_count()},
                    {"hit_count", registry_.hit_count()},
                    {"in_flight", in_flight_.load()}}};
}

// ---------------------------------------------------------------------------

namespace {

void reply(httplib::Response &res, const Response &r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

// Bodies are read raw so that a form Content-Type (curl's default for
// --data-binary) is not parsed into parameters or capped at the form limit.
// Empty when the read failed; the library has then set the status (413 for
// an oversized body) and the error handler fills in the JSON.
std::optional<std::string> read_body(const httplib::ContentReader &reader) {
  std::string body;
  if (!reader([&](const char *data, std::size_t n) {
        body.append(data, n);
        return true;
      }))
    return std::nullopt;
  return body;
}

std::span<const std::uint8_t> bytes_of(const std::string &body) {
  return {reinterpret_cast<const std::uint8_t *>(body.data()), body.size()};
}

} // namespace

void Gateway::bind_routes() {
  auto &s = *server_;
  s.set_payload_max_length(config_.max_body_bytes);
  const std::size_t workers = config_.max_concurrent_invocations + 16;
  s.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };

  s.Post("/modules", [this](const httplib::Request &req, httplib::Response &res,
                            const httplib::ContentReader &reader) {
    const auto body = read_body(reader);
    if (!body)
      return;
    reply(res, handle_register(bytes_of(*body), req.get_param_value("name")));
  });
  s.Get("/modules", [this](const httplib::Request &, httplib::Response &res) {
    reply(res, handle_list_modules());
  });
  s.Post(R"(/modules/([^/]+)/init)", [this](const httplib::Request &req, httplib::Response &res) {
    reply(res, handle_initialize(req.matches[1].str()));
  });
  s.Post(R"(/modules/([^/]+)/invoke)", [this](const httplib::Request &req, httplib::Response &res,
                                              const httplib::ContentReader &reader) {
    const auto body = read_body(reader);
    if (!body)
      return;
    std::optional<std::uint64_t> deadline;
    if (req.has_param("deadline_ms")) {
      deadline = parse_u64(req.get_param_value("deadline_ms"));
      if (!deadline || *deadline == 0)
        return reply(res, error_response(400, "InvalidArgument", "deadline_ms must be a positive integer"));
    }
    std::optional<std::string> inv;
    if (req.has_param("invocation_id"))
      inv = req.get_param_value("invocation_id");
    reply(res, handle_invoke(req.matches[1].str(), bytes_of(*body), deadline, inv));
  });
  s.Get(R"(/invocations/([^/]+))", [this](const httplib::Request &req, httplib::Response &res) {
    reply(res, handle_status(req.matches[1].str()));
  });
  s.Post(R"(/invocations/([^/]+)/stop)", [this](const httplib::Request &req, httplib::Response &res) {
    reply(res, handle_stop(req.matches[1].str()));
  });
  s.Get("/metrics", [this](const httplib::Request &, httplib::Response &res) {
    reply(res, handle_metrics());
  });
  s.set_error_handler([](const httplib::Request &, httplib::Response &res) {
    if (res.body.empty()) {
      const char *code = res.status == 413 ? "PayloadTooLarge" : "NotFound";
      res.set_content(json{{"error", {{"code", code}, {"message", httplib::status_message(res.status)}}}}.dump(),
                      "application/json");
    }
  });
}

std::uint16_t Gateway::start() {
  if (server_)
    throw Error(ErrorCode::InvalidArgument, "gateway already started");
  server_ = std::make_unique<httplib::Server>();
  bind_routes();
  int port = config_.listen_port == 0
                 ? server_->bind_to_any_port(config_.bind_address)
                 : (server_->bind_to_port(config_.bind_address, config_.listen_port)
                        ? config_.listen_port
                        : -1);
  if (port < 0)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("cannot bind {}:{}", config_.bind_address, config_.listen_port));
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return static_cast<std::uint16_t>(port);
}

void Gateway::interrupt_all() {
  std::vector<std::shared_ptr<FunctionInstance>> running;
  {
    std::lock_guard lock(live_mu_);
    for (auto &[id, live] : live_) {
      live.stop_requested = true;
      if (live.instance)
        running.push_back(live.instance);
    }
  }
  for (auto &inst : running) {
    try {
      inst->interrupt();
    } catch (const Error &) {
    }
  }
}

void Gateway::shutdown(std::chrono::milliseconds drain) {
  if (!server_)
    return;
  draining_.store(true);
  const auto until = MonoClock::now() + drain;
  while (in_flight_.load() > 0 && MonoClock::now() < until)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  while (in_flight_.load() > 0) {
    interrupt_all();
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  server_->stop();
  if (server_thread_.joinable())
    server_thread_.join();
  server_.reset();
  registry_.flush();
}

} // namespace limes
