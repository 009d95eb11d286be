// limesd: the Limes REST gateway.
//
// Configuration comes from LIMES_PORT, LIMES_DATA_DIR and
// LIMES_MAX_CONCURRENCY; command-line flags override them. SIGINT or SIGTERM
// drains in-flight invocations for up to five seconds before exiting.

#include "limes/gateway.hpp"
#include "limes/log.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <pthread.h>

using namespace limes;

int main(int argc, char **argv) {
  ServiceConfig config;
  try {
    config = ServiceConfig::from_env();
  } catch (const Error &e) {
    fmt::print(stderr, "limesd: {}\n", e.what());
    return 2;
  }

  CLI::App app{"Limes serverless WebAssembly gateway"};
  std::vector<std::string> seeds;
  std::string data_dir = config.data_dir.string();
  app.add_option("--port", config.listen_port, "Listen port (0 picks a free one)")
      ->capture_default_str();
  app.add_option("--bind", config.bind_address, "Listen address")->capture_default_str();
  app.add_option("--data-dir", data_dir, "Registry directory")->capture_default_str();
  app.add_option("--max-concurrency", config.max_concurrent_invocations,
                 "Concurrent invocations before 429")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--deadline-ms", config.default_deadline_ms, "Default invocation deadline")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--seed-file", seeds, "File copied into every invocation sandbox")
      ->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);
  config.data_dir = data_dir;
  config.seed_files.assign(seeds.begin(), seeds.end());

  // Block the shutdown signals before any thread starts so that only the
  // sigwait below ever sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    Executor executor;
    Gateway gateway(config, executor);
    const auto port = gateway.start();
    fmt::print("limesd listening on {}:{} (data dir {})\n", config.bind_address, port,
               config.data_dir.string());
    std::fflush(stdout);

    int sig = 0;
    sigwait(&signals, &sig);
    log::info("received {}, draining", sig == SIGINT ? "SIGINT" : "SIGTERM");
    gateway.shutdown(std::chrono::seconds(5));
  } catch (const std::exception &e) {
    fmt::print(stderr, "limesd: {}\n", e.what());
    return 1;
  }
  return 0;
}
