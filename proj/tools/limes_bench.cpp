// limes-bench: cold-start and execution latency sampling for the bundled
// workloads, with CSV and SVG reports.

#include "limes/bench.hpp"
#include "limes/report.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <optional>
#include <random>

using namespace limes;

int main(int argc, char **argv) {
  CLI::App app{"Cold-start and execution latency benchmarks for Limes workloads"};

  std::string workload_name;
  std::string mode_name = "cold-jit";
  std::uint64_t iterations = 1000;
  std::uint64_t warmup = 10;
  std::string out_dir = "bench-out";
  std::optional<std::uint64_t> seed;
  bool all = false;
  std::optional<std::string> workload_path;

  app.add_option("--workload", workload_name,
                 "noop, mandelbrot, mandelbrot-io, image or image-io");
  app.add_option("--mode", mode_name, "cold-jit, cold-cached or execution")
      ->capture_default_str();
  app.add_option("--iterations", iterations, "Measured iterations per plan")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--warmup", warmup, "Discarded iterations before measuring")
      ->capture_default_str();
  app.add_option("--out", out_dir, "Report directory")->capture_default_str();
  app.add_option("--seed", seed, "Shuffle the plan order with this seed");
  app.add_flag("--all", all, "Run every workload in every mode");
  app.add_option("--workload-path", workload_path, "Directory holding the .wasm components");
  CLI11_PARSE(app, argc, argv);

  std::vector<bench::BenchmarkPlan> plans;
  auto make_plan = [&](workloads::Workload w, bench::Mode m) {
    bench::BenchmarkPlan p;
    p.workload = w;
    p.mode = m;
    p.iterations = iterations;
    p.warmup_iterations = warmup;
    p.output_dir = out_dir;
    return p;
  };

  if (all) {
    for (auto w : workloads::kAllWorkloads)
      for (auto m : bench::kAllModes)
        plans.push_back(make_plan(w, m));
  } else {
    auto w = workloads::parse_workload(workload_name);
    if (!w) {
      fmt::print(stderr, "unknown or missing --workload '{}'\n", workload_name);
      return 2;
    }
    auto m = bench::parse_mode(mode_name);
    if (!m) {
      fmt::print(stderr, "unknown --mode '{}'\n", mode_name);
      return 2;
    }
    plans.push_back(make_plan(*w, *m));
  }
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(plans.begin(), plans.end(), rng);
  }

  try {
    Executor executor;
    const auto dir = workloads::resolve_workload_dir(
        workload_path ? std::optional<std::filesystem::path>(*workload_path) : std::nullopt);
    bench::BenchRunner runner(executor, dir);
    fmt::print("host: {}\nworkloads: {}\n", bench::host_info(executor), dir.string());

    std::vector<bench::LatencySamples> results;
    bool complete = true;
    for (const auto &plan : plans) {
      fmt::print("{:<26} ", plan.label());
      std::fflush(stdout);
      auto samples = runner.run(plan);
      if (samples.aborted || samples.values_ms.size() != plan.iterations) {
        complete = false;
        fmt::print("ABORTED after {} samples: {}\n", samples.values_ms.size(),
                   samples.abort_reason);
      } else {
        auto s = bench::summarize(samples.values_ms);
        fmt::print("n={} mean={} p50={} p99={} ms\n", s.n, report::format_ms(s.mean_ms),
                   report::format_ms(s.p50_ms), report::format_ms(s.p99_ms));
      }
      results.push_back(std::move(samples));
    }

    // Reports are written by workload then mode regardless of run order.
    std::stable_sort(results.begin(), results.end(), [](const auto &a, const auto &b) {
      return std::pair(a.plan.workload, a.plan.mode) < std::pair(b.plan.workload, b.plan.mode);
    });
    auto files = report::emit_reports(results, out_dir);
    fmt::print("wrote {} files to {}\n", files.size(), out_dir);
    return complete ? 0 : 1;
  } catch (const std::exception &e) {
    fmt::print(stderr, "limes-bench: {}\n", e.what());
    return 1;
  }
}
