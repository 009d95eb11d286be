#pragma once

#include "limes/clock.hpp"
#include "limes/executor.hpp"
#include "limes/workloads.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace limes::bench {

enum class Mode { ColdJit, ColdCached, Execution };

inline constexpr Mode kAllModes[] = {Mode::ColdJit, Mode::ColdCached, Mode::Execution};

std::string_view to_string(Mode m) noexcept;
std::optional<Mode> parse_mode(std::string_view name);
inline bool is_cold(Mode m) { return m != Mode::Execution; }

struct BenchmarkPlan {
  workloads::Workload workload = workloads::Workload::Noop;
  std::uint64_t iterations = 1000;
  Mode mode = Mode::ColdJit;
  std::uint64_t warmup_iterations = 10;
  std::filesystem::path output_dir = "bench-out";

  /// Throws Error{InvalidArgument} when iterations is zero.
  void validate() const;
  /// "<workload>_<mode>", used in report file names.
  std::string label() const;
};

struct LatencySamples {
  BenchmarkPlan plan;
  std::vector<double> values_ms;
  std::vector<double> warmup_ms;
  UtcTime recorded_at{};
  std::string host_info;
  bool aborted = false;
  std::string abort_reason;
  /// Compilations performed during the measured iterations only.
  std::uint64_t compiles = 0;
};

struct EcdfPoint {
  double x = 0;
  double p = 0;
};

struct EcdfTable {
  std::vector<EcdfPoint> points;

  /// Cumulative probability at `x` (a step function, 0 below the first point).
  double at(double x) const;
};

/// Throws Error{EmptySamples}.
EcdfTable compute_ecdf(std::span<const double> samples);

struct SummaryStats {
  std::size_t n = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p90_ms = 0;
  double p99_ms = 0;
  double min_ms = 0;
  double max_ms = 0;
  double stddev_ms = 0;
};

/// Nearest-rank percentiles, sample standard deviation. Throws
/// Error{EmptySamples}.
SummaryStats summarize(std::span<const double> samples);

/// The ceil(p*n)-th smallest value of `sorted` (1-based, clamped to [1, n]).
double nearest_rank(std::span<const double> sorted, double p);

/// Rounds to whole microseconds so report files reproduce samples exactly.
double quantize_ms(double ms);

/// Kernel, CPU model and engine fingerprint of the current machine.
std::string host_info(const Executor &executor);

/// Runs plans strictly one after another against a shared engine.
class BenchRunner {
public:
  BenchRunner(Executor &executor, std::filesystem::path workload_dir);

  /// Dispatches on plan.mode. Executor failures end the run early with
  /// `aborted` set; the samples gathered so far are kept.
  LatencySamples run(const BenchmarkPlan &plan);

  LatencySamples run_cold_start_bench(const BenchmarkPlan &plan);
  LatencySamples run_execution_bench(const BenchmarkPlan &plan);

  /// Runs two plans with their iterations alternated one by one, so drift in
  /// machine load lands on both sides alike. A failure aborts both.
  std::pair<LatencySamples, LatencySamples> run_paired(const BenchmarkPlan &a,
                                                       const BenchmarkPlan &b);

  /// Input payload used for a workload; defaults to default_payload().
  void set_payload(workloads::Workload w, std::vector<std::uint8_t> payload);

private:
  struct Inputs {
    std::vector<std::uint8_t> wasm;
    std::vector<std::filesystem::path> seeds;
    std::vector<std::uint8_t> payload;
  };
  Inputs inputs_for(workloads::Workload w) const;
  LatencySamples start(const BenchmarkPlan &plan) const;

  struct Sampler;
  std::unique_ptr<Sampler> prepare(const BenchmarkPlan &plan);
  double sample(Sampler &s);
  LatencySamples run_plan(const BenchmarkPlan &plan);

  Executor &executor_;
  std::filesystem::path workload_dir_;
  std::vector<std::pair<workloads::Workload, std::vector<std::uint8_t>>> payloads_;
};

} // namespace limes::bench
