#include "limes/bench.hpp"

#include "limes/artifact.hpp"
#include "limes/log.hpp"
#include "limes/sandbox.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>

namespace limes::bench {

namespace fs = std::filesystem;

std::string_view to_string(Mode m) noexcept {
  switch (m) {
  case Mode::ColdJit: return "cold-jit";
  case Mode::ColdCached: return "cold-cached";
  case Mode::Execution: return "execution";
  }
  return "unknown";
}

std::optional<Mode> parse_mode(std::string_view name) {
  for (auto m : kAllModes)
    if (to_string(m) == name)
      return m;
  return std::nullopt;
}

void BenchmarkPlan::validate() const {
  if (iterations == 0)
    throw Error(ErrorCode::InvalidArgument, "iterations must be at least 1");
}

std::string BenchmarkPlan::label() const {
  return fmt::format("{}_{}", workloads::to_string(workload), to_string(mode));
}

// ---------------------------------------------------------------------------

double EcdfTable::at(double x) const {
  auto it = std::upper_bound(points.begin(), points.end(), x,
                             [](double v, const EcdfPoint &pt) { return v < pt.x; });
  return it == points.begin() ? 0.0 : std::prev(it)->p;
}

EcdfTable compute_ecdf(std::span<const double> samples) {
  if (samples.empty())
    throw Error(ErrorCode::EmptySamples, "cannot build an ECDF from zero samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  EcdfTable table;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // Only the last of a run of equal values emits a point.
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i])
      continue;
    table.points.push_back({sorted[i], static_cast<double>(i + 1) / n});
  }
  table.points.back().p = 1.0;
  return table;
}

double nearest_rank(std::span<const double> sorted, double p) {
  if (sorted.empty())
    throw Error(ErrorCode::EmptySamples, "percentile of zero samples");
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

SummaryStats summarize(std::span<const double> samples) {
  if (samples.empty())
    throw Error(ErrorCode::EmptySamples, "cannot summarize zero samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());

  SummaryStats s;
  s.n = sorted.size();
  const double n = static_cast<double>(s.n);
  s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  s.p50_ms = nearest_rank(sorted, 0.50);
  s.p90_ms = nearest_rank(sorted, 0.90);
  s.p99_ms = nearest_rank(sorted, 0.99);
  s.min_ms = sorted.front();
  s.max_ms = sorted.back();
  if (s.n > 1) {
    double ss = 0;
    for (double v : samples)
      ss += (v - s.mean_ms) * (v - s.mean_ms);
    s.stddev_ms = std::sqrt(ss / (n - 1));
  }
  return s;
}

double quantize_ms(double ms) { return std::round(ms * 1000.0) / 1000.0; }

std::string host_info(const Executor &executor) {
  std::string cpu = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      auto colon = line.find(':');
      if (colon != std::string::npos)
        cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  std::string kernel = "unknown kernel";
  if (utsname u{}; uname(&u) == 0)
    kernel = fmt::format("{} {} {}", u.sysname, u.release, u.machine);
  return fmt::format("{}; {}; {}", kernel, cpu, executor.fingerprint().canonical_line());
}

// ---------------------------------------------------------------------------

BenchRunner::BenchRunner(Executor &executor, fs::path workload_dir)
    : executor_(executor), workload_dir_(std::move(workload_dir)) {}

void BenchRunner::set_payload(workloads::Workload w, std::vector<std::uint8_t> payload) {
  for (auto &[key, value] : payloads_)
    if (key == w) {
      value = std::move(payload);
      return;
    }
  payloads_.emplace_back(w, std::move(payload));
}

BenchRunner::Inputs BenchRunner::inputs_for(workloads::Workload w) const {
  Inputs in;
  in.wasm = workloads::read_component(workload_dir_, w);
  in.seeds = workloads::seed_files(workload_dir_, w);
  in.payload = workloads::default_payload(w);
  for (const auto &[key, value] : payloads_)
    if (key == w)
      in.payload = value;
  return in;
}

LatencySamples BenchRunner::start(const BenchmarkPlan &plan) const {
  plan.validate();
  LatencySamples out;
  out.plan = plan;
  out.recorded_at = std::chrono::system_clock::now();
  out.host_info = host_info(executor_);
  out.values_ms.reserve(plan.iterations);
  return out;
}

LatencySamples BenchRunner::run(const BenchmarkPlan &plan) {
  return is_cold(plan.mode) ? run_cold_start_bench(plan) : run_execution_bench(plan);
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::StorageFailure, fmt::format("cannot read {}", path.string()));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void abort_run(LatencySamples &out, const std::exception &e) {
  out.aborted = true;
  out.abort_reason = e.what();
  log::warn("{} aborted after {} samples: {}", out.plan.label(), out.values_ms.size(),
            e.what());
}

} // namespace

struct BenchRunner::Sampler {
  Mode mode = Mode::ColdJit;
  Inputs in;
  ContentHash source;
  std::optional<SandboxDir> cache_dir; // cold-cached: holds the artifact file
  fs::path artifact_file;
  std::optional<ModuleHandle> handle; // execution: compiled once up front
};

std::unique_ptr<BenchRunner::Sampler> BenchRunner::prepare(const BenchmarkPlan &plan) {
  auto s = std::make_unique<Sampler>();
  s->mode = plan.mode;
  s->in = inputs_for(plan.workload);
  s->source = ContentHash::of(s->in.wasm);

  if (plan.mode == Mode::ColdCached) {
    // cold-cached reads the artifact back from disk on every iteration.
    s->cache_dir.emplace();
    s->artifact_file =
        s->cache_dir->path() / (s->source.hex() + std::string(container::kExtension));
    std::ofstream f(s->artifact_file, std::ios::binary);
    auto bytes = container::encode(executor_.compile_module(s->in.wasm));
    f.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f.flush())
      throw Error(ErrorCode::StorageFailure, "cannot write the cached artifact");
  } else if (plan.mode == Mode::Execution) {
    s->handle = executor_.compile(s->in.wasm);
  }
  return s;
}

double BenchRunner::sample(Sampler &s) {
  const EpochConfig epochs;
  SandboxDir sandbox(s.in.seeds);
  SandboxPolicy policy;
  policy.preopen_dir = sandbox.path();
  policy.allow_writes = true;

  switch (s.mode) {
  case Mode::ColdJit:
    return quantize_ms(to_ms(executor_.measure_cold_start(s.in.wasm, policy, epochs).cold_start));
  case Mode::ColdCached: {
    const auto t0 = MonoClock::now();
    auto artifact = container::decode(read_file(s.artifact_file), s.source,
                                      std::chrono::system_clock::now());
    auto handle = executor_.load_artifact(artifact);
    return quantize_ms(to_ms(executor_.instantiate(handle, policy, epochs, t0, true)->cold_start()));
  }
  case Mode::Execution: {
    auto instance = executor_.instantiate(*s.handle, policy, epochs);
    auto result = instance->invoke(s.in.payload);
    if (result.error)
      throw *result.error;
    return quantize_ms(to_ms(result.timing.execution));
  }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown bench mode");
}

LatencySamples BenchRunner::run_plan(const BenchmarkPlan &plan) {
  LatencySamples out = start(plan);
  try {
    auto s = prepare(plan);
    for (std::uint64_t i = 0; i < plan.warmup_iterations; ++i)
      out.warmup_ms.push_back(sample(*s));
    const auto compiles_before = executor_.compile_count();
    for (std::uint64_t i = 0; i < plan.iterations; ++i)
      out.values_ms.push_back(sample(*s));
    out.compiles = executor_.compile_count() - compiles_before;
  } catch (const std::exception &e) {
    abort_run(out, e);
  }
  return out;
}

LatencySamples BenchRunner::run_cold_start_bench(const BenchmarkPlan &plan) {
  if (!is_cold(plan.mode))
    throw Error(ErrorCode::InvalidArgument, "cold-start bench needs a cold mode");
  return run_plan(plan);
}

LatencySamples BenchRunner::run_execution_bench(const BenchmarkPlan &plan) {
  if (plan.mode != Mode::Execution)
    throw Error(ErrorCode::InvalidArgument, "execution bench needs execution mode");
  return run_plan(plan);
}

std::pair<LatencySamples, LatencySamples> BenchRunner::run_paired(const BenchmarkPlan &a,
                                                                  const BenchmarkPlan &b) {
  std::pair<LatencySamples, LatencySamples> out{start(a), start(b)};
  auto &[oa, ob] = out;
  try {
    auto sa = prepare(a);
    auto sb = prepare(b);
    auto step = [&](Sampler &s, LatencySamples &o, std::uint64_t i, bool warm) {
      if (warm) {
        if (i < o.plan.warmup_iterations)
          o.warmup_ms.push_back(sample(s));
        return;
      }
      if (i >= o.plan.iterations)
        return;
      const auto before = executor_.compile_count();
      o.values_ms.push_back(sample(s));
      o.compiles += executor_.compile_count() - before;
    };
    // A B B A A B ... so neither side always runs first.
    for (bool warm : {true, false}) {
      const auto n = warm ? std::max(a.warmup_iterations, b.warmup_iterations)
                          : std::max(a.iterations, b.iterations);
      for (std::uint64_t i = 0; i < n; ++i) {
        if (i % 2 == 0) {
          step(*sa, oa, i, warm);
          step(*sb, ob, i, warm);
        } else {
          step(*sb, ob, i, warm);
          step(*sa, oa, i, warm);
        }
      }
    }
  } catch (const std::exception &e) {
    abort_run(oa, e);
    abort_run(ob, e);
  }
  return out;
}

} // namespace limes::bench
