// End-to-end acceptance checks. Prints one PASS/FAIL line per check and
// exits non-zero if any of them failed.
//
//   limes_acceptance --bench build/limes-bench [--only 4,7] [--seed N]
//
// The crash-consistency check re-executes this binary with --crash-child so
// that the registry can be killed outright in the middle of a write.

#include "limes/artifact.hpp"
#include "limes/bench.hpp"
#include "limes/gateway.hpp"
#include "limes/registry.hpp"
#include "limes/report.hpp"
#include "limes/sandbox.hpp"
#include "limes/uuid.hpp"
#include "limes/workloads.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <csignal>
#include <fstream>
#include <functional>
#include <set>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char **environ;

using namespace limes;
using namespace limes::bench;
using json = nlohmann::json;
namespace fs = std::filesystem;
using workloads::Workload;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path bench_binary;
  fs::path self;
  std::uint64_t seed = 0;
  Executor *executor = nullptr;
};

double median_of(const LatencySamples &s) {
  if (s.aborted)
    throw std::runtime_error(fmt::format("{} aborted: {}", s.plan.label(), s.abort_reason));
  return summarize(s.values_ms).p50_ms;
}

BenchmarkPlan make_plan(Workload w, Mode m, std::uint64_t n, std::uint64_t warmup) {
  BenchmarkPlan p;
  p.workload = w;
  p.mode = m;
  p.iterations = n;
  p.warmup_iterations = warmup;
  return p;
}

// 1 ---------------------------------------------------------------------------

Outcome cold_start_ordering(Context &ctx) {
  BenchRunner runner(*ctx.executor, testkit::workload_dir());
  double med[3];
  const Workload ws[3] = {Workload::Noop, Workload::Mandelbrot, Workload::Image};
  for (int i = 0; i < 3; ++i)
    med[i] = median_of(runner.run(make_plan(ws[i], Mode::ColdJit, 200, 5)));
  return {med[0] < med[1] && med[1] < med[2],
          fmt::format("median cold-jit noop {:.3f} ms < mandelbrot {:.3f} ms < image {:.3f} ms",
                      med[0], med[1], med[2])};
}

// 2 ---------------------------------------------------------------------------

Outcome cache_effectiveness(Context &ctx) {
  BenchRunner runner(*ctx.executor, testkit::workload_dir());
  auto [jit, cached] = runner.run_paired(make_plan(Workload::Image, Mode::ColdJit, 200, 3),
                                         make_plan(Workload::Image, Mode::ColdCached, 200, 3));
  const double mj = median_of(jit), mc = median_of(cached);
  return {jit.values_ms.size() == 200 && cached.values_ms.size() == 200 && mc < 0.5 * mj,
          fmt::format("image median cold-cached {:.3f} ms vs cold-jit {:.3f} ms (ratio {:.4f})",
                      mc, mj, mc / mj)};
}

// 3 ---------------------------------------------------------------------------

Outcome io_overhead(Context &ctx) {
  BenchRunner runner(*ctx.executor, testkit::workload_dir());
  // A smaller grid than the default keeps 400 executions inside the budget.
  workloads::MandelbrotParams p;
  p.width = 240;
  p.height = 180;
  runner.set_payload(Workload::Mandelbrot, testkit::to_bytes(p.to_json()));
  p.io_enabled = true;
  runner.set_payload(Workload::MandelbrotIo, testkit::to_bytes(p.to_json()));

  auto [m, mio] = runner.run_paired(make_plan(Workload::Mandelbrot, Mode::Execution, 200, 3),
                                    make_plan(Workload::MandelbrotIo, Mode::Execution, 200, 3));
  auto [im, imio] = runner.run_paired(make_plan(Workload::Image, Mode::Execution, 200, 3),
                                      make_plan(Workload::ImageIo, Mode::Execution, 200, 3));
  const double a = median_of(m), b = median_of(mio), c = median_of(im), d = median_of(imio);
  return {b >= a && d >= c,
          fmt::format("mandelbrot {:.3f} ms <= mandelbrot-io {:.3f} ms; image {:.3f} ms <= "
                      "image-io {:.3f} ms",
                      a, b, c, d)};
}

// 4 ---------------------------------------------------------------------------

Outcome interruption_bound(Context &ctx) {
  SandboxDir root;
  ServiceConfig config;
  config.data_dir = root.path() / "data";
  Gateway gateway(config, *ctx.executor);
  const auto id =
      gateway.handle_register(testkit::component("spin.wasm"), "spin").body.at("module_id")
          .get<std::string>();
  if (gateway.handle_initialize(id).status != 200)
    return {false, "initialize failed"};

  int interrupted = 0, finished = 0, other = 0;
  double worst_ms = 0;
  for (int i = 0; i < 100; ++i) {
    const auto t0 = MonoClock::now();
    auto res = gateway.handle_invoke(id, {}, 50);
    const double wall = to_ms(MonoClock::now() - t0);
    worst_ms = std::max(worst_ms, wall);
    const auto status = res.body.value("status", "");
    if (status == "Interrupted" && wall < 250.0)
      ++interrupted;
    else if (status == "Finished")
      ++finished;
    else
      ++other;
  }
  return {interrupted == 100 && finished == 0,
          fmt::format("{} of 100 interrupted within 250 ms, {} finished, {} other, worst {:.3f} ms",
                      interrupted, finished, other, worst_ms)};
}

// 5 ---------------------------------------------------------------------------

Outcome oracle_equivalence(Context &ctx) {
  auto mandelbrot = ctx.executor->compile(testkit::component("mandelbrot.wasm"));
  auto image = ctx.executor->compile(testkit::component("image.wasm"));
  auto run = [&](const ModuleHandle &h, const SandboxDir &dir, const std::string &payload) {
    SandboxPolicy policy;
    policy.preopen_dir = dir.path();
    auto r = ctx.executor->instantiate(h, policy, {})->invoke(testkit::to_bytes(payload));
    if (r.error)
      throw *r.error;
    return r.output;
  };

  workloads::MandelbrotParams p;
  p.width = p.height = 16;
  SandboxDir mdir;
  const bool grid_ok = workloads::decode_grid(run(mandelbrot, mdir, p.to_json())) ==
                       testkit::mandelbrot_oracle(p);

  std::mt19937_64 rng(ctx.seed ^ 0x5eed);
  int matched = 0, total = 0;
  for (int i = 0; i < 20; ++i) {
    auto img = testkit::random_image(rng, 8, i % 2 == 1);
    SandboxDir dir;
    {
      auto png = testkit::png_encode(img);
      std::ofstream(dir.path() / "in.png", std::ios::binary)
          .write(reinterpret_cast<const char *>(png.data()),
                 static_cast<std::streamsize>(png.size()));
    }
    for (auto f : {workloads::Filter::Grayscale, workloads::Filter::Invert,
                   workloads::Filter::Blur3x3}) {
      workloads::ImageJob job;
      job.input_path = "in.png";
      job.filters = {f};
      const std::vector<workloads::Filter> chain{f};
      ++total;
      if (testkit::png_decode(run(image, dir, job.to_json())) ==
          testkit::apply_oracle(img, chain))
        ++matched;
    }
  }
  return {grid_ok && matched == total,
          fmt::format("mandelbrot 16x16 grid {}; {}/{} filter outputs identical",
                      grid_ok ? "identical" : "DIFFERS", matched, total)};
}

// 6 ---------------------------------------------------------------------------

Outcome stats_correctness(Context &ctx) {
  std::mt19937_64 rng(ctx.seed ^ 0xecdf);
  std::uniform_int_distribution<std::size_t> size(1, 1000);
  int good = 0;
  double worst_rel = 0;
  for (int set = 0; set < 100; ++set) {
    auto samples = testkit::random_samples(rng, size(rng));
    auto table = compute_ecdf(samples);
    bool ok = !table.points.empty() && table.points.back().p == 1.0;
    std::set<double> distinct(samples.begin(), samples.end());
    ok = ok && distinct.size() == table.points.size();
    for (const auto &pt : table.points)
      ok = ok && distinct.count(pt.x) && pt.p == testkit::brute_force_cdf(samples, pt.x);

    auto st = summarize(samples);
    const double mean = testkit::brute_force_mean(samples);
    const double sd = testkit::brute_force_stddev(samples);
    const double rel_mean = std::abs(st.mean_ms - mean) / std::max(std::abs(mean), 1e-300);
    const double rel_sd = sd == 0 ? std::abs(st.stddev_ms) : std::abs(st.stddev_ms - sd) / sd;
    worst_rel = std::max({worst_rel, rel_mean, rel_sd});
    ok = ok && rel_mean <= 1e-9 && rel_sd <= 1e-9;
    good += ok;
  }
  return {good == 100, fmt::format("{}/100 sample sets agree, worst relative error {:.3g}", good,
                                   worst_rel)};
}

// 7 ---------------------------------------------------------------------------

struct HttpService {
  SandboxDir root;
  std::unique_ptr<Gateway> gateway;
  std::uint16_t port = 0;

  explicit HttpService(Executor &executor) {
    ServiceConfig config;
    config.bind_address = "127.0.0.1";
    config.listen_port = 0;
    config.data_dir = root.path() / "data";
    gateway = std::make_unique<Gateway>(config, executor);
    port = gateway->start();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
  json post(const std::string &path, const std::string &body, int expect) const {
    auto res = client().Post(path, body, "application/octet-stream");
    if (!res)
      throw std::runtime_error("POST " + path + ": no response");
    if (res->status != expect)
      throw std::runtime_error(fmt::format("POST {}: status {} {}", path, res->status, res->body));
    return json::parse(res->body);
  }
  json get(const std::string &path) const {
    auto res = client().Get(path);
    if (!res || res->status != 200)
      throw std::runtime_error("GET " + path + " failed");
    return json::parse(res->body);
  }
};

Outcome api_lifecycle(Context &ctx) {
  const auto noop = testkit::component("noop.wasm");
  const std::string body(noop.begin(), noop.end());
  std::vector<std::string> problems;
  auto expect = [&](bool cond, std::string what) {
    if (!cond)
      problems.push_back(std::move(what));
  };

  {
    HttpService svc(*ctx.executor);
    const auto id = svc.post("/modules?name=noop", body, 201).at("module_id").get<std::string>();
    auto init = svc.post("/modules/" + id + "/init", "", 200);
    expect(init.value("state", "") == "Initialized", "init did not mark the module Initialized");

    std::mt19937_64 rng(ctx.seed);
    std::string input(257, '\0');
    for (auto &ch : input)
      ch = static_cast<char>(rng() & 0xff);
    const auto inv = random_uuid();
    auto record = svc.post(fmt::format("/modules/{}/invoke?invocation_id={}", id, inv), input, 200);
    expect(record.value("status", "") == "Finished", "invoke did not finish");
    expect(base64_decode(record.value("output_base64", "")) == input, "output differs from input");
    const auto &t = record.at("timing");
    expect(t.at("cold_start_ms").get<double>() > 0, "cold_start_ms not populated");
    expect(t.at("execution_ms").get<double>() >= 0, "execution_ms not populated");
    expect(t.at("total_ms").get<double>() >= t.at("execution_ms").get<double>(),
           "total_ms smaller than execution_ms");
    expect(t.at("cache_hit").get<bool>(), "invoke after init was not a cache hit");

    auto status = svc.get("/invocations/" + inv);
    expect(status == record, "status record differs from the invoke response");
    auto stopped = svc.post("/invocations/" + inv + "/stop", "", 202);
    expect(stopped.value("status", "") == "Finished", "stop changed a finished record");
  }

  json metrics;
  {
    HttpService svc(*ctx.executor);
    const auto id = svc.post("/modules?name=noop", body, 201).at("module_id").get<std::string>();
    auto cold = svc.post("/modules/" + id + "/invoke", "ping", 200);
    auto warm = svc.post("/modules/" + id + "/invoke", "ping", 200);
    expect(!cold.at("timing").at("cache_hit").get<bool>(), "first invoke was a cache hit");
    expect(warm.at("timing").at("cache_hit").get<bool>(), "second invoke was not a cache hit");
    metrics = svc.get("/metrics");
    expect(metrics.value("compile_count", -1) == 1, "compile_count != 1");
    expect(metrics.value("hit_count", -1) == 1, "hit_count != 1");
  }

  std::string detail = problems.empty() ? fmt::format("round-trip intact, metrics {}", metrics.dump())
                                        : fmt::format("{}", fmt::join(problems, "; "));
  return {problems.empty(), detail};
}

// 8 ---------------------------------------------------------------------------

const std::vector<std::string> kKillPoints = {
    "artifact-temp-partial", "artifact-temp-written", "artifact-renamed",
    "index-temp-partial",    "index-temp-written",    "index-renamed"};

int crash_child(const fs::path &data_dir, const std::string &module_hex,
                const std::string &kill_at) {
  Executor executor;
  ModuleRegistry reg(data_dir, executor);
  reg.set_fault_hook([&](std::string_view point) {
    if (point == kill_at)
      ::raise(SIGKILL);
  });
  reg.initialize(*ContentHash::from_hex(module_hex));
  return 0;
}

int spawn_and_wait(const std::vector<std::string> &argv) {
  std::vector<char *> args;
  for (const auto &a : argv)
    args.push_back(const_cast<char *>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = 0;
  if (int rc = posix_spawn(&pid, args[0], nullptr, nullptr, args.data(), environ); rc != 0)
    throw std::runtime_error(fmt::format("cannot start {}: {}", argv[0], std::strerror(rc)));
  int status = 0;
  while (waitpid(pid, &status, 0) < 0)
    if (errno != EINTR)
      throw std::runtime_error("waitpid failed");
  return status;
}

/// Everything index.json points at must decode and load on this engine.
std::vector<std::string> dangling_references(const fs::path &data_dir, Executor &executor) {
  std::vector<std::string> bad;
  std::ifstream in(data_dir / "index.json");
  if (!in)
    return bad; // nothing committed yet
  auto doc = json::parse(in);
  for (const auto &e : doc.at("entries")) {
    if (e.at("artifact_path").is_null())
      continue;
    const fs::path path = data_dir / e.at("artifact_path").get<std::string>();
    try {
      auto bytes = testkit::read_file(path);
      auto artifact = container::decode(bytes, *ContentHash::from_hex(e.at("module_id").get<std::string>()),
                                        std::chrono::system_clock::now());
      executor.load_artifact(artifact);
    } catch (const std::exception &ex) {
      bad.push_back(fmt::format("{}: {}", path.filename().string(), ex.what()));
    }
  }
  return bad;
}

Outcome crash_consistency(Context &ctx) {
  std::mt19937_64 rng(ctx.seed ^ 0xdead);
  const std::vector<std::string> files = {"noop.wasm", "mandelbrot.wasm", "image.wasm"};
  std::vector<std::vector<std::uint8_t>> modules;
  for (const auto &f : files)
    modules.push_back(testkit::component(f));

  int consistent = 0, killed = 0;
  std::vector<std::string> failures;
  for (int trial = 0; trial < 20; ++trial) {
    SandboxDir root;
    const fs::path data = root.path() / "data";
    std::vector<ContentHash> ids;
    {
      ModuleRegistry reg(data, *ctx.executor);
      for (std::size_t i = 0; i < modules.size(); ++i)
        ids.push_back(reg.register_module(modules[i], files[i]).module_id);
      // Sometimes another module is already initialized before the crash.
      if (rng() % 2)
        reg.initialize(ids[rng() % ids.size()]);
    }
    const auto target = ids[rng() % ids.size()];
    const auto point = kKillPoints[rng() % kKillPoints.size()];

    const int status = spawn_and_wait({ctx.self.string(), "--crash-child", data.string(),
                                       "--module", target.hex(), "--kill-at", point});
    const bool was_killed = WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
    // The kill point is skipped when the artifact is already on disk.
    const bool exited = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    killed += was_killed;

    auto raw = dangling_references(data, *ctx.executor);
    std::vector<std::string> after;
    try {
      ModuleRegistry reg(data, *ctx.executor);
      after = dangling_references(data, *ctx.executor);
      for (const auto &id : ids) {
        auto d = reg.find(id);
        if (!d)
          after.push_back("module lost: " + id.hex());
        else if (d->state == ModuleState::Initialized && !d->artifact_path)
          after.push_back("initialized without artifact: " + id.hex());
      }
      reg.get_or_compile(target);
      for (const auto &entry : fs::recursive_directory_iterator(data))
        if (entry.path().extension() == ".tmp")
          after.push_back("leftover " + entry.path().filename().string());
    } catch (const std::exception &ex) {
      after.push_back(std::string("restart failed: ") + ex.what());
    }

    if ((was_killed || exited) && raw.empty() && after.empty()) {
      ++consistent;
    } else {
      failures.push_back(fmt::format("trial {} at {}: {}{}", trial, point,
                                     fmt::join(raw, ", "), fmt::join(after, ", ")));
    }
  }
  std::string detail = fmt::format("{}/20 trials consistent ({} killed mid-write)", consistent,
                                   killed);
  if (!failures.empty())
    detail += "; " + failures.front();
  return {consistent == 20, detail};
}

// 9 ---------------------------------------------------------------------------

Outcome full_matrix(Context &ctx) {
  SandboxDir out;
  const int status =
      spawn_and_wait({ctx.bench_binary.string(), "--all", "--iterations", "100", "--out",
                      out.path().string(), "--workload-path", testkit::workload_dir().string()});
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;

  std::set<std::string> expected = {"summary.csv", "breakdown.svg"};
  for (auto w : workloads::kAllWorkloads) {
    expected.insert(fmt::format("ecdf_{}.svg", workloads::to_string(w)));
    for (auto m : kAllModes) {
      const auto label = fmt::format("{}_{}", workloads::to_string(w), to_string(m));
      expected.insert("samples_" + label + ".csv");
      expected.insert("ecdf_" + label + ".csv");
    }
  }
  std::set<std::string> found;
  for (const auto &entry : fs::directory_iterator(out.path()))
    if (entry.file_size() > 0)
      found.insert(entry.path().filename().string());

  std::vector<std::string> missing;
  std::set_difference(expected.begin(), expected.end(), found.begin(), found.end(),
                      std::back_inserter(missing));
  bool rows_ok = false;
  if (found.count("summary.csv")) {
    auto rows = report::parse_summary_csv(
        testkit::to_string(testkit::read_file(out.path() / "summary.csv")));
    rows_ok = rows.size() == 15 && std::all_of(rows.begin(), rows.end(), [](const auto &r) {
                return !r.aborted && r.stats.n == 100;
              });
  }
  std::string detail = fmt::format("exit code {}, {}/{} report files", code,
                                   expected.size() - missing.size(), expected.size());
  if (!missing.empty())
    detail += fmt::format(", missing {}", fmt::join(missing, " "));
  if (!rows_ok)
    detail += ", summary.csv incomplete";
  return {code == 0 && missing.empty() && rows_ok, detail};
}

struct Check {
  int number;
  std::string name;
  std::function<Outcome(Context &)> run;
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"limes acceptance checks"};
  std::string bench, crash_dir, crash_module, kill_at;
  std::vector<int> only;
  std::optional<std::uint64_t> seed;
  app.add_option("--bench", bench, "Path to the limes-bench binary");
  app.add_option("--only", only, "Run only these checks")->delimiter(',');
  app.add_option("--seed", seed, "Seed for the randomized checks");
  app.add_option("--crash-child", crash_dir)->group("");
  app.add_option("--module", crash_module)->group("");
  app.add_option("--kill-at", kill_at)->group("");
  CLI11_PARSE(app, argc, argv);

  if (!crash_dir.empty())
    return crash_child(crash_dir, crash_module, kill_at);

  Context ctx;
  ctx.bench_binary = bench;
  ctx.self = fs::read_symlink("/proc/self/exe");
  ctx.seed = seed ? *seed : std::random_device{}();
  Executor executor;
  ctx.executor = &executor;

  const std::vector<Check> checks = {
      {1, "cold-start ordering", cold_start_ordering},
      {2, "artifact cache effectiveness", cache_effectiveness},
      {3, "I/O overhead ordering", io_overhead},
      {4, "interruption bound", interruption_bound},
      {5, "oracle equivalence", oracle_equivalence},
      {6, "ECDF and summary statistics", stats_correctness},
      {7, "API lifecycle", api_lifecycle},
      {8, "crash consistency", crash_consistency},
      {9, "full-matrix bench run", full_matrix},
  };

  fmt::print("seed {}\n", ctx.seed);
  int failed = 0;
  for (const auto &check : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), check.number) == only.end())
      continue;
    if (check.number == 9 && bench.empty()) {
      fmt::print("[FAIL] {} {}: --bench not given\n", check.number, check.name);
      ++failed;
      continue;
    }
    const auto t0 = MonoClock::now();
    Outcome o;
    try {
      o = check.run(ctx);
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = to_ms(MonoClock::now() - t0) / 1000.0;
    fmt::print("[{}] {} {}: {} ({:.1f} s)\n", o.pass ? "PASS" : "FAIL", check.number, check.name,
               o.detail, secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  fmt::print("{} check(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}
