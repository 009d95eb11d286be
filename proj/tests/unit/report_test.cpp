#include "limes/report.hpp"
#include "limes/sandbox.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <clocale>
#include <random>
#include <regex>

using namespace limes;
using namespace limes::bench;
namespace fs = std::filesystem;

namespace {

LatencySamples make_set(workloads::Workload w, Mode m, std::vector<double> values) {
  LatencySamples s;
  s.plan.workload = w;
  s.plan.mode = m;
  s.plan.iterations = values.size();
  s.values_ms = std::move(values);
  s.recorded_at = std::chrono::system_clock::now();
  s.host_info = "test host";
  return s;
}

std::vector<double> random_values(std::mt19937_64 &rng, std::size_t n) {
  std::lognormal_distribution<double> dist(2.0, 0.8);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(quantize_ms(dist(rng)));
  return out;
}

std::string slurp(const fs::path &p) { return testkit::to_string(testkit::read_file(p)); }

/// y values of every polyline with class "ecdf", in document order.
std::vector<std::vector<double>> polyline_ys(const std::string &svg) {
  std::vector<std::vector<double>> out;
  std::regex line(R"re(<polyline class="ecdf"[^>]*points="([^"]*)")re");
  for (std::sregex_iterator it(svg.begin(), svg.end(), line), end; it != end; ++it) {
    std::vector<double> ys;
    std::istringstream pts((*it)[1].str());
    std::string pair;
    while (pts >> pair)
      ys.push_back(std::stod(pair.substr(pair.find(',') + 1)));
    out.push_back(ys);
  }
  return out;
}

} // namespace

TEST(Report, FormatIsFixedThreeDecimals) {
  EXPECT_EQ(report::format_ms(1.0), "1.000");
  EXPECT_EQ(report::format_ms(0.0005), "0.001");
  EXPECT_EQ(report::format_ms(1234.5678), "1234.568");
  // A comma-decimal C locale must not leak into the files.
  const char *old = std::setlocale(LC_NUMERIC, nullptr);
  std::string saved = old ? old : "C";
  if (std::setlocale(LC_NUMERIC, "de_DE.UTF-8"))
    EXPECT_EQ(report::format_ms(2.5), "2.500");
  std::setlocale(LC_NUMERIC, saved.c_str());
}

TEST(Report, OnePlanWritesExactlyFourFiles) {
  SandboxDir out;
  std::mt19937_64 rng(5);
  std::vector<LatencySamples> sets{
      make_set(workloads::Workload::Noop, Mode::ColdJit, random_values(rng, 50))};
  auto files = report::emit_reports(sets, out.path());
  EXPECT_EQ(files.size(), 4u);
  std::set<std::string> names;
  for (const auto &entry : fs::directory_iterator(out.path()))
    names.insert(entry.path().filename().string());
  EXPECT_EQ(names, (std::set<std::string>{"samples_noop_cold-jit.csv", "ecdf_noop_cold-jit.csv",
                                          "summary.csv", "ecdf_noop.svg"}));
}

TEST(Report, FullMatrixAddsTheBreakdownChart) {
  SandboxDir out;
  std::mt19937_64 rng(6);
  std::vector<LatencySamples> sets;
  for (auto w : workloads::kAllWorkloads)
    for (auto m : kAllModes)
      sets.push_back(make_set(w, m, random_values(rng, 30)));
  auto files = report::emit_reports(sets, out.path());
  // 15 samples + 15 ecdf csv, summary, 5 overlays, breakdown.
  EXPECT_EQ(files.size(), 37u);
  auto svg = slurp(out.path() / "breakdown.svg");
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
  // Two stacked bars (jit and cached) per workload.
  std::regex cold(R"(class="cold")");
  EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), cold), {}), 10);
}

TEST(Report, SamplesCsvRoundTrips) {
  std::mt19937_64 rng(7);
  auto set = make_set(workloads::Workload::Image, Mode::Execution, random_values(rng, 200));
  auto text = report::samples_csv(set);
  EXPECT_EQ(text.rfind("iteration,latency_ms\n", 0), 0u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(report::parse_samples_csv(text), set.values_ms);
  EXPECT_THROW(report::parse_samples_csv("wrong,header\n1,2\n"), Error);
  EXPECT_THROW(report::parse_samples_csv("iteration,latency_ms\n1,abc\n"), Error);
  EXPECT_THROW(report::parse_samples_csv("iteration,latency_ms\n2,1.0\n"), Error);
}

TEST(Report, PipelineReproducesSummaries) {
  SandboxDir out;
  std::mt19937_64 rng(8);
  std::vector<LatencySamples> sets{
      make_set(workloads::Workload::Mandelbrot, Mode::ColdJit, random_values(rng, 313)),
      make_set(workloads::Workload::Mandelbrot, Mode::Execution, random_values(rng, 97))};
  report::emit_reports(sets, out.path());

  auto rows = report::parse_summary_csv(slurp(out.path() / "summary.csv"));
  ASSERT_EQ(rows.size(), 2u);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto parsed = report::parse_samples_csv(
        slurp(out.path() / ("samples_" + sets[i].plan.label() + ".csv")));
    auto again = summarize(parsed);
    auto orig = summarize(sets[i].values_ms);
    for (auto [a, b] : {std::pair{again.mean_ms, orig.mean_ms}, {again.p50_ms, orig.p50_ms},
                        {again.p90_ms, orig.p90_ms}, {again.p99_ms, orig.p99_ms},
                        {again.stddev_ms, orig.stddev_ms}, {rows[i].stats.mean_ms, orig.mean_ms},
                        {rows[i].stats.p99_ms, orig.p99_ms}})
      EXPECT_EQ(report::format_ms(a), report::format_ms(b));
    EXPECT_EQ(rows[i].stats.n, orig.n);
    EXPECT_FALSE(rows[i].aborted);
  }
}

TEST(Report, EcdfCsvMatchesTable) {
  std::vector<double> v{3, 1, 2, 2, 5};
  auto table = compute_ecdf(v);
  auto parsed = report::parse_ecdf_csv(report::ecdf_csv(table));
  ASSERT_EQ(parsed.points.size(), 4u);
  EXPECT_EQ(parsed.points[1].x, 2.0);
  EXPECT_EQ(parsed.points[1].p, 0.6);
  EXPECT_EQ(parsed.points.back().p, 1.0);
}

TEST(Report, EcdfSvgPolylinesAreMonotone) {
  SandboxDir out;
  std::mt19937_64 rng(9);
  std::vector<LatencySamples> sets;
  for (auto m : kAllModes)
    sets.push_back(make_set(workloads::Workload::Image, m, random_values(rng, 150)));
  report::emit_reports(sets, out.path());
  auto lines = polyline_ys(slurp(out.path() / "ecdf_image.svg"));
  ASSERT_EQ(lines.size(), 3u);
  for (const auto &ys : lines) {
    ASSERT_FALSE(ys.empty());
    for (std::size_t i = 1; i < ys.size(); ++i)
      EXPECT_LE(ys[i - 1], ys[i]);
  }
}

TEST(Report, AbortedPlansAreFlagged) {
  SandboxDir out;
  auto partial = make_set(workloads::Workload::Noop, Mode::ColdJit, {1.0, 2.0});
  partial.plan.iterations = 10;
  partial.aborted = true;
  auto empty = make_set(workloads::Workload::Noop, Mode::Execution, {});
  empty.aborted = true;
  std::vector<LatencySamples> sets{partial, empty};
  report::emit_reports(sets, out.path());
  auto rows = report::parse_summary_csv(slurp(out.path() / "summary.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].aborted);
  EXPECT_EQ(rows[0].stats.n, 2u);
  EXPECT_TRUE(rows[1].aborted);
  EXPECT_EQ(rows[1].stats.n, 0u);
  // No breakdown without a complete execution set.
  EXPECT_FALSE(fs::exists(out.path() / "breakdown.svg"));
}

TEST(Report, UnwritableDirectoryFails) {
  std::vector<LatencySamples> sets{make_set(workloads::Workload::Noop, Mode::ColdJit, {1.0})};
  EXPECT_THROW(report::emit_reports(sets, "/proc/limes-cannot-write-here"), Error);
  EXPECT_THROW(report::emit_reports({}, "/tmp"), Error);
}
