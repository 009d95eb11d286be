#include "limes/bench.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace limes;
using namespace limes::bench;

namespace {

ErrorCode code_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  return ErrorCode::EngineFailure;
}

} // namespace

TEST(Ecdf, SmallExamples) {
  std::vector<double> s{5, 10, 15};
  auto t = compute_ecdf(s);
  ASSERT_EQ(t.points.size(), 3u);
  EXPECT_DOUBLE_EQ(t.at(10), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(t.at(4.9), 0.0);
  EXPECT_DOUBLE_EQ(t.at(12), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(t.at(15), 1.0);

  std::vector<double> same{7, 7, 7};
  auto single = compute_ecdf(same);
  ASSERT_EQ(single.points.size(), 1u);
  EXPECT_EQ(single.points[0].x, 7.0);
  EXPECT_EQ(single.points[0].p, 1.0);

  EXPECT_EQ(code_of([] { compute_ecdf({}); }), ErrorCode::EmptySamples);
}

TEST(Ecdf, MatchesBruteForceCounting) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::size_t> size(1, 1000);
  for (int set = 0; set < 60; ++set) {
    auto samples = testkit::random_samples(rng, set == 0 ? 1 : size(rng));
    auto table = compute_ecdf(samples);
    ASSERT_FALSE(table.points.empty());
    EXPECT_EQ(table.points.back().p, 1.0);
    for (std::size_t i = 0; i < table.points.size(); ++i) {
      if (i > 0) {
        EXPECT_LT(table.points[i - 1].x, table.points[i].x);
        EXPECT_LE(table.points[i - 1].p, table.points[i].p);
      }
      EXPECT_DOUBLE_EQ(table.points[i].p, testkit::brute_force_cdf(samples, table.points[i].x));
    }
    // Every sample value is a point of the table.
    for (double s : samples)
      EXPECT_DOUBLE_EQ(table.at(s), testkit::brute_force_cdf(samples, s));
  }
}

TEST(Summary, SmallExamples) {
  std::vector<double> s{10, 20, 30};
  auto st = summarize(s);
  EXPECT_EQ(st.n, 3u);
  EXPECT_DOUBLE_EQ(st.mean_ms, 20);
  EXPECT_DOUBLE_EQ(st.p50_ms, 20);
  EXPECT_DOUBLE_EQ(st.min_ms, 10);
  EXPECT_DOUBLE_EQ(st.max_ms, 30);
  EXPECT_DOUBLE_EQ(st.stddev_ms, 10);

  std::vector<double> one{4.25};
  auto single = summarize(one);
  EXPECT_EQ(single.mean_ms, 4.25);
  EXPECT_EQ(single.p50_ms, 4.25);
  EXPECT_EQ(single.p99_ms, 4.25);
  EXPECT_EQ(single.min_ms, 4.25);
  EXPECT_EQ(single.max_ms, 4.25);
  EXPECT_EQ(single.stddev_ms, 0);

  EXPECT_EQ(code_of([] { summarize({}); }), ErrorCode::EmptySamples);
}

TEST(Summary, NearestRankPercentiles) {
  std::vector<double> s;
  for (int i = 1; i <= 100; ++i)
    s.push_back(i);
  auto st = summarize(s);
  EXPECT_EQ(st.p50_ms, 50);
  EXPECT_EQ(st.p90_ms, 90);
  EXPECT_EQ(st.p99_ms, 99);
  std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(nearest_rank(ten, 0.5), 5);
  EXPECT_EQ(nearest_rank(ten, 0.51), 6);
  EXPECT_EQ(nearest_rank(ten, 0.0), 1);
  EXPECT_EQ(nearest_rank(ten, 1.0), 10);
}

TEST(Summary, MatchesBruteForceOnRandomSets) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> size(1, 1000);
  for (int set = 0; set < 60; ++set) {
    auto samples = testkit::random_samples(rng, size(rng));
    auto st = summarize(samples);
    EXPECT_EQ(st.n, samples.size());
    EXPECT_NEAR(st.mean_ms, testkit::brute_force_mean(samples),
                1e-9 * std::max(1.0, std::abs(st.mean_ms)));
    EXPECT_NEAR(st.stddev_ms, testkit::brute_force_stddev(samples),
                1e-9 * std::max(1.0, st.stddev_ms));
    EXPECT_EQ(st.p50_ms, testkit::brute_force_percentile(samples, 0.50));
    EXPECT_EQ(st.p90_ms, testkit::brute_force_percentile(samples, 0.90));
    EXPECT_EQ(st.p99_ms, testkit::brute_force_percentile(samples, 0.99));
    EXPECT_LE(st.min_ms, st.p50_ms);
    EXPECT_LE(st.p50_ms, st.p90_ms);
    EXPECT_LE(st.p90_ms, st.p99_ms);
    EXPECT_LE(st.p99_ms, st.max_ms);
  }
}

TEST(Plan, ValidationAndLabels) {
  BenchmarkPlan p;
  EXPECT_EQ(p.iterations, 1000u);
  EXPECT_EQ(p.warmup_iterations, 10u);
  p.workload = workloads::Workload::ImageIo;
  p.mode = Mode::ColdCached;
  EXPECT_EQ(p.label(), "image-io_cold-cached");
  p.iterations = 0;
  EXPECT_THROW(p.validate(), Error);
  for (auto m : kAllModes)
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_FALSE(parse_mode("warm"));
  EXPECT_EQ(quantize_ms(1.23456), 1.235);
}

class BenchRunnerTest : public ::testing::Test {
protected:
  Executor executor_;
  BenchRunner runner_{executor_, testkit::workload_dir()};

  BenchmarkPlan plan(workloads::Workload w, Mode m, std::uint64_t n, std::uint64_t warmup = 0) {
    BenchmarkPlan p;
    p.workload = w;
    p.mode = m;
    p.iterations = n;
    p.warmup_iterations = warmup;
    return p;
  }
};

TEST_F(BenchRunnerTest, ColdJitProducesOneCompilePerIteration) {
  const auto before = executor_.compile_count();
  auto s = runner_.run(plan(workloads::Workload::Noop, Mode::ColdJit, 12, 3));
  EXPECT_FALSE(s.aborted) << s.abort_reason;
  EXPECT_EQ(s.values_ms.size(), 12u);
  EXPECT_EQ(s.warmup_ms.size(), 3u);
  EXPECT_EQ(s.compiles, 12u);
  EXPECT_EQ(executor_.compile_count() - before, 15u);
  for (double v : s.values_ms)
    EXPECT_GT(v, 0.0);
  EXPECT_FALSE(s.host_info.empty());
}

TEST_F(BenchRunnerTest, ColdCachedNeverCompilesInsideTheLoop) {
  auto s = runner_.run(plan(workloads::Workload::Noop, Mode::ColdCached, 12, 2));
  EXPECT_FALSE(s.aborted) << s.abort_reason;
  EXPECT_EQ(s.values_ms.size(), 12u);
  EXPECT_EQ(s.compiles, 0u);
}

TEST_F(BenchRunnerTest, ExecutionRecordsOnlyTheInvoke) {
  auto s = runner_.run(plan(workloads::Workload::Noop, Mode::Execution, 20));
  EXPECT_FALSE(s.aborted);
  EXPECT_EQ(s.values_ms.size(), 20u);
  EXPECT_EQ(s.compiles, 0u);
  for (double v : s.values_ms)
    EXPECT_GE(v, 0.0);
}

TEST_F(BenchRunnerTest, ImageWorkloadsFindTheirFixture) {
  auto s = runner_.run(plan(workloads::Workload::ImageIo, Mode::Execution, 2));
  EXPECT_FALSE(s.aborted) << s.abort_reason;
  EXPECT_EQ(s.values_ms.size(), 2u);
}

TEST_F(BenchRunnerTest, GuestFailureAbortsWithPartialResults) {
  runner_.set_payload(workloads::Workload::Mandelbrot, testkit::to_bytes(R"({"width":0})"));
  auto s = runner_.run(plan(workloads::Workload::Mandelbrot, Mode::Execution, 5));
  EXPECT_TRUE(s.aborted);
  EXPECT_TRUE(s.values_ms.empty());
  EXPECT_NE(s.abort_reason.find("width"), std::string::npos);
}

TEST_F(BenchRunnerTest, MissingComponentAborts) {
  BenchRunner lost(executor_, "/nonexistent/limes-workloads");
  auto s = lost.run(plan(workloads::Workload::Noop, Mode::ColdJit, 3));
  EXPECT_TRUE(s.aborted);
  EXPECT_TRUE(s.values_ms.empty());
}

TEST_F(BenchRunnerTest, ModeMismatchIsRejected) {
  EXPECT_THROW(runner_.run_execution_bench(plan(workloads::Workload::Noop, Mode::ColdJit, 1)),
               Error);
  EXPECT_THROW(runner_.run_cold_start_bench(plan(workloads::Workload::Noop, Mode::Execution, 1)),
               Error);
}

TEST_F(BenchRunnerTest, PairedRunAlternatesBothPlans) {
  auto [jit, cached] = runner_.run_paired(plan(workloads::Workload::Noop, Mode::ColdJit, 6, 1),
                                          plan(workloads::Workload::Noop, Mode::ColdCached, 4, 2));
  EXPECT_FALSE(jit.aborted);
  EXPECT_FALSE(cached.aborted);
  EXPECT_EQ(jit.values_ms.size(), 6u);
  EXPECT_EQ(cached.values_ms.size(), 4u);
  EXPECT_EQ(jit.warmup_ms.size(), 1u);
  EXPECT_EQ(cached.warmup_ms.size(), 2u);
  EXPECT_EQ(jit.compiles, 6u);
  EXPECT_EQ(cached.compiles, 0u);
}

TEST_F(BenchRunnerTest, PairedFailureAbortsBothSides) {
  runner_.set_payload(workloads::Workload::Mandelbrot, testkit::to_bytes(R"({"height":0})"));
  auto [good, bad] = runner_.run_paired(plan(workloads::Workload::Noop, Mode::Execution, 3),
                                        plan(workloads::Workload::Mandelbrot, Mode::Execution, 3));
  EXPECT_TRUE(good.aborted);
  EXPECT_TRUE(bad.aborted);
  EXPECT_EQ(good.values_ms.size(), 1u);
}
