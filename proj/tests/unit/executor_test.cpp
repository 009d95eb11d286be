#include "limes/executor.hpp"
#include "limes/sandbox.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fmt/format.h>

#include <functional>
#include <random>
#include <set>
#include <thread>

using namespace limes;
using namespace std::chrono_literals;

namespace {

class ExecutorTest : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    executor_ = new Executor();
    noop_ = new std::vector<std::uint8_t>(testkit::component("noop.wasm"));
    noop_handle_ = new ModuleHandle(executor_->compile(*noop_));
  }
  static void TearDownTestSuite() {
    delete noop_handle_;
    delete noop_;
    delete executor_;
  }

  SandboxPolicy policy() const {
    SandboxPolicy p;
    p.preopen_dir = sandbox_.path();
    return p;
  }

  std::shared_ptr<FunctionInstance> noop_instance(EpochConfig epochs = {}) {
    return executor_->instantiate(*noop_handle_, policy(), epochs);
  }

  template <typename F> static ErrorCode code_of(F &&f) {
    try {
      f();
    } catch (const Error &e) {
      return e.code();
    }
    ADD_FAILURE() << "no limes::Error thrown";
    return ErrorCode::InvalidArgument;
  }

  static inline Executor *executor_ = nullptr;
  static inline std::vector<std::uint8_t> *noop_ = nullptr;
  static inline ModuleHandle *noop_handle_ = nullptr;
  SandboxDir sandbox_;
};

} // namespace

TEST_F(ExecutorTest, FingerprintDescribesThisEngine) {
  const auto &fp = executor_->fingerprint();
  EXPECT_EQ(fp.engine_name, "wasmtime");
  EXPECT_FALSE(fp.engine_version.empty());
  EXPECT_NE(fp.target_triple.find("linux"), std::string::npos);
  EXPECT_TRUE(std::is_sorted(fp.feature_flags.begin(), fp.feature_flags.end()));
}

TEST_F(ExecutorTest, NoopEchoesInputsUpToOneMebibyte) {
  std::mt19937_64 rng(7);
  for (std::size_t size : {0u, 1u, 255u, 4096u, 65537u, 1u << 20}) {
    std::vector<std::uint8_t> input(size);
    for (auto &b : input)
      b = static_cast<std::uint8_t>(rng());
    auto result = noop_instance()->invoke(input);
    ASSERT_FALSE(result.error) << result.error->what();
    EXPECT_EQ(result.status, InstanceState::Finished);
    EXPECT_EQ(result.output, input) << "size " << size;
  }
}

TEST_F(ExecutorTest, InstanceFollowsTheStateMachine) {
  auto inst = noop_instance();
  EXPECT_EQ(inst->state(), InstanceState::Ready);
  EXPECT_EQ(code_of([&] { inst->interrupt(); }), ErrorCode::NotRunning);

  auto result = inst->invoke(testkit::to_bytes("x"));
  EXPECT_EQ(result.status, InstanceState::Finished);
  EXPECT_EQ(inst->history(), (std::vector<InstanceState>{InstanceState::Ready,
                                                         InstanceState::Running,
                                                         InstanceState::Finished}));
  EXPECT_TRUE(is_terminal(inst->state()));

  EXPECT_EQ(code_of([&] { inst->invoke({}); }), ErrorCode::InstanceReused);
  EXPECT_EQ(code_of([&] { inst->interrupt(); }), ErrorCode::NotRunning);
  EXPECT_EQ(inst->history().size(), 3u);
}

TEST_F(ExecutorTest, TimingBreakdownIsConsistent) {
  const auto before = MonoClock::now();
  auto inst = executor_->instantiate(*noop_handle_, policy(), {}, before, true);
  auto result = inst->invoke(testkit::to_bytes("abc"));
  EXPECT_TRUE(result.timing.cache_hit);
  EXPECT_GT(result.timing.cold_start.count(), 0);
  EXPECT_GT(result.timing.execution.count(), 0);
  EXPECT_GE(result.timing.total, result.timing.cold_start + result.timing.execution);
  EXPECT_EQ(inst->cold_start(), inst->ready_at() - before);
}

TEST_F(ExecutorTest, InstanceIdsAreUnique) {
  std::set<std::string> ids;
  for (int i = 0; i < 20; ++i)
    ids.insert(noop_instance()->instance_id());
  EXPECT_EQ(ids.size(), 20u);
}

TEST_F(ExecutorTest, RejectsMalformedBinaries) {
  EXPECT_EQ(code_of([&] { executor_->compile(testkit::to_bytes("definitely not wasm")); }),
            ErrorCode::MalformedModule);
  EXPECT_EQ(code_of([&] { executor_->compile({}); }), ErrorCode::MalformedModule);
  // A core module is well formed but not a component.
  EXPECT_EQ(code_of([&] { executor_->compile(testkit::wat_to_wasm("(module)")); }),
            ErrorCode::MalformedModule);
  std::vector<std::uint8_t> truncated(noop_->begin(), noop_->begin() + noop_->size() / 2);
  EXPECT_EQ(code_of([&] { executor_->compile(truncated); }), ErrorCode::MalformedModule);
}

TEST_F(ExecutorTest, EmptyComponentHasNoEntrypoint) {
  EXPECT_EQ(code_of([&] { executor_->compile(testkit::wat_to_wasm("(component)")); }),
            ErrorCode::MissingExport);
}

TEST_F(ExecutorTest, HandWrittenComponentRuns) {
  auto handle = executor_->compile(testkit::wat_to_wasm(testkit::minimal_component_wat()));
  auto result = executor_->instantiate(handle, policy(), {})->invoke(testkit::to_bytes("ignored"));
  ASSERT_FALSE(result.error) << result.error->what();
  EXPECT_TRUE(result.output.empty());
}

TEST_F(ExecutorTest, UnsatisfiedImportIsALinkError) {
  auto wasm = testkit::wat_to_wasm(testkit::minimal_component_wat(
      R"((import "bogus:missing/nothing@1.0.0" (instance (export "f" (func)))))"));
  auto handle = executor_->compile(wasm); // compiles fine; linking fails
  EXPECT_EQ(code_of([&] { executor_->instantiate(handle, policy(), {}); }),
            ErrorCode::LinkError);
}

TEST_F(ExecutorTest, MissingPreopenIsASandboxError) {
  SandboxPolicy p;
  p.preopen_dir = sandbox_.path() / "does-not-exist";
  EXPECT_EQ(code_of([&] { executor_->instantiate(*noop_handle_, p, {}); }),
            ErrorCode::SandboxError);
}

TEST_F(ExecutorTest, SerializedArtifactLoadsWithoutCompiling) {
  auto artifact = executor_->serialize(*noop_handle_);
  EXPECT_EQ(artifact.source_hash, ContentHash::of(*noop_));
  EXPECT_EQ(artifact.fingerprint, executor_->fingerprint());

  const auto compiles = executor_->compile_count();
  const auto loads = executor_->load_count();
  auto handle = executor_->load_artifact(artifact);
  EXPECT_EQ(executor_->compile_count(), compiles);
  EXPECT_EQ(executor_->load_count(), loads + 1);
  EXPECT_EQ(handle.source_hash(), artifact.source_hash);

  auto result = executor_->instantiate(handle, policy(), {})->invoke(testkit::to_bytes("cached"));
  EXPECT_EQ(testkit::to_string(result.value()), "cached");
}

TEST_F(ExecutorTest, AnyFingerprintFieldMismatchRefusesTheArtifact) {
  const auto artifact = executor_->serialize(*noop_handle_);
  const auto current = executor_->fingerprint();
  const std::vector<std::function<void(EngineFingerprint &)>> edits = {
      [](auto &fp) { fp.engine_name = "other-engine"; },
      [](auto &fp) { fp.engine_version += ".1"; },
      [](auto &fp) { fp.target_triple = "aarch64-apple-darwin"; },
      [](auto &fp) {
        fp.feature_flags.push_back("simd-extra");
        fp.normalize();
      },
  };
  for (std::size_t i = 0; i < edits.size(); ++i) {
    auto foreign = artifact;
    edits[i](foreign.fingerprint);
    EXPECT_EQ(code_of([&] { executor_->load_artifact(foreign); }),
              ErrorCode::FingerprintMismatch)
        << "field " << i;

    // The same edit applied to the "current" side is also a mismatch.
    auto other = current;
    edits[i](other);
    EXPECT_EQ(code_of([&] { executor_->load_artifact(artifact, other); }),
              ErrorCode::FingerprintMismatch)
        << "field " << i;
  }
}

TEST_F(ExecutorTest, TruncatedOrScrambledBlobIsCorrupt) {
  const auto artifact = executor_->serialize(*noop_handle_);
  for (std::size_t keep : {std::size_t{0}, std::size_t{16}, artifact.blob.size() / 2,
                           artifact.blob.size() - 1}) {
    auto damaged = artifact;
    damaged.blob.resize(keep);
    EXPECT_EQ(code_of([&] { executor_->load_artifact(damaged); }), ErrorCode::CorruptArtifact)
        << "kept " << keep << " bytes";
  }
  auto garbage = artifact;
  std::fill(garbage.blob.begin(), garbage.blob.end(), 0xa5);
  EXPECT_EQ(code_of([&] { executor_->load_artifact(garbage); }), ErrorCode::CorruptArtifact);
}

TEST_F(ExecutorTest, MeasureColdStartUsesCacheAndFallsBack) {
  auto artifact = executor_->serialize(*noop_handle_);

  auto compiles = executor_->compile_count();
  auto hit = executor_->measure_cold_start(*noop_, policy(), {}, &artifact);
  EXPECT_TRUE(hit.cache_hit);
  EXPECT_TRUE(hit.instance->cache_hit());
  EXPECT_EQ(executor_->compile_count(), compiles);
  EXPECT_GT(hit.cold_start.count(), 0);

  auto broken = artifact;
  broken.blob.resize(10);
  auto miss = executor_->measure_cold_start(*noop_, policy(), {}, &broken);
  EXPECT_FALSE(miss.cache_hit);
  EXPECT_EQ(executor_->compile_count(), compiles + 1);
  EXPECT_EQ(testkit::to_string(miss.instance->invoke(testkit::to_bytes("ok")).value()), "ok");

  auto jit = executor_->measure_cold_start(*noop_, policy(), {});
  EXPECT_FALSE(jit.cache_hit);
  EXPECT_EQ(executor_->compile_count(), compiles + 2);
}

TEST_F(ExecutorTest, SpinGuestIsInterruptedAtItsDeadline) {
  auto spin = executor_->compile(testkit::component("spin.wasm"));
  for (auto deadline : {20ms, 60ms}) {
    auto inst = executor_->instantiate(spin, policy(), EpochConfig::for_deadline(deadline, 5ms));
    const auto t0 = MonoClock::now();
    auto result = inst->invoke({});
    const auto elapsed = MonoClock::now() - t0;
    EXPECT_EQ(result.status, InstanceState::Interrupted);
    ASSERT_TRUE(result.error);
    EXPECT_EQ(result.error->code(), ErrorCode::Interrupted);
    EXPECT_GE(elapsed, deadline);
    EXPECT_LT(elapsed, deadline + 200ms);
    EXPECT_EQ(inst->history().back(), InstanceState::Interrupted);
  }
}

TEST_F(ExecutorTest, InterruptStopsARunningGuestFromAnotherThread) {
  auto spin = executor_->compile(testkit::component("spin.wasm"));
  auto inst = executor_->instantiate(spin, policy(), EpochConfig::for_deadline(30s));
  std::thread stopper([&] {
    while (inst->state() != InstanceState::Running)
      std::this_thread::sleep_for(1ms);
    std::this_thread::sleep_for(20ms);
    inst->interrupt();
  });
  const auto t0 = MonoClock::now();
  auto result = inst->invoke({});
  stopper.join();
  EXPECT_EQ(result.status, InstanceState::Interrupted);
  EXPECT_LT(MonoClock::now() - t0, 2s);
  EXPECT_STREQ(result.error->what(), "stopped by request");
}

TEST_F(ExecutorTest, GuestErrorsAreReportedNotThrown) {
  auto mandelbrot = executor_->compile(testkit::component("mandelbrot.wasm"));
  auto result = executor_->instantiate(mandelbrot, policy(), {})
                    ->invoke(testkit::to_bytes(R"({"width":0})"));
  EXPECT_EQ(result.status, InstanceState::Failed);
  ASSERT_TRUE(result.error);
  EXPECT_EQ(result.error->code(), ErrorCode::GuestError);
  EXPECT_THROW(result.value(), Error);
}

TEST_F(ExecutorTest, ConcurrentInstancesAreIndependent) {
  constexpr int kThreads = 8;
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < kThreads; ++t)
    threads.emplace_back([&, t] {
      SandboxDir dir;
      SandboxPolicy p;
      p.preopen_dir = dir.path();
      for (int i = 0; i < 10; ++i) {
        auto payload = testkit::to_bytes(fmt::format("thread {} call {}", t, i));
        auto result = executor_->instantiate(*noop_handle_, p, {})->invoke(payload);
        ok += !result.error && result.output == payload;
      }
    });
  for (auto &th : threads)
    th.join();
  EXPECT_EQ(ok.load(), kThreads * 10);
}

TEST(EpochConfig, DeadlineArithmetic) {
  EpochConfig def;
  EXPECT_EQ(def.deadline(), 30s);
  auto cfg = EpochConfig::for_deadline(50ms);
  EXPECT_EQ(cfg.deadline_ticks, 5u);
  EXPECT_EQ(EpochConfig::for_deadline(51ms).deadline_ticks, 6u);
  EXPECT_EQ(EpochConfig::for_deadline(1ms).deadline_ticks, 1u);
  EpochConfig bad;
  bad.deadline_ticks = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.tick_interval = 0ms;
  EXPECT_THROW(bad.validate(), Error);
}
