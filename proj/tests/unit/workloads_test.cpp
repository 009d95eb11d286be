#include "limes/executor.hpp"
#include "limes/sandbox.hpp"
#include "limes/workloads.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace limes;
using namespace limes::workloads;

namespace {

class GuestTest : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    executor_ = new Executor();
    mandelbrot_ = new ModuleHandle(executor_->compile(testkit::component("mandelbrot.wasm")));
    image_ = new ModuleHandle(executor_->compile(testkit::component("image.wasm")));
  }
  static void TearDownTestSuite() {
    delete image_;
    delete mandelbrot_;
    delete executor_;
  }

  InvokeResult run(const ModuleHandle &h, const SandboxDir &dir, std::string_view payload,
                   bool allow_writes = true) {
    SandboxPolicy p;
    p.preopen_dir = dir.path();
    p.allow_writes = allow_writes;
    return executor_->instantiate(h, p, {})->invoke(testkit::to_bytes(payload));
  }

  static void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }

  static inline Executor *executor_ = nullptr;
  static inline ModuleHandle *mandelbrot_ = nullptr;
  static inline ModuleHandle *image_ = nullptr;
};

MandelbrotParams small(std::uint32_t w, std::uint32_t h) {
  MandelbrotParams p;
  p.width = w;
  p.height = h;
  return p;
}

} // namespace

TEST(WorkloadNames, RoundTrip) {
  for (auto w : kAllWorkloads)
    EXPECT_EQ(parse_workload(to_string(w)), w);
  EXPECT_FALSE(parse_workload("image_io"));
  EXPECT_EQ(component_file(Workload::MandelbrotIo), "mandelbrot.wasm");
  EXPECT_EQ(component_file(Workload::ImageIo), "image.wasm");
}

TEST(WorkloadParams, ValidationAndJson) {
  MandelbrotParams p;
  EXPECT_NO_THROW(p.validate());
  auto back = MandelbrotParams::from_json(p.to_json());
  EXPECT_EQ(back.width, 800u);
  EXPECT_EQ(back.height, 600u);
  EXPECT_EQ(back.max_iter, 1000u);
  EXPECT_DOUBLE_EQ(back.viewport.re_min, -2.5);

  auto bad = p;
  bad.width = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = p;
  bad.viewport.re_max = bad.viewport.re_min;
  EXPECT_THROW(bad.validate(), Error);
  bad = p;
  bad.io_enabled = true;
  bad.output_path = "../escape.pgm";
  EXPECT_THROW(bad.validate(), Error);

  ImageJob job;
  EXPECT_NO_THROW(job.validate());
  auto job_back = ImageJob::from_json(job.to_json());
  EXPECT_EQ(job_back.filters, job.filters);
  job.filters.clear();
  EXPECT_THROW(job.validate(), Error);
  EXPECT_THROW(ImageJob::from_json(R"({"input_path":"a.png","filters":["sepia"]})"), Error);
}

TEST(WorkloadParams, DecodeGrid) {
  EXPECT_EQ(decode_grid({0x01, 0x00, 0xe8, 0x03}), (std::vector<std::uint16_t>{1, 1000}));
  EXPECT_THROW(decode_grid({1, 2, 3}), Error);
}

TEST(MandelbrotOracle, KnownPoints) {
  // c = 0 never escapes; c = 2 escapes on the second step (|z_2| = 6).
  MandelbrotParams p = small(1, 1);
  p.max_iter = 100;
  p.viewport = {0.0, 1.0, 0.0, 1.0};
  EXPECT_EQ(testkit::mandelbrot_oracle(p), std::vector<std::uint16_t>{100});
  p.viewport = {2.0, 3.0, 0.0, 1.0};
  EXPECT_EQ(testkit::mandelbrot_oracle(p), std::vector<std::uint16_t>{2});
}

TEST_F(GuestTest, Mandelbrot16x16MatchesHostOracle) {
  SandboxDir dir;
  auto p = small(16, 16);
  auto result = run(*mandelbrot_, dir, p.to_json());
  ASSERT_FALSE(result.error) << result.error->what();
  EXPECT_EQ(decode_grid(result.output), testkit::mandelbrot_oracle(p));
}

TEST_F(GuestTest, MandelbrotRectangularAndZoomedGrids) {
  SandboxDir dir;
  auto p = small(37, 11);
  p.max_iter = 300;
  p.viewport = {-0.75, -0.73, 0.1, 0.12};
  auto result = run(*mandelbrot_, dir, p.to_json());
  ASSERT_FALSE(result.error) << result.error->what();
  EXPECT_EQ(decode_grid(result.output), testkit::mandelbrot_oracle(p));
}

TEST_F(GuestTest, MandelbrotEmptyInputUsesDefaults) {
  SandboxDir dir;
  auto result = run(*mandelbrot_, dir, "");
  ASSERT_FALSE(result.error) << result.error->what();
  EXPECT_EQ(result.output.size(), 800u * 600u * 2u);
}

TEST_F(GuestTest, MandelbrotIoWritesOnlyThePgm) {
  SandboxDir dir;
  auto p = small(16, 16);
  p.io_enabled = true;
  auto result = run(*mandelbrot_, dir, p.to_json());
  ASSERT_FALSE(result.error) << result.error->what();

  auto tree = snapshot_tree(dir.path());
  ASSERT_EQ(tree.size(), 1u);
  ASSERT_TRUE(tree.count("mandelbrot.pgm"));

  std::string header = "P5\n16 16\n1000\n";
  std::vector<std::uint8_t> expected(header.begin(), header.end());
  for (auto v : testkit::mandelbrot_oracle(p)) {
    expected.push_back(static_cast<std::uint8_t>(v >> 8));
    expected.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  EXPECT_EQ(tree["mandelbrot.pgm"], expected);
}

TEST_F(GuestTest, WithoutIoTheSandboxIsUntouched) {
  auto seeds = seed_files(testkit::workload_dir(), Workload::Image);
  SandboxDir dir(seeds);
  const auto before = snapshot_tree(dir.path());

  ASSERT_FALSE(run(*mandelbrot_, dir, small(8, 8).to_json()).error);
  ImageJob job;
  ASSERT_FALSE(run(*image_, dir, job.to_json()).error);
  EXPECT_EQ(snapshot_tree(dir.path()), before);
}

TEST_F(GuestTest, ReadOnlySandboxRefusesWrites) {
  auto seeds = seed_files(testkit::workload_dir(), Workload::Image);
  SandboxDir dir(seeds);
  const auto before = snapshot_tree(dir.path());

  ImageJob job;
  job.write_output = true;
  auto result = run(*image_, dir, job.to_json(), /*allow_writes=*/false);
  ASSERT_TRUE(result.error);
  EXPECT_EQ(result.error->code(), ErrorCode::GuestError);

  auto p = small(4, 4);
  p.io_enabled = true;
  auto m = run(*mandelbrot_, dir, p.to_json(), /*allow_writes=*/false);
  ASSERT_TRUE(m.error);
  EXPECT_EQ(m.error->code(), ErrorCode::GuestError);

  EXPECT_EQ(snapshot_tree(dir.path()), before);
}

TEST_F(GuestTest, HostFilesystemIsNotReachable) {
  SandboxDir dir;
  for (const char *path : {"/etc/hostname", "/etc/passwd", "/proc/self/status"}) {
    ImageJob job;
    job.input_path = path;
    auto result = run(*image_, dir, job.to_json());
    ASSERT_TRUE(result.error) << path;
    EXPECT_EQ(result.error->code(), ErrorCode::GuestError) << path;
  }
  ImageJob escape;
  escape.input_path = "../input.png";
  auto result = run(*image_, dir, escape.to_json());
  ASSERT_TRUE(result.error);
  EXPECT_TRUE(snapshot_tree(dir.path()).empty());
}

TEST_F(GuestTest, EveryFilterMatchesTheHostOracle) {
  std::mt19937_64 rng(20250101);
  const std::vector<std::vector<Filter>> chains = {
      {Filter::Grayscale}, {Filter::Invert}, {Filter::Blur3x3},
      {Filter::Grayscale, Filter::Invert, Filter::Blur3x3}};
  for (int trial = 0; trial < 12; ++trial) {
    auto img = testkit::random_image(rng, 8, trial % 2 == 1);
    SandboxDir dir;
    write_file(dir.path() / "in.png", testkit::png_encode(img));
    for (const auto &chain : chains) {
      ImageJob job;
      job.input_path = "in.png";
      job.filters = chain;
      auto result = run(*image_, dir, job.to_json());
      ASSERT_FALSE(result.error) << result.error->what();
      auto got = testkit::png_decode(result.output);
      EXPECT_EQ(got, testkit::apply_oracle(img, chain))
          << "trial " << trial << ", " << chain.size() << " filters, "
          << img.width << "x" << img.height << "x" << img.channels;
    }
  }
}

TEST_F(GuestTest, InvertTwiceIsIdentity) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 6; ++trial) {
    auto img = testkit::random_image(rng, 8, trial % 2 == 0);
    SandboxDir dir;
    write_file(dir.path() / "in.png", testkit::png_encode(img));
    ImageJob job;
    job.input_path = "in.png";
    job.filters = {Filter::Invert, Filter::Invert};
    auto result = run(*image_, dir, job.to_json());
    ASSERT_FALSE(result.error) << result.error->what();
    EXPECT_EQ(testkit::png_decode(result.output), img);
  }
}

TEST_F(GuestTest, ImageIoWritesTheReturnedPng) {
  auto seeds = seed_files(testkit::workload_dir(), Workload::ImageIo);
  SandboxDir dir(seeds);
  ImageJob job;
  job.write_output = true;
  auto result = run(*image_, dir, job.to_json());
  ASSERT_FALSE(result.error) << result.error->what();
  EXPECT_EQ(testkit::read_file(dir.path() / "output.png"), result.output);

  auto input = testkit::png_decode(testkit::read_file(dir.path() / "input.png"));
  EXPECT_EQ(testkit::png_decode(result.output), testkit::apply_oracle(input, job.filters));
}

TEST(WorkloadDir, ResolvesExplicitPathFirst) {
  EXPECT_EQ(resolve_workload_dir(std::filesystem::path("/x/y")), std::filesystem::path("/x/y"));
  auto dir = resolve_workload_dir();
  EXPECT_TRUE(std::filesystem::exists(dir / "noop.wasm")) << dir;
  EXPECT_THROW(read_component(dir, "missing.wasm"), Error);
}
