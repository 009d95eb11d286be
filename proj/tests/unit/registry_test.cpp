#include "limes/registry.hpp"
#include "limes/sandbox.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <thread>

using namespace limes;
namespace fs = std::filesystem;

namespace {

struct InjectedCrash {
  std::string point;
};

class RegistryTest : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    executor_ = new Executor();
    noop_ = new std::vector<std::uint8_t>(testkit::component("noop.wasm"));
    minimal_ = new std::vector<std::uint8_t>(
        testkit::wat_to_wasm(testkit::minimal_component_wat()));
  }
  static void TearDownTestSuite() {
    delete minimal_;
    delete noop_;
    delete executor_;
  }

  fs::path data() const { return root_.path() / "data"; }

  nlohmann::json index_json() const {
    std::ifstream in(data() / "index.json");
    return nlohmann::json::parse(in);
  }

  static void overwrite(const fs::path &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }

  static inline Executor *executor_ = nullptr;
  static inline std::vector<std::uint8_t> *noop_ = nullptr;
  static inline std::vector<std::uint8_t> *minimal_ = nullptr;
  SandboxDir root_;
};

} // namespace

TEST_F(RegistryTest, RegisterIsContentAddressedAndIdempotent) {
  ModuleRegistry reg(data(), *executor_);
  auto d = reg.register_module(*noop_, "noop");
  EXPECT_EQ(d.module_id, ContentHash::of(*noop_));
  EXPECT_EQ(d.size_bytes, noop_->size());
  EXPECT_EQ(d.state, ModuleState::Registered);
  EXPECT_FALSE(d.artifact_path);
  EXPECT_EQ(testkit::read_file(reg.module_path(d.module_id)), *noop_);

  auto again = reg.register_module(*noop_, "other-name");
  EXPECT_EQ(again, d);
  EXPECT_EQ(reg.list_modules().size(), 1u);
  EXPECT_EQ(reg.compile_count(), 0u);
}

TEST_F(RegistryTest, RegisterValidatesInput) {
  ModuleRegistry reg(data(), *executor_);
  auto code = [&](std::span<const std::uint8_t> wasm, std::string name) {
    try {
      reg.register_module(wasm, std::move(name));
    } catch (const Error &e) {
      return e.code();
    }
    return ErrorCode::EngineFailure; // sentinel: nothing thrown
  };
  EXPECT_EQ(code(testkit::to_bytes("garbage"), "x"), ErrorCode::MalformedModule);
  EXPECT_EQ(code(testkit::wat_to_wasm("(module)"), "x"), ErrorCode::MalformedModule);
  EXPECT_EQ(code(*noop_, std::string(129, 'a')), ErrorCode::InvalidArgument);
  EXPECT_EQ(code(*noop_, "bad \xff utf8"), ErrorCode::InvalidArgument);
  EXPECT_EQ(code(*noop_, std::string(128, 'a')), ErrorCode::EngineFailure);
  // 128 characters, more than 128 bytes.
  std::string wide;
  for (int i = 0; i < 128; ++i)
    wide += "\xc3\xa9";
  EXPECT_EQ(code(*minimal_, wide), ErrorCode::EngineFailure);
  EXPECT_EQ(reg.list_modules().size(), 2u);
}

TEST_F(RegistryTest, InitializePersistsAValidArtifact) {
  ModuleRegistry reg(data(), *executor_);
  auto id = reg.register_module(*noop_, "noop").module_id;
  auto d = reg.initialize(id);
  EXPECT_EQ(d.state, ModuleState::Initialized);
  ASSERT_TRUE(d.artifact_path);
  EXPECT_EQ(*d.artifact_path, "artifacts/" + id.hex() + ".limesart");
  EXPECT_TRUE(container::looks_valid(testkit::read_file(reg.artifact_path(id))));
  EXPECT_EQ(reg.compile_count(), 1u);

  // A second initialize finds the artifact and does nothing.
  reg.initialize(id);
  EXPECT_EQ(reg.compile_count(), 1u);

  auto j = index_json();
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["hash_algo"], "sha256");
  EXPECT_EQ(j["entries"][0]["state"], "Initialized");
  EXPECT_EQ(j["compile_count"], 1);
}

TEST_F(RegistryTest, GetOrCompileCountsMissesAndHits) {
  ModuleRegistry reg(data(), *executor_);
  auto id = reg.register_module(*noop_, "noop").module_id;

  auto first = reg.get_or_compile(id);
  EXPECT_FALSE(first.cache_hit);
  for (int i = 0; i < 5; ++i)
    EXPECT_TRUE(reg.get_or_compile(id).cache_hit);
  EXPECT_EQ(reg.compile_count(), 1u);
  EXPECT_EQ(reg.hit_count(), 5u);
  // Every lookup is either a compile or a hit.
  EXPECT_EQ(reg.compile_count() + reg.hit_count(), 6u);

  SandboxDir sbx;
  SandboxPolicy p;
  p.preopen_dir = sbx.path();
  auto result = executor_->instantiate(reg.get_or_compile(id).handle, p, {})
                    ->invoke(testkit::to_bytes("via cache"));
  EXPECT_EQ(testkit::to_string(result.value()), "via cache");
}

TEST_F(RegistryTest, StatePersistsAcrossRestart) {
  ContentHash a, b;
  {
    ModuleRegistry reg(data(), *executor_);
    a = reg.register_module(*noop_, "noop").module_id;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    b = reg.register_module(*minimal_, "minimal").module_id;
    reg.initialize(a);
    reg.get_or_compile(a);
    reg.get_or_compile(a);
  }
  ModuleRegistry reg(data(), *executor_);
  auto list = reg.list_modules();
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].module_id, b); // newest first
  EXPECT_EQ(list[1].module_id, a);
  EXPECT_EQ(list[1].state, ModuleState::Initialized);
  EXPECT_EQ(list[0].name, "minimal");
  EXPECT_EQ(reg.compile_count(), 1u);
  EXPECT_EQ(reg.hit_count(), 2u); // flushed by the destructor
  EXPECT_TRUE(reg.get_or_compile(a).cache_hit);
}

TEST_F(RegistryTest, CorruptArtifactIsRecompiledSilently) {
  ModuleRegistry reg(data(), *executor_);
  auto id = reg.register_module(*noop_, "noop").module_id;
  reg.initialize(id);

  auto bytes = testkit::read_file(reg.artifact_path(id));
  bytes.resize(bytes.size() / 2);
  overwrite(reg.artifact_path(id), bytes);

  auto lookup = reg.get_or_compile(id);
  EXPECT_FALSE(lookup.cache_hit);
  EXPECT_EQ(reg.compile_count(), 2u);
  EXPECT_TRUE(reg.get_or_compile(id).cache_hit);
}

TEST_F(RegistryTest, ForeignFingerprintIsRecompiled) {
  ModuleRegistry reg(data(), *executor_);
  auto id = reg.register_module(*noop_, "noop").module_id;
  auto art = reg.get_or_compile(id).artifact;
  art.fingerprint.engine_version = "0.0.1";
  overwrite(reg.artifact_path(id), container::encode(art));

  EXPECT_FALSE(reg.get_or_compile(id).cache_hit);
  EXPECT_EQ(reg.compile_count(), 2u);
  EXPECT_TRUE(reg.get_or_compile(id).cache_hit);
}

TEST_F(RegistryTest, RestartRepairsDanglingArtifactReferences) {
  ContentHash id;
  {
    ModuleRegistry reg(data(), *executor_);
    id = reg.register_module(*noop_, "noop").module_id;
    reg.initialize(id);
  }
  fs::remove(data() / "artifacts" / (id.hex() + ".limesart"));
  {
    ModuleRegistry reg(data(), *executor_);
    auto d = reg.find(id);
    ASSERT_TRUE(d);
    EXPECT_EQ(d->state, ModuleState::Registered);
    EXPECT_FALSE(d->artifact_path);
  }
  EXPECT_TRUE(index_json()["entries"][0]["artifact_path"].is_null());
}

TEST_F(RegistryTest, UnknownAndRemovedModules) {
  ModuleRegistry reg(data(), *executor_);
  auto ghost = ContentHash::of(testkit::to_bytes("ghost"));
  EXPECT_THROW(reg.initialize(ghost), Error);
  EXPECT_THROW(reg.get_or_compile(ghost), Error);
  EXPECT_THROW(reg.remove(ghost), Error);

  auto id = reg.register_module(*noop_, "noop").module_id;
  reg.remove(id);
  EXPECT_FALSE(reg.find(id));
  try {
    reg.get_or_compile(id);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownModule);
  }
}

TEST_F(RegistryTest, UncompilableModuleIsACompileFailure) {
  ModuleRegistry reg(data(), *executor_);
  // Registers fine (structurally valid) but has no entrypoint.
  auto id = reg.register_module(testkit::wat_to_wasm("(component)"), "empty").module_id;
  try {
    reg.initialize(id);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::CompileFailure);
  }
  EXPECT_EQ(reg.find(id)->state, ModuleState::Registered);
}

TEST_F(RegistryTest, RejectsForeignHashAlgorithm) {
  {
    ModuleRegistry reg(data(), *executor_);
    reg.register_module(*noop_, "noop");
  }
  auto j = index_json();
  j["hash_algo"] = "blake3";
  std::ofstream(data() / "index.json") << j.dump();
  EXPECT_THROW({ ModuleRegistry reopened(data(), *executor_); }, Error);
}

TEST_F(RegistryTest, EveryFaultPointLeavesAConsistentStore) {
  // Interrupt initialize at each write step, then check what a restart sees.
  const std::vector<std::string> points = {
      "artifact-temp-partial", "artifact-temp-written", "artifact-renamed",
      "index-temp-partial",    "index-temp-written",    "index-renamed"};
  for (const auto &point : points) {
    SandboxDir root;
    const fs::path dir = root.path() / "data";
    ContentHash id;
    {
      ModuleRegistry reg(dir, *executor_);
      id = reg.register_module(*noop_, "noop").module_id;
      reg.set_fault_hook([&](std::string_view p) {
        if (p == point)
          throw InjectedCrash{std::string(p)};
      });
      EXPECT_THROW(reg.initialize(id), InjectedCrash) << point;
      reg.set_fault_hook({});
    }
    ModuleRegistry reg(dir, *executor_);
    auto d = reg.find(id);
    ASSERT_TRUE(d) << point;
    if (d->artifact_path)
      EXPECT_TRUE(container::looks_valid(testkit::read_file(dir / *d->artifact_path))) << point;
    else
      EXPECT_EQ(d->state, ModuleState::Registered) << point;
    for (const auto &entry : fs::recursive_directory_iterator(dir))
      EXPECT_NE(entry.path().extension(), ".tmp") << point;
    // The store is still usable.
    EXPECT_EQ(testkit::to_string(reg.module_bytes(id)), testkit::to_string(*noop_));
    reg.initialize(id);
    EXPECT_EQ(reg.find(id)->state, ModuleState::Initialized) << point;
  }
}

TEST_F(RegistryTest, ConcurrentLookupsAgree) {
  ModuleRegistry reg(data(), *executor_);
  auto id = reg.register_module(*noop_, "noop").module_id;
  reg.initialize(id);
  std::vector<std::thread> threads;
  std::atomic<int> hits{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 5; ++i)
        hits += reg.get_or_compile(id).cache_hit;
    });
  for (auto &t : threads)
    t.join();
  EXPECT_EQ(hits.load(), 40);
  EXPECT_EQ(reg.hit_count(), 40u);
  EXPECT_EQ(reg.compile_count(), 1u);
}

TEST(RegistryDefaults, DataDirFromEnvironment) {
  ::setenv("LIMES_DATA_DIR", "/tmp/limes-env-test", 1);
  EXPECT_EQ(ModuleRegistry::default_data_dir(), fs::path("/tmp/limes-env-test"));
  ::unsetenv("LIMES_DATA_DIR");
  EXPECT_EQ(ModuleRegistry::default_data_dir(), fs::path("limes-data"));
}
