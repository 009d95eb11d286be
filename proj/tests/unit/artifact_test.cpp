#include "limes/artifact.hpp"
#include "limes/error.hpp"
#include "limes/fingerprint.hpp"

#include <gtest/gtest.h>

using namespace limes;

namespace {

EngineFingerprint sample_fingerprint() {
  return EngineFingerprint{"wasmtime", "49.0.2", "x86_64-unknown-linux-gnu",
                           {"wasi-p2", "cranelift", "component-model", "cranelift"}}
      .normalize();
}

CompiledArtifact sample_artifact() {
  CompiledArtifact a;
  a.source_hash = ContentHash::of(std::vector<std::uint8_t>{1, 2, 3});
  a.fingerprint = sample_fingerprint();
  a.blob = {0x7f, 'E', 'L', 'F', 0, 1, 2, 3, '\n', 0xff};
  a.created_at = std::chrono::system_clock::now();
  return a;
}

} // namespace

TEST(Fingerprint, NormalizeSortsAndDeduplicates) {
  auto fp = sample_fingerprint();
  EXPECT_EQ(fp.feature_flags,
            (std::vector<std::string>{"component-model", "cranelift", "wasi-p2"}));
  EXPECT_EQ(fp.canonical_line(),
            "engine=wasmtime;version=49.0.2;target=x86_64-unknown-linux-gnu;"
            "features=component-model,cranelift,wasi-p2");
}

TEST(Fingerprint, ParseInvertsCanonicalLine) {
  auto fp = sample_fingerprint();
  auto back = EngineFingerprint::parse(fp.canonical_line());
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, fp);

  EngineFingerprint empty{"e", "1", "t", {}};
  auto empty_back = EngineFingerprint::parse(empty.canonical_line());
  ASSERT_TRUE(empty_back);
  EXPECT_EQ(*empty_back, empty);
}

TEST(Fingerprint, ParseRejectsMalformedLines) {
  EXPECT_FALSE(EngineFingerprint::parse(""));
  EXPECT_FALSE(EngineFingerprint::parse("engine=a;version=b;target=c"));
  EXPECT_FALSE(EngineFingerprint::parse("version=b;engine=a;target=c;features="));
  EXPECT_FALSE(EngineFingerprint::parse("engine=a;version=b;target=c;features=z,a"));
  EXPECT_FALSE(EngineFingerprint::parse("engine=a;version=b;target=c;features=\n"));
}

TEST(Container, EncodeDecodeRoundTrip) {
  auto a = sample_artifact();
  auto bytes = container::encode(a);
  ASSERT_GE(bytes.size(), container::kMagic.size() + 1);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "LIMESART");
  EXPECT_EQ(bytes[8], container::kVersion);
  EXPECT_TRUE(container::looks_valid(bytes));

  auto back = container::decode(bytes, a.source_hash, a.created_at);
  EXPECT_EQ(back.fingerprint, a.fingerprint);
  EXPECT_EQ(back.blob, a.blob);
  EXPECT_EQ(back.source_hash, a.source_hash);
}

TEST(Container, RejectsDamagedHeaders) {
  const auto good = container::encode(sample_artifact());
  auto expect_corrupt = [](std::vector<std::uint8_t> bytes) {
    EXPECT_FALSE(container::looks_valid(bytes));
    try {
      container::decode(bytes, ContentHash{}, {});
      ADD_FAILURE() << "decode accepted a damaged container";
    } catch (const Error &e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptArtifact);
    }
  };

  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_corrupt(bad_magic);

  auto bad_version = good;
  bad_version[8] = 2;
  expect_corrupt(bad_version);

  // Every prefix that cuts into the header or leaves no blob is rejected.
  const auto header_end =
      static_cast<std::size_t>(std::find(good.begin() + 9, good.end(), '\n') - good.begin());
  for (std::size_t len = 0; len <= header_end + 1; ++len)
    expect_corrupt(std::vector<std::uint8_t>(good.begin(), good.begin() + len));

  auto bad_line = good;
  bad_line[9] = 'X'; // "engine=" becomes "Xngine="
  expect_corrupt(bad_line);
}
