#include "limes/wasm_binary.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace limes;

namespace {

const std::vector<std::uint8_t> kCorePreamble = {0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00};
const std::vector<std::uint8_t> kComponentPreamble = {0x00, 0x61, 0x73, 0x6d,
                                                      0x0d, 0x00, 0x01, 0x00};

std::vector<std::uint8_t> with(std::vector<std::uint8_t> base,
                               std::initializer_list<std::uint8_t> tail) {
  base.insert(base.end(), tail);
  return base;
}

} // namespace

TEST(WasmBinary, AcceptsBundledComponents) {
  for (auto file : {"noop.wasm", "mandelbrot.wasm", "image.wasm", "spin.wasm"}) {
    auto check = check_wasm_binary(testkit::component(file));
    EXPECT_TRUE(check.ok) << file << ": " << check.reason;
    EXPECT_EQ(check.kind, BinaryKind::Component) << file;
  }
}

TEST(WasmBinary, ClassifiesLayers) {
  auto core = check_wasm_binary(kCorePreamble);
  EXPECT_TRUE(core.ok);
  EXPECT_EQ(core.kind, BinaryKind::CoreModule);

  auto comp = check_wasm_binary(kComponentPreamble);
  EXPECT_TRUE(comp.ok);
  EXPECT_EQ(comp.kind, BinaryKind::Component);

  // A custom section with a two-byte payload frames correctly.
  EXPECT_TRUE(check_wasm_binary(with(kCorePreamble, {0x00, 0x02, 0x01, 'a'})).ok);
}

TEST(WasmBinary, RejectsStructuralDamage) {
  EXPECT_FALSE(check_wasm_binary({}).ok);
  EXPECT_FALSE(check_wasm_binary(std::vector<std::uint8_t>(kCorePreamble.begin(),
                                                           kCorePreamble.begin() + 5))
                   .ok);
  EXPECT_FALSE(check_wasm_binary(testkit::to_bytes("not a wasm file")).ok);

  auto wrong_version = kCorePreamble;
  wrong_version[4] = 0x02;
  EXPECT_FALSE(check_wasm_binary(wrong_version).ok);

  // Section claims more bytes than remain.
  EXPECT_FALSE(check_wasm_binary(with(kCorePreamble, {0x01, 0x05, 0x00})).ok);
  // Unterminated LEB128 size.
  EXPECT_FALSE(check_wasm_binary(with(kCorePreamble, {0x01, 0x80, 0x80})).ok);
  // Size wider than 32 bits.
  EXPECT_FALSE(check_wasm_binary(with(kCorePreamble, {0x01, 0xff, 0xff, 0xff, 0xff, 0x7f})).ok);
}

TEST(WasmBinary, TruncatedComponentIsRejected) {
  auto noop = testkit::component("noop.wasm");
  std::size_t rejected = 0, tried = 0;
  for (std::size_t cut = 9; cut < noop.size(); cut += noop.size() / 50 + 1) {
    ++tried;
    rejected += !check_wasm_binary(std::span(noop.data(), cut)).ok;
  }
  // A cut can land exactly on a section boundary; nearly all must fail.
  EXPECT_GE(rejected + 2, tried);
}
