#include "limes/clock.hpp"
#include "limes/hash.hpp"
#include "limes/uuid.hpp"

#include <gtest/gtest.h>

#include <set>
#include <unordered_set>

using namespace limes;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

} // namespace

TEST(ContentHash, MatchesPublishedSha256Vectors) {
  EXPECT_EQ(ContentHash::of(bytes_of("")).hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(ContentHash::of(bytes_of("abc")).hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(ContentHash::of(bytes_of("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")).hex(),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST(ContentHash, HexRoundTripAndRejection) {
  auto h = ContentHash::of(bytes_of("limes"));
  auto back = ContentHash::from_hex(h.hex());
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, h);

  EXPECT_FALSE(ContentHash::from_hex(""));
  EXPECT_FALSE(ContentHash::from_hex(h.hex().substr(1)));
  EXPECT_FALSE(ContentHash::from_hex(h.hex() + "0"));
  std::string bad = h.hex();
  bad[5] = 'g';
  EXPECT_FALSE(ContentHash::from_hex(bad));
  std::string upper = h.hex();
  for (auto &c : upper)
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  ASSERT_TRUE(ContentHash::from_hex(upper));
  EXPECT_EQ(ContentHash::from_hex(upper)->hex(), h.hex());
}

TEST(ContentHash, DistinctInputsDistinctHashes) {
  std::unordered_set<ContentHash> seen;
  for (int i = 0; i < 256; ++i)
    seen.insert(ContentHash::of(std::vector<std::uint8_t>(static_cast<std::size_t>(i), 7)));
  EXPECT_EQ(seen.size(), 256u);
}

TEST(Base64, Rfc4648Vectors) {
  const std::pair<std::string, std::string> vectors[] = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},         {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto &[plain, encoded] : vectors) {
    EXPECT_EQ(base64_encode(bytes_of(plain)), encoded);
    auto decoded = base64_decode(encoded);
    ASSERT_TRUE(decoded) << encoded;
    EXPECT_EQ(*decoded, plain);
  }
}

TEST(Base64, RoundTripsBinaryAndRejectsGarbage) {
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i)
    all[i] = static_cast<std::uint8_t>(i);
  for (std::size_t len = 0; len <= all.size(); len += 17) {
    std::span<const std::uint8_t> part(all.data(), len);
    auto decoded = base64_decode(base64_encode(part));
    ASSERT_TRUE(decoded);
    EXPECT_EQ(std::vector<std::uint8_t>(decoded->begin(), decoded->end()),
              std::vector<std::uint8_t>(part.begin(), part.end()));
  }
  EXPECT_FALSE(base64_decode("abc"));
  EXPECT_FALSE(base64_decode("ab!d"));
}

TEST(Uuid, RandomIdsAreWellFormedAndUnique) {
  std::set<std::string> ids;
  for (int i = 0; i < 1000; ++i) {
    auto id = random_uuid();
    EXPECT_TRUE(is_uuid(id)) << id;
    ids.insert(id);
  }
  EXPECT_EQ(ids.size(), 1000u);
  EXPECT_FALSE(is_uuid("not-a-uuid"));
  EXPECT_FALSE(is_uuid("123e4567-e89b-12d3-a456-42661417400"));
  EXPECT_TRUE(is_uuid("123e4567-e89b-12d3-a456-426614174000"));
}

TEST(Clock, UtcFormatRoundTrip) {
  const UtcTime t = std::chrono::sys_days{std::chrono::year{2025} / 1 / 31} +
                    std::chrono::hours{12} + std::chrono::milliseconds{123};
  EXPECT_EQ(format_utc(t), "2025-01-31T12:00:00.123Z");
  EXPECT_EQ(parse_utc("2025-01-31T12:00:00.123Z"), t);
}

TEST(Clock, ToMs) {
  EXPECT_DOUBLE_EQ(to_ms(std::chrono::microseconds{1500}), 1.5);
  EXPECT_DOUBLE_EQ(to_ms(Duration{0}), 0.0);
}
