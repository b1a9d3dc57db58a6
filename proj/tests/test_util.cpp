#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"
#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

using namespace ttpmap;

TEST(Util, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, UuidV5MatchesReference) {
  // Python: uuid.uuid5(uuid.NAMESPACE_DNS, "python.org")
  EXPECT_EQ(uuid_v5("6ba7b810-9dad-11d1-80b4-00c04fd430c8", "python.org"),
            "886313e1-3b8a-5372-9b90-0c9aee199e5d");
}

TEST(Util, Base64RoundTrip) {
  const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 252, 253};
  const auto text = base64_encode(bytes);
  EXPECT_EQ(text, "AAEC+vv8/Q==");
  EXPECT_EQ(base64_decode(text), bytes);
  EXPECT_TRUE(base64_decode("").empty());
}

TEST(Util, DoublesRoundTripBitExact) {
  const std::vector<double> v{0.0, -0.0, 1.0 / 3.0, -1e300, std::numeric_limits<double>::denorm_min(), 42.5};
  const auto back = decode_doubles(encode_doubles(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
    EXPECT_EQ(back[i], v[i]);
  }
}

TEST(Util, TimestampShape) {
  const auto ts = utc_timestamp_now();
  ASSERT_EQ(ts.size(), 24u);
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts.back(), 'Z');
}

TEST(Util, AtomicWriteReplaces) {
  fx::TempDir dir;
  const auto p = dir / "out.json";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  EXPECT_EQ(read_file(p), "second");
  EXPECT_THROW(read_file(dir / "missing"), ParseError);
}

TEST(Util, DeriveSeedStableAndSalted) {
  EXPECT_EQ(derive_seed(42, "T1003"), derive_seed(42, "T1003"));
  EXPECT_NE(derive_seed(42, "T1003"), derive_seed(42, "T1005"));
  EXPECT_NE(derive_seed(42, "T1003"), derive_seed(43, "T1003"));
}
