#include <gtest/gtest.h>

#include "sathi/common.hpp"

namespace sathi {
namespace {

TEST(Utf8, RoundTripsMixedScripts) {
  const std::string s = "onion प्याज 🌱";
  const auto cps = decode_utf8(s);
  EXPECT_EQ(cps.size(), 13u);
  EXPECT_EQ(encode_utf8(cps), s);
  EXPECT_TRUE(is_valid_utf8(s));
}

TEST(Utf8, RejectsMalformedBytes) {
  EXPECT_FALSE(is_valid_utf8("\xff"));
  EXPECT_FALSE(is_valid_utf8("\xc3"));           // truncated
  EXPECT_FALSE(is_valid_utf8("\xc0\xaf"));       // overlong '/'
  EXPECT_FALSE(is_valid_utf8("\xed\xa0\x80"));   // surrogate
  EXPECT_THROW(decode_utf8("ab\xfe"), Error);
  EXPECT_EQ(codepoint_count("a\xffz"), 3u);
}

TEST(Text, WordsAndTrim) {
  EXPECT_EQ(trim("  a b \n"), "a b");
  EXPECT_EQ(count_words(" one  two\tthree\n"), 3u);
  EXPECT_EQ(count_words(""), 0u);
  const auto w = split_words("x  yy z");
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[1], "yy");
  EXPECT_EQ(to_lower_ascii("GrApE प"), "grape प");
}

TEST(Text, SplitLinesKeepsEmptyInnerLines) {
  const auto lines = split_lines("a\n\nb\r\nc");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1], "");
  EXPECT_EQ(lines[2], "b");
}

// Published FNV-1a 64 test vectors.
TEST(Hashing, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64(std::string_view("foobar")), 0x85944171f73967e8ULL);
}

TEST(Hashing, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hashing, RandomHexLength) {
  const auto a = random_hex(16);
  EXPECT_EQ(a.size(), 32u);
  EXPECT_NE(a, random_hex(16));
}

// RFC 4648 section 10.
TEST(Base64, RfcVectors) {
  const std::pair<const char*, const char*> cases[] = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},
      {"foo", "Zm9v"},  {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
      {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, enc] : cases) {
    EXPECT_EQ(base64_encode(plain), enc);
    EXPECT_EQ(base64_decode(enc), plain);
  }
  EXPECT_THROW(base64_decode("Zm9v!"), Error);
}

TEST(Clock, FixedStep) {
  auto c = fixed_step_clock(100, 5);
  EXPECT_EQ(c(), 100);
  EXPECT_EQ(c(), 105);
  EXPECT_EQ(c(), 110);
}

TEST(Clock, Iso8601) {
  EXPECT_EQ(format_iso8601(0), "1970-01-01T00:00:00.000Z");
  EXPECT_EQ(format_iso8601(1700000000123), "2023-11-14T22:13:20.123Z");
}

TEST(Files, MissingFileIsIoError) {
  EXPECT_THROW(read_file("/nonexistent/sathi/file"), IoError);
}

}  // namespace
}  // namespace sathi
