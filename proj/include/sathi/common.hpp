#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sathi {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// UTF-8

bool is_valid_utf8(std::string_view bytes);

/// Decodes UTF-8 into code points. Throws Error on malformed input.
std::u32string decode_utf8(std::string_view bytes);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::u32string_view cps);

/// Number of code points; counts malformed bytes as one each.
std::size_t codepoint_count(std::string_view bytes);

// ---------------------------------------------------------------------------
// ASCII text helpers. "Whitespace" throughout the library means the six
// ASCII whitespace characters; a word is a maximal non-whitespace run.

constexpr bool is_space(char32_t c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

std::string_view trim(std::string_view s) noexcept;
std::vector<std::string_view> split_words(std::string_view s);
std::size_t count_words(std::string_view s) noexcept;
std::string to_lower_ascii(std::string_view s);
/// Splits on '\n' and drops a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view s);

// ---------------------------------------------------------------------------
// Hashing

std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view s,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

std::string sha256_hex(std::string_view data);

/// Cryptographically random bytes rendered as lowercase hex.
std::string random_hex(std::size_t n_bytes);

std::string base64_encode(std::string_view data);
/// Throws Error on malformed input.
std::string base64_decode(std::string_view data);

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

// ---------------------------------------------------------------------------
// Time

/// Milliseconds since the Unix epoch. Injected everywhere a timestamp is
/// recorded so that replays are byte-identical under a fixed clock.
using Clock = std::function<std::int64_t()>;

Clock system_clock();
/// A clock that returns start, start + step, start + 2*step, ...
Clock fixed_step_clock(std::int64_t start_ms, std::int64_t step_ms = 0);

std::string format_iso8601(std::int64_t epoch_ms);

}  // namespace sathi
