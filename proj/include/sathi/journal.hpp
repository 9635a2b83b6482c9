#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sathi/common.hpp"

namespace sathi::journal {

// Record types, one JSON object per line. Every record carries "type", "seq"
// and "ts" (epoch ms).
inline constexpr std::string_view kServiceStarted = "service_started";
inline constexpr std::string_view kHeartbeat = "heartbeat";
inline constexpr std::string_view kSessionCreated = "session_created";
inline constexpr std::string_view kTurn = "turn";            // step ran; full state attached
inline constexpr std::string_view kRejected = "rejected";    // message refused before the step
inline constexpr std::string_view kFeedback = "feedback";
inline constexpr std::string_view kSessionClosed = "session_closed";

class JournalCorrupt : public Error {
 public:
  JournalCorrupt(const std::string& what, std::size_t line)
      : Error("journal line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Append-only line-delimited journal. Each append reaches the kernel before
/// it returns, so a killed process loses nothing that was acknowledged.
class Journal {
 public:
  explicit Journal(std::filesystem::path path, bool fsync_each = false);
  ~Journal();

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  /// Sets "seq" and writes the record. Returns the byte offset after it.
  std::uint64_t append(nlohmann::json record);

  std::uint64_t offset() const;
  std::uint64_t next_seq() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  bool fsync_each_;
  mutable std::mutex mu_;
  int fd_ = -1;
  std::uint64_t offset_ = 0;
  std::uint64_t seq_ = 1;
};

/// Parses journal text. A final line without a newline is a torn write from a
/// crash and is dropped; any other malformed line throws JournalCorrupt.
std::vector<nlohmann::json> parse_journal(std::string_view text, std::size_t first_line = 1);
std::vector<nlohmann::json> read_journal(const std::filesystem::path& path,
                                         std::uint64_t from_offset = 0);

}  // namespace sathi::journal
