#include "sathi/journal.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

namespace sathi::journal {

using nlohmann::json;

Journal::Journal(std::filesystem::path path, bool fsync_each)
    : path_(std::move(path)), fsync_each_(fsync_each) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw IoError("cannot open journal " + path_.string() + ": " + std::strerror(errno));
  }
  // Continue numbering after whatever is already there. A torn tail from a
  // crash mid-write is cut off so the next record starts on a clean line.
  auto existing = read_file(path_);
  if (!existing.empty() && existing.back() != '\n') {
    const auto keep = existing.rfind('\n') == std::string::npos ? 0 : existing.rfind('\n') + 1;
    if (::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
      throw IoError("cannot cut torn journal tail: " + std::string(std::strerror(errno)));
    }
    existing.resize(keep);
  }
  for (const auto& rec : parse_journal(existing)) {
    seq_ = std::max<std::uint64_t>(seq_, rec.value("seq", std::uint64_t{0}) + 1);
  }
  struct stat st {};
  ::fstat(fd_, &st);
  offset_ = static_cast<std::uint64_t>(st.st_size);
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t Journal::append(json record) {
  std::lock_guard lock(mu_);
  record["seq"] = seq_;
  auto line = record.dump();
  line += '\n';
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("journal write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (fsync_each_) ::fsync(fd_);
  ++seq_;
  offset_ += line.size();
  return offset_;
}

std::uint64_t Journal::offset() const {
  std::lock_guard lock(mu_);
  return offset_;
}

std::uint64_t Journal::next_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

std::vector<json> parse_journal(std::string_view text, std::size_t first_line) {
  std::vector<json> out;
  std::size_t line_no = first_line;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;  // torn tail
    const auto line = trim(text.substr(pos, nl - pos));
    if (!line.empty()) {
      auto rec = json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.is_object()) throw JournalCorrupt("not a JSON object", line_no);
      if (!rec.contains("type") || !rec["type"].is_string()) {
        throw JournalCorrupt("record has no type", line_no);
      }
      out.push_back(std::move(rec));
    }
    ++line_no;
    pos = nl + 1;
  }
  return out;
}

std::vector<json> read_journal(const std::filesystem::path& path, std::uint64_t from_offset) {
  if (!std::filesystem::exists(path)) return {};
  const auto text = read_file(path);
  if (from_offset > text.size()) throw JournalCorrupt("snapshot offset beyond end of journal", 0);
  std::size_t line = 1;
  for (std::size_t i = 0; i < from_offset; ++i) line += text[i] == '\n';
  return parse_journal(std::string_view(text).substr(from_offset), line);
}

}  // namespace sathi::journal
