#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sathi/config.hpp"
#include "sathi/dialogue.hpp"
#include "sathi/journal.hpp"

namespace httplib {
class Server;
}

namespace sathi::service {

// ---------------------------------------------------------------------------
// Speech

class AudioFormatError : public Error {
 public:
  using Error::Error;
};
class SpeechUnavailable : public Error {
 public:
  using Error::Error;
};

struct WavInfo {
  std::uint16_t format = 0;  // 1 = PCM
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
  std::size_t data_bytes = 0;
};

/// Reads the RIFF/WAVE header. Throws AudioFormatError when malformed.
WavInfo parse_wav(std::string_view bytes);
/// Accepts 16 kHz mono 16-bit PCM only.
void validate_speech_wav(std::string_view bytes);
/// Builds a PCM WAV file; used by tests and tools.
std::string make_wav(const std::vector<std::int16_t>& samples, std::uint32_t sample_rate,
                     std::uint16_t channels = 1);

class SpeechAdapter {
 public:
  virtual ~SpeechAdapter() = default;
  /// Input is already validated as 16 kHz mono PCM WAV.
  virtual std::string transcribe(std::string_view wav) = 0;
  virtual std::string synthesize(const std::string& text, lingua::Language language) = 0;
};

/// Default build: no speech models are wired in.
class StubSpeechAdapter final : public SpeechAdapter {
 public:
  std::string transcribe(std::string_view) override {
    throw SpeechUnavailable("speech recognition is not configured on this server; send text");
  }
  std::string synthesize(const std::string&, lingua::Language) override {
    throw SpeechUnavailable("speech synthesis is not configured on this server");
  }
};

// ---------------------------------------------------------------------------
// Service

struct Response {
  int status = 200;
  nlohmann::json body;
  /// Set for non-JSON bodies (text reports).
  std::string text;
  std::string content_type = "application/json";
};

/// Transport-independent request handlers over a journaled session store.
/// Construction replays the snapshot and journal, so a restarted service
/// serves every session from its last acknowledged state.
class Service {
 public:
  explicit Service(config::Runtime runtime,
                   std::shared_ptr<SpeechAdapter> speech = std::make_shared<StubSpeechAdapter>(),
                   Clock clock = system_clock());
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response create_session(const nlohmann::json& body);
  Response post_message(const std::string& session_id, const nlohmann::json& body);
  Response get_session(const std::string& session_id) const;
  Response post_feedback(const std::string& session_id, const nlohmann::json& body);
  Response close_session(const std::string& session_id);
  Response health() const;
  Response metrics(std::string_view format = "json") const;
  Response reload_template();

  void heartbeat();
  /// Writes {offset, sessions} so that recovery can skip the journal prefix.
  void write_snapshot();

  std::size_t session_count() const;
  const config::Runtime& runtime() const noexcept { return rt_; }
  journal::Journal& journal() noexcept { return *journal_; }

 private:
  struct Entry {
    mutable std::mutex mu;
    dialogue::SessionState state;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void recover();
  void apply_record(const nlohmann::json& rec);
  void note_turn();
  dialogue::Deps deps() const;
  nlohmann::json session_view(const dialogue::SessionState& s) const;
  void reject(const std::string& id, int status, const std::string& reason);

  config::Runtime rt_;
  std::shared_ptr<SpeechAdapter> speech_;
  Clock clock_;
  std::unique_ptr<journal::Journal> journal_;
  std::filesystem::path snapshot_path_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;

  mutable std::mutex template_mu_;
  std::shared_ptr<const prompting::PromptTemplate> template_;

  std::mutex snapshot_mu_;
  std::atomic<int> turns_since_snapshot_{0};
};

/// Mounts the HTTP API on a cpp-httplib server.
class HttpServer {
 public:
  HttpServer(Service& service, const config::AppConfig& cfg);
  ~HttpServer();

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind();
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  void start_heartbeat();

  Service& service_;
  config::AppConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
  std::thread heartbeat_;
  std::mutex hb_mu_;
  std::condition_variable hb_cv_;
  bool stopping_ = false;
};

}  // namespace sathi::service
