#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "sathi/common.hpp"

namespace sathi::backends {

enum class Role { System, Human, Assistant };
enum class ModelClass { General, Domain };

std::string_view to_string(Role role) noexcept;
std::string_view to_string(ModelClass cls) noexcept;

struct ChatMessage {
  Role role = Role::Human;
  std::string content;
};

struct LlmRequest {
  std::vector<ChatMessage> messages;
  int max_tokens = 256;
  double temperature = 0.0;
  ModelClass model_class = ModelClass::General;

  /// Empty when the request is well formed.
  std::vector<std::string> problems() const;
  /// "role:\ncontent" blocks joined by newlines; what stubs match against.
  std::string flatten() const;
};

inline constexpr int kDefaultMaxAttempts = 3;
inline constexpr double kClassificationTemperature = 0.0;
inline constexpr double kAnswerTemperature = 0.7;

class BackendUnavailable : public Error {
 public:
  BackendUnavailable(const std::string& backend, const std::string& detail)
      : Error("backend '" + backend + "' unavailable: " + detail), backend_(backend) {}
  const std::string& backend() const noexcept { return backend_; }

 private:
  std::string backend_;
};

/// The model's reply did not follow the requested output format.
class OutputContractError : public Error {
 public:
  using Error::Error;
};
class ParseFailure : public OutputContractError {
 public:
  using OutputContractError::OutputContractError;
};
class DisallowedValue : public OutputContractError {
 public:
  using OutputContractError::OutputContractError;
};

class ExhaustedRetries : public Error {
 public:
  ExhaustedRetries(std::string last_response, int attempts)
      : Error("no valid reply after " + std::to_string(attempts) + " attempt(s)"),
        last_response_(std::move(last_response)),
        attempts_(attempts) {}
  const std::string& last_response() const noexcept { return last_response_; }
  int attempts() const noexcept { return attempts_; }

 private:
  std::string last_response_;
  int attempts_;
};

/// Every model call goes through this interface. Implementations must be
/// safe for concurrent calls.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Throws BackendUnavailable on transport failure.
  virtual std::string complete(const LlmRequest& req) = 0;
  virtual std::string name() const = 0;
  virtual bool deterministic() const noexcept { return false; }
};

/// Speaks the common chat-completions wire format:
/// POST {model, messages: [{role, content}], max_tokens, temperature}
///   -> {choices: [{message: {content}}]}
class HttpChatBackend final : public LlmBackend {
 public:
  struct Options {
    std::string url;  // full endpoint URL
    std::string model = "default";
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
  };

  explicit HttpChatBackend(Options opts);
  std::string complete(const LlmRequest& req) override;
  std::string name() const override { return "http:" + opts_.url; }

 private:
  Options opts_;
};

/// Offline backend. Ordered rules are tried first; if none matches, a
/// keyword-overlap heuristic answers classification and extraction prompts,
/// echoes clarification questions, and composes an answer from the last
/// reference passage. Never throws.
class ScriptedStub final : public LlmBackend {
 public:
  using Matcher = std::function<bool(const LlmRequest&, const std::string& flat)>;

  explicit ScriptedStub(std::string name = "stub");

  /// Responds with `response` when the flattened request contains `needle`.
  ScriptedStub& on(std::string needle, std::string response);
  /// Consumes `responses` in order on successive matches; the last repeats.
  ScriptedStub& on_sequence(std::string needle, std::vector<std::string> responses);
  ScriptedStub& on_match(Matcher matcher, std::vector<std::string> responses);

  std::string complete(const LlmRequest& req) override;
  std::string name() const override { return name_; }
  bool deterministic() const noexcept override { return true; }

  std::size_t calls() const;

 private:
  struct Rule {
    Matcher matcher;
    std::vector<std::string> responses;
    std::size_t next = 0;
  };

  std::string name_;
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::size_t calls_ = 0;
};

/// The rule-free part of ScriptedStub, usable on its own.
std::string heuristic_reply(const std::string& flat_request);

/// Fails every call with BackendUnavailable.
class UnavailableBackend final : public LlmBackend {
 public:
  explicit UnavailableBackend(std::string name = "unavailable") : name_(std::move(name)) {}
  std::string complete(const LlmRequest&) override {
    throw BackendUnavailable(name_, "simulated outage");
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
};

struct AuditRecord {
  std::int64_t timestamp_ms = 0;
  ModelClass model_class = ModelClass::General;
  std::string backend;
  std::string request_digest;  // sha256 of LlmRequest::flatten()
  std::string response;
  std::int64_t latency_ms = 0;
  std::string error;

  nlohmann::json to_json() const;
};

/// Append-only; optionally mirrored to a line-delimited file.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(const std::filesystem::path& path);

  void append(AuditRecord record);
  std::vector<AuditRecord> records() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<AuditRecord> records_;
  std::optional<std::ofstream> file_;
};

/// Sends domain requests to the domain backend and everything else to the
/// general one, auditing every call.
class ModelRouter {
 public:
  ModelRouter(std::shared_ptr<LlmBackend> general, std::shared_ptr<LlmBackend> domain,
              std::shared_ptr<AuditLog> audit = std::make_shared<AuditLog>(),
              Clock clock = system_clock());

  LlmBackend& route(ModelClass cls) const noexcept;
  std::string complete(const LlmRequest& req);

  AuditLog& audit() const noexcept { return *audit_; }

 private:
  std::shared_ptr<LlmBackend> general_;
  std::shared_ptr<LlmBackend> domain_;
  std::shared_ptr<AuditLog> audit_;
  Clock clock_;
};

std::string complete(ModelRouter& router, const LlmRequest& req);

/// First well-formed JSON object embedded anywhere in `text` (prose, code
/// fences and all).
std::optional<nlohmann::json> find_first_object(std::string_view text);

/// Value of `key` in the first JSON object of the response. With `allowed`,
/// the value must equal one entry exactly (case-sensitive).
std::string parse_single_key(std::string_view response, std::string_view key,
                             std::optional<std::span<const std::string>> allowed = std::nullopt);

template <typename T>
struct RetryOutcome {
  T value;
  int attempts = 0;
};

inline constexpr std::string_view kCorrectiveLine =
    "Your previous reply did not follow the required output format. Reply again "
    "and output only the JSON blob requested, with no preamble or explanation.";

/// Re-issues `req` with a corrective system line until `parser` accepts the
/// reply. Parsers signal rejection by throwing OutputContractError.
template <typename Parser>
auto complete_with_retry(ModelRouter& router, LlmRequest req, Parser&& parser,
                         int max_attempts = kDefaultMaxAttempts)
    -> RetryOutcome<std::invoke_result_t<Parser&, const std::string&>> {
  if (max_attempts < 1) max_attempts = 1;
  std::string last;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    last = router.complete(req);
    try {
      return {parser(last), attempt};
    } catch (const OutputContractError&) {
      req.messages.push_back({Role::System, std::string(kCorrectiveLine)});
    }
  }
  throw ExhaustedRetries(std::move(last), max_attempts);
}

}  // namespace sathi::backends
