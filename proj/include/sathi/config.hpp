#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "sathi/backends.hpp"
#include "sathi/dialogue.hpp"
#include "sathi/lingua.hpp"
#include "sathi/prompting.hpp"
#include "sathi/retrieval.hpp"
#include "sathi/schema.hpp"

namespace sathi::config {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class BackendMode { Stub, Http };

/// Service and CLI settings. Sources, lowest priority first: defaults, the
/// YAML config file, environment variables, command-line flags.
struct AppConfig {
  std::string host = "127.0.0.1";
  int port = 8080;

  std::filesystem::path registry_path;
  std::filesystem::path index_path;
  std::filesystem::path template_path;
  std::filesystem::path dict_en_path;
  std::filesystem::path dict_hi_path;
  std::filesystem::path journal_path = "var/journal.jsonl";
  std::filesystem::path snapshot_path;  // empty: journal path + ".snapshot"
  std::filesystem::path audit_log_path;  // empty: audit kept in memory only

  BackendMode backend_mode = BackendMode::Stub;
  std::string general_llm_url;
  std::string domain_llm_url;
  std::string llm_api_key;
  std::string llm_model = "default";
  std::chrono::milliseconds llm_timeout{30000};

  std::string embedder = "hashing";  // or "http"
  std::string embedder_url;
  std::string translator = "identity";  // or "http"
  std::string translator_url;

  double score_floor = retrieval::kDefaultScoreFloor;
  int max_clarification_turns = 6;
  std::size_t context_limit = 2048;
  std::size_t reserve_for_answer = 512;
  bool rephrase_questions = true;

  std::string cors_origin = "*";
  int heartbeat_seconds = 60;
  int snapshot_every = 200;
  bool fsync_journal = false;
  int worker_threads = 64;
};

/// Defaults point at the bundled data directory.
AppConfig default_config(const std::filesystem::path& data_dir);

/// Relative paths in the file resolve against the file's directory.
void apply_file(AppConfig& cfg, const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// GENERAL_LLM_URL, DOMAIN_LLM_URL, LLM_API_KEY, LLM_TIMEOUT_MS, BACKEND_MODE,
/// plus SATHI_* overrides for the service settings.
void apply_env(AppConfig& cfg, const EnvLookup& env = process_env());

std::string_view to_string(BackendMode mode) noexcept;
BackendMode parse_backend_mode(std::string_view s);

/// Everything the dialogue engine needs, built from a config.
struct Runtime {
  AppConfig config;
  std::shared_ptr<const schema::Registry> registry;
  std::shared_ptr<backends::AuditLog> audit;
  std::shared_ptr<backends::ModelRouter> router;
  std::shared_ptr<const retrieval::VectorIndex> index;  // null when not loaded
  std::string index_error;
  std::shared_ptr<const retrieval::Embedder> embedder;
  std::shared_ptr<const prompting::PromptTemplate> prompt_template;
  std::shared_ptr<const lingua::CharFreqDict> dict_en;
  std::shared_ptr<const lingua::CharFreqDict> dict_hi;
  std::shared_ptr<lingua::TranslationClient> translator;

  dialogue::Deps deps(Clock clock = system_clock()) const;
};

/// Loads registry, template and dictionaries (errors propagate) and the index
/// (a missing or bad index leaves `index` null and sets `index_error`).
Runtime build_runtime(const AppConfig& cfg);

dialogue::DialogueConfig dialogue_config(const AppConfig& cfg);

}  // namespace sathi::config
