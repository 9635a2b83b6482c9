#include "sathi/config.hpp"

#include <cstdlib>
#include <set>

#include <yaml-cpp/yaml.h>

namespace sathi::config {

namespace fs = std::filesystem;

AppConfig default_config(const fs::path& data_dir) {
  AppConfig c;
  c.registry_path = data_dir / "registry.yaml";
  c.index_path = data_dir / "index.bin";
  c.template_path = data_dir / "prompt_template.yaml";
  c.dict_en_path = data_dir / "lingua" / "dict_en.tsv";
  c.dict_hi_path = data_dir / "lingua" / "dict_hi.tsv";
  return c;
}

std::string_view to_string(BackendMode mode) noexcept {
  return mode == BackendMode::Http ? "http" : "stub";
}

BackendMode parse_backend_mode(std::string_view s) {
  if (s == "stub") return BackendMode::Stub;
  if (s == "http") return BackendMode::Http;
  throw ConfigError("backend mode must be 'stub' or 'http', got '" + std::string(s) + "'");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "host",          "port",          "registry",        "index",
      "template",      "dict_en",       "dict_hi",         "journal",
      "snapshot",      "audit_log",     "backend_mode",    "general_llm_url",
      "domain_llm_url", "llm_api_key",  "llm_model",       "llm_timeout_ms",
      "embedder",      "embedder_url",  "translator",      "translator_url",
      "score_floor",   "max_clarification_turns",          "context_limit",
      "reserve_for_answer",             "rephrase_questions", "cors_origin",
      "heartbeat_seconds",              "snapshot_every",  "fsync_journal",
      "worker_threads"};
  return keys;
}

void validate(const AppConfig& c) {
  if (c.port < 0 || c.port > 65535) throw ConfigError("port out of range");
  if (c.max_clarification_turns < 0) throw ConfigError("max_clarification_turns must be >= 0");
  if (c.reserve_for_answer >= c.context_limit) {
    throw ConfigError("reserve_for_answer must be below context_limit");
  }
  if (c.embedder != "hashing" && c.embedder != "http") {
    throw ConfigError("embedder must be 'hashing' or 'http'");
  }
  if (c.translator != "identity" && c.translator != "http") {
    throw ConfigError("translator must be 'identity' or 'http'");
  }
  if (c.worker_threads < 1) throw ConfigError("worker_threads must be >= 1");
}

}  // namespace

void apply_file(AppConfig& c, const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid YAML: " + e.what());
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError("config file must be a mapping");
  const auto base = path.parent_path();
  auto resolve = [&](const YAML::Node& n) {
    fs::path p = n.as<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  try {
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
      const auto& v = kv.second;
      if (key == "host") c.host = v.as<std::string>();
      else if (key == "port") c.port = v.as<int>();
      else if (key == "registry") c.registry_path = resolve(v);
      else if (key == "index") c.index_path = resolve(v);
      else if (key == "template") c.template_path = resolve(v);
      else if (key == "dict_en") c.dict_en_path = resolve(v);
      else if (key == "dict_hi") c.dict_hi_path = resolve(v);
      else if (key == "journal") c.journal_path = resolve(v);
      else if (key == "snapshot") c.snapshot_path = resolve(v);
      else if (key == "audit_log") c.audit_log_path = resolve(v);
      else if (key == "backend_mode") c.backend_mode = parse_backend_mode(v.as<std::string>());
      else if (key == "general_llm_url") c.general_llm_url = v.as<std::string>();
      else if (key == "domain_llm_url") c.domain_llm_url = v.as<std::string>();
      else if (key == "llm_api_key") c.llm_api_key = v.as<std::string>();
      else if (key == "llm_model") c.llm_model = v.as<std::string>();
      else if (key == "llm_timeout_ms") c.llm_timeout = std::chrono::milliseconds(v.as<long>());
      else if (key == "embedder") c.embedder = v.as<std::string>();
      else if (key == "embedder_url") c.embedder_url = v.as<std::string>();
      else if (key == "translator") c.translator = v.as<std::string>();
      else if (key == "translator_url") c.translator_url = v.as<std::string>();
      else if (key == "score_floor") c.score_floor = v.as<double>();
      else if (key == "max_clarification_turns") c.max_clarification_turns = v.as<int>();
      else if (key == "context_limit") c.context_limit = v.as<std::size_t>();
      else if (key == "reserve_for_answer") c.reserve_for_answer = v.as<std::size_t>();
      else if (key == "rephrase_questions") c.rephrase_questions = v.as<bool>();
      else if (key == "cors_origin") c.cors_origin = v.as<std::string>();
      else if (key == "heartbeat_seconds") c.heartbeat_seconds = v.as<int>();
      else if (key == "snapshot_every") c.snapshot_every = v.as<int>();
      else if (key == "fsync_journal") c.fsync_journal = v.as<bool>();
      else if (key == "worker_threads") c.worker_threads = v.as<int>();
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError("bad value in config file: " + std::string(e.what()));
  }
  validate(c);
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
}

void apply_env(AppConfig& c, const EnvLookup& env) {
  auto number = [](const std::string& name, const std::string& v) {
    try {
      std::size_t used = 0;
      const long n = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw ConfigError(name + " must be an integer, got '" + v + "'");
    }
  };
  if (auto v = env("BACKEND_MODE")) c.backend_mode = parse_backend_mode(*v);
  if (auto v = env("GENERAL_LLM_URL")) c.general_llm_url = *v;
  if (auto v = env("DOMAIN_LLM_URL")) c.domain_llm_url = *v;
  if (auto v = env("LLM_API_KEY")) c.llm_api_key = *v;
  if (auto v = env("LLM_TIMEOUT_MS")) {
    c.llm_timeout = std::chrono::milliseconds(number("LLM_TIMEOUT_MS", *v));
  }
  if (auto v = env("SATHI_HOST")) c.host = *v;
  if (auto v = env("SATHI_PORT")) c.port = static_cast<int>(number("SATHI_PORT", *v));
  if (auto v = env("SATHI_REGISTRY")) c.registry_path = *v;
  if (auto v = env("SATHI_INDEX")) c.index_path = *v;
  if (auto v = env("SATHI_TEMPLATE")) c.template_path = *v;
  if (auto v = env("SATHI_JOURNAL")) c.journal_path = *v;
  if (auto v = env("SATHI_SCORE_FLOOR")) {
    try {
      c.score_floor = std::stod(*v);
    } catch (const std::exception&) {
      throw ConfigError("SATHI_SCORE_FLOOR must be a number");
    }
  }
  if (auto v = env("SATHI_MAX_CLARIFICATION_TURNS")) {
    c.max_clarification_turns = static_cast<int>(number("SATHI_MAX_CLARIFICATION_TURNS", *v));
  }
  validate(c);
}

dialogue::DialogueConfig dialogue_config(const AppConfig& c) {
  dialogue::DialogueConfig d;
  d.max_clarification_turns = c.max_clarification_turns;
  d.score_floor = c.score_floor;
  d.rephrase_questions = c.rephrase_questions;
  d.budget = {c.context_limit, c.reserve_for_answer};
  return d;
}

dialogue::Deps Runtime::deps(Clock clock) const {
  dialogue::Deps d;
  d.registry = registry.get();
  d.router = router.get();
  d.index = index.get();
  d.embedder = embedder.get();
  d.prompt_template = prompt_template;
  d.dict_en = dict_en.get();
  d.dict_hi = dict_hi.get();
  d.translator = translator.get();
  d.config = dialogue_config(config);
  d.clock = std::move(clock);
  return d;
}

Runtime build_runtime(const AppConfig& cfg) {
  Runtime rt;
  rt.config = cfg;
  rt.registry = std::make_shared<const schema::Registry>(schema::load_registry(cfg.registry_path));
  rt.prompt_template =
      std::make_shared<const prompting::PromptTemplate>(prompting::load_template(cfg.template_path));
  rt.dict_en = std::make_shared<const lingua::CharFreqDict>(lingua::load_dict(cfg.dict_en_path));
  rt.dict_hi = std::make_shared<const lingua::CharFreqDict>(lingua::load_dict(cfg.dict_hi_path));

  rt.audit = cfg.audit_log_path.empty() ? std::make_shared<backends::AuditLog>()
                                        : std::make_shared<backends::AuditLog>(cfg.audit_log_path);
  std::shared_ptr<backends::LlmBackend> general;
  std::shared_ptr<backends::LlmBackend> domain;
  if (cfg.backend_mode == BackendMode::Http) {
    if (cfg.general_llm_url.empty() || cfg.domain_llm_url.empty()) {
      throw ConfigError("http backend mode needs GENERAL_LLM_URL and DOMAIN_LLM_URL");
    }
    general = std::make_shared<backends::HttpChatBackend>(backends::HttpChatBackend::Options{
        cfg.general_llm_url, cfg.llm_model, cfg.llm_api_key, cfg.llm_timeout});
    domain = std::make_shared<backends::HttpChatBackend>(backends::HttpChatBackend::Options{
        cfg.domain_llm_url, cfg.llm_model, cfg.llm_api_key, cfg.llm_timeout});
  } else {
    general = std::make_shared<backends::ScriptedStub>("stub-general");
    domain = std::make_shared<backends::ScriptedStub>("stub-domain");
  }
  rt.router = std::make_shared<backends::ModelRouter>(general, domain, rt.audit);

  if (cfg.embedder == "http") {
    if (cfg.embedder_url.empty()) throw ConfigError("http embedder needs embedder_url");
    rt.embedder = std::make_shared<retrieval::HttpEmbedder>(cfg.embedder_url, cfg.llm_timeout);
  } else {
    rt.embedder = std::make_shared<retrieval::HashingEmbedder>();
  }
  if (cfg.translator == "http") {
    if (cfg.translator_url.empty()) throw ConfigError("http translator needs translator_url");
    rt.translator =
        std::make_shared<lingua::HttpTranslator>(cfg.translator_url, cfg.llm_api_key, cfg.llm_timeout);
  } else {
    rt.translator = std::make_shared<lingua::IdentityTranslator>();
  }

  if (!cfg.index_path.empty()) {
    try {
      rt.index = std::make_shared<const retrieval::VectorIndex>(retrieval::load_index(cfg.index_path));
    } catch (const std::exception& e) {
      rt.index_error = e.what();
    }
  } else {
    rt.index_error = "no index configured";
  }
  return rt;
}

}  // namespace sathi::config
