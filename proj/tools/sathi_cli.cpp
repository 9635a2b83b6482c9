// sathi: operator command line for the advisory engine.
//
// Exit codes: 0 ok, 2 usage or bad input, 3 corrupted data, 4 backend
// unavailable.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sathi/config.hpp"
#include "sathi/curation.hpp"
#include "sathi/dialogue.hpp"
#include "sathi/journal.hpp"
#include "sathi/lingua.hpp"
#include "sathi/metrics.hpp"
#include "sathi/retrieval.hpp"
#include "sathi/schema.hpp"
#include "sathi/service.hpp"

#ifndef SATHI_DATA_DIR
#define SATHI_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kInput = 2;
constexpr int kCorrupt = 3;
constexpr int kBackend = 4;

int fail(int code, const std::string& message) {
  std::cerr << "sathi: " << message << "\n";
  return code;
}

// Common settings shared by chat and serve.
struct RuntimeFlags {
  std::string config_path;
  std::string registry;
  std::string index;
  std::string template_path;
  std::string backend_mode;
  std::string journal;
  std::optional<double> score_floor;
  std::optional<int> max_turns;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "YAML config file")->check(CLI::ExistingFile);
    cmd->add_option("--registry", registry, "registry YAML");
    cmd->add_option("--index", index, "index file");
    cmd->add_option("--template", template_path, "prompt template YAML");
    cmd->add_option("--backend-mode", backend_mode, "stub or http")
        ->check(CLI::IsMember({"stub", "http"}));
    cmd->add_option("--journal", journal, "session journal path");
    cmd->add_option("--score-floor", score_floor, "minimum retrieval score");
    cmd->add_option("--max-clarification-turns", max_turns, "clarification cap");
  }

  sathi::config::AppConfig resolve() const {
    auto cfg = sathi::config::default_config(SATHI_DATA_DIR);
    if (!config_path.empty()) sathi::config::apply_file(cfg, config_path);
    sathi::config::apply_env(cfg);
    if (!registry.empty()) cfg.registry_path = registry;
    if (!index.empty()) cfg.index_path = index;
    if (!template_path.empty()) cfg.template_path = template_path;
    if (!backend_mode.empty()) cfg.backend_mode = sathi::config::parse_backend_mode(backend_mode);
    if (!journal.empty()) cfg.journal_path = journal;
    if (score_floor) cfg.score_floor = *score_floor;
    if (max_turns) cfg.max_clarification_turns = *max_turns;
    return cfg;
  }
};

// ---------------------------------------------------------------------------

int cmd_curate(const std::string& input, const std::string& out_dir,
               const std::string& config_path, unsigned threads, bool line_delimited) {
  if (!fs::exists(input)) return fail(kInput, "input not found: " + input);
  sathi::curation::FilterConfig cfg;
  if (!config_path.empty()) cfg = sathi::curation::load_filter_config(config_path);
  const auto docs = sathi::curation::read_raw_docs(input);
  const auto result = sathi::curation::run_pipeline(docs, cfg, threads);
  const auto summary = sathi::curation::summarize(result);
  fs::create_directories(out_dir);
  sathi::write_file(fs::path(out_dir) / "passages.jsonl", sathi::curation::to_jsonl(result.passages));
  sathi::write_file(fs::path(out_dir) / "reports.jsonl", sathi::curation::to_jsonl(result.reports));
  sathi::write_file(fs::path(out_dir) / "summary.json", sathi::curation::summary_json(summary));
  if (line_delimited) {
    std::cout << sathi::curation::summary_json(summary) << "\n";
  } else {
    char ratio[32] = "n/a";
    if (summary.retention_ratio) std::snprintf(ratio, sizeof ratio, "%.4f", *summary.retention_ratio);
    std::cout << "documents: " << summary.docs_in << " in, " << summary.docs_out << " retained\n"
              << "passages: " << summary.passages << "\n"
              << "retention: " << ratio << "\n";
    for (const auto& [name, n] : summary.filter_counts) {
      std::cout << "  " << name << ": " << n << "\n";
    }
  }
  return kOk;
}

int cmd_index_build(const std::string& passages_path, const std::string& out, const std::string& embedder_mode,
                    const std::string& embedder_url, bool force, bool line_delimited) {
  if (!fs::exists(passages_path)) return fail(kInput, "passages not found: " + passages_path);
  if (fs::exists(out) && !force) return fail(kInput, out + " exists; pass --force to overwrite");
  const auto passages = sathi::curation::read_passages(passages_path);
  std::unique_ptr<sathi::retrieval::Embedder> embedder;
  if (embedder_mode == "http") {
    if (embedder_url.empty()) return fail(kInput, "--embedder-url is required with --embedder http");
    embedder = std::make_unique<sathi::retrieval::HttpEmbedder>(embedder_url, std::chrono::seconds(60));
  } else {
    embedder = std::make_unique<sathi::retrieval::HashingEmbedder>();
  }
  const auto index = sathi::retrieval::build_index(passages, *embedder);
  sathi::retrieval::save_index(index, out);
  if (line_delimited) {
    std::cout << json{{"indexed", index.size()}, {"path", out}, {"embedder", embedder->name()}}.dump()
              << "\n";
  } else {
    std::cout << "indexed " << index.size() << " passages -> " << out << "\n";
  }
  return kOk;
}

int cmd_search(const std::string& index_path, const std::string& query, std::size_t k,
               bool line_delimited) {
  if (!fs::exists(index_path)) return fail(kInput, "index not found: " + index_path);
  const auto index = sathi::retrieval::load_index(index_path);
  const sathi::retrieval::HashingEmbedder embedder;
  const auto q = embedder.embed(query);
  const auto results = sathi::retrieval::search(index, q.span(), k);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (line_delimited) {
      std::cout << json{{"rank", i + 1}, {"passage_id", r.passage_id}, {"score", r.score},
                        {"text", r.text}}
                       .dump()
                << "\n";
    } else {
      auto snippet = r.text.substr(0, 80);
      for (auto& c : snippet) {
        if (c == '\n') c = ' ';
      }
      std::printf("%zu\t%.6f\t%s\t%s\n", i + 1, r.score, r.passage_id.c_str(), snippet.c_str());
    }
  }
  return kOk;
}

int cmd_registry_validate(const std::string& path, bool line_delimited) {
  const auto text = sathi::read_file(path);
  sathi::schema::Registry reg;
  try {
    reg = sathi::schema::parse_registry(text);
  } catch (const sathi::schema::ParseError& e) {
    return fail(kInput, e.what());
  }
  const auto violations = sathi::schema::validate_registry(reg);
  if (!violations.empty()) {
    for (const auto& v : violations) {
      if (line_delimited) {
        std::cout << json{{"path", v.path}, {"message", v.message}}.dump() << "\n";
      } else {
        std::cout << v.path << ": " << v.message << "\n";
      }
    }
    return kInput;
  }
  std::size_t intents = 0;
  for (const auto& c : reg.crops) intents += c.intents.size();
  if (line_delimited) {
    json crops = json::object();
    for (const auto& c : reg.crops) crops[c.id] = c.intents.size();
    std::cout << json{{"valid", true}, {"version", reg.version}, {"crops", crops}}.dump() << "\n";
  } else {
    std::cout << "registry " << reg.version << " is valid: " << reg.crops.size() << " crops, "
              << intents << " intents\n";
    for (const auto& c : reg.crops) std::cout << "  " << c.id << ": " << c.intents.size() << " intents\n";
  }
  return kOk;
}

int cmd_build_dict(const std::string& lang, const std::string& corpus, const std::string& out) {
  const auto language = sathi::lingua::parse_tag(lang);
  if (!language) return fail(kInput, "language must be en or hi");
  if (!fs::exists(corpus)) return fail(kInput, "corpus not found: " + corpus);
  const auto lines = sathi::split_lines(sathi::read_file(corpus));
  const auto dict = sathi::lingua::build_char_dict(lines, *language, fs::path(corpus).filename().string());
  sathi::write_file(out, sathi::lingua::serialize_dict(dict));
  std::cout << "wrote " << dict.freq.size() << " characters -> " << out << "\n";
  return kOk;
}

int cmd_detect(const RuntimeFlags& flags, const std::string& text) {
  const auto cfg = flags.resolve();
  const auto en = sathi::lingua::load_dict(cfg.dict_en_path);
  const auto hi = sathi::lingua::load_dict(cfg.dict_hi_path);
  const auto v = sathi::lingua::detect_language(text, en, hi);
  std::printf("%s\ten=%.6f\thi=%.6f\n", std::string(sathi::lingua::to_tag(v.language)).c_str(),
              v.score_en, v.score_hi);
  return kOk;
}

std::string slot_summary(const sathi::dialogue::SessionState& s) {
  std::string out = "[phase=" + std::string(sathi::dialogue::to_string(s.phase));
  if (s.category) out += " category=" + std::string(sathi::dialogue::to_string(*s.category));
  if (s.crop_id) out += " crop=" + *s.crop_id;
  if (s.intent_id) out += " intent=" + *s.intent_id;
  if (s.pending_slot) out += " pending=" + *s.pending_slot;
  out += "]";
  if (!s.slots.empty()) {
    out += "\nslots:";
    for (const auto& [id, v] : s.slots) out += " " + id + "=" + (v ? *v : "?");
  }
  return out;
}

int cmd_chat(const RuntimeFlags& flags, const std::string& script, const std::string& language) {
  const auto cfg = flags.resolve();
  const auto rt = sathi::config::build_runtime(cfg);
  std::optional<sathi::lingua::Language> lang;
  if (!language.empty()) {
    lang = sathi::lingua::parse_tag(language);
    if (!lang) return fail(kInput, "--language must be en or hi");
  }
  std::ifstream script_in;
  if (!script.empty()) {
    script_in.open(script);
    if (!script_in) return fail(kInput, "cannot read script " + script);
  }
  std::istream& in = script.empty() ? std::cin : script_in;
  const bool interactive = script.empty();
  // Scripted runs use a fixed clock so that journals are reproducible.
  const auto clock = interactive ? sathi::system_clock() : sathi::fixed_step_clock(0, 1000);
  auto deps = rt.deps(clock);

  std::unique_ptr<sathi::journal::Journal> journal;
  if (!flags.journal.empty()) journal = std::make_unique<sathi::journal::Journal>(flags.journal);

  auto state = sathi::dialogue::new_session(interactive ? sathi::random_hex(16) : "scripted-session",
                                            sathi::dialogue::Modality::Text, lang);
  if (journal) {
    journal->append({{"type", sathi::journal::kSessionCreated}, {"ts", clock()},
                     {"session_id", state.session_id}, {"state", sathi::dialogue::to_json(state)}});
  }
  if (!rt.index) std::cerr << "sathi: note: no index loaded (" << rt.index_error << "); answers run without context\n";
  if (interactive) std::cout << "Ask about grapes or onions. /quit to exit.\n";

  bool backend_down = false;
  std::string line;
  while (true) {
    if (interactive) std::cout << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const auto text = sathi::trim(line);
    if (text.empty() || text.front() == '#') continue;
    if (text == "/quit") break;
    if (!interactive) std::cout << "> " << text << "\n";
    if (state.phase == sathi::dialogue::Phase::Closed) break;
    auto [next, out] = sathi::dialogue::step(state, text, deps);
    state = std::move(next);
    backend_down = backend_down || out.backend_unavailable;
    std::cout << "sathi: " << out.reply_text << "\n" << slot_summary(state) << "\n";
    if (journal) {
      json events = json::array();
      for (const auto& e : out.events) events.push_back(e.to_json());
      journal->append({{"type", sathi::journal::kTurn}, {"ts", clock()},
                       {"session_id", state.session_id},
                       {"turn_index", state.transcript.size() - 1},
                       {"status", out.backend_unavailable ? 502 : 200}, {"latency_ms", 0},
                       {"phase", sathi::dialogue::to_string(state.phase)}, {"events", events},
                       {"state", sathi::dialogue::to_json(state)}});
    }
  }
  return backend_down ? kBackend : kOk;
}

int cmd_serve(const RuntimeFlags& flags, const std::string& host, std::optional<int> port) {
  auto cfg = flags.resolve();
  if (!host.empty()) cfg.host = host;
  if (port) cfg.port = *port;

  // Signals are consumed by a dedicated thread; block them everywhere else.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  sathi::service::Service service(sathi::config::build_runtime(cfg));
  sathi::service::HttpServer server(service, cfg);
  const int bound = server.bind();
  if (bound < 0) return fail(kInput, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  std::cout << "listening on " << cfg.host << ":" << bound << std::endl;
  if (!service.runtime().index) {
    std::cerr << "sathi: warning: index not loaded: " << service.runtime().index_error << "\n";
  }

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.serve();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  service.write_snapshot();
  return kOk;
}

int cmd_eval(const std::string& journal_path, const std::string& annotations, const std::string& format) {
  if (!fs::exists(journal_path)) return fail(kInput, "journal not found: " + journal_path);
  std::optional<fs::path> ann;
  if (!annotations.empty()) {
    if (!fs::exists(annotations)) return fail(kInput, "annotations not found: " + annotations);
    ann = annotations;
  }
  const auto report = sathi::metrics::compute_metrics(journal_path, ann);
  std::cout << sathi::metrics::render_report(report, sathi::metrics::parse_format(format));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sathi: retrieval-augmented advisory engine for grape and onion growers"};
  app.require_subcommand(1);
  std::string output = "text";
  app.add_option("--output", output, "text or line_delimited")
      ->check(CLI::IsMember({"text", "line_delimited"}));

  // curate
  auto* curate = app.add_subcommand("curate", "clean and filter raw documents into passages");
  std::string cur_in, cur_out, cur_cfg;
  unsigned cur_threads = 1;
  curate->add_option("--input", cur_in, "raw documents (JSON lines)")->required();
  curate->add_option("--out", cur_out, "output directory")->required();
  curate->add_option("--config", cur_cfg, "filter config YAML");
  curate->add_option("--threads", cur_threads, "worker threads")->check(CLI::Range(1u, 256u));

  // index build
  auto* index = app.add_subcommand("index", "vector index commands");
  index->require_subcommand(1);
  auto* build = index->add_subcommand("build", "embed passages into an index file");
  std::string ib_passages, ib_out, ib_embedder = "hashing", ib_url;
  bool ib_force = false;
  build->add_option("--passages", ib_passages, "passages (JSON lines)")->required();
  build->add_option("--out", ib_out, "index file")->required();
  build->add_option("--embedder", ib_embedder, "hashing or http")->check(CLI::IsMember({"hashing", "http"}));
  build->add_option("--embedder-url", ib_url, "embedding endpoint for --embedder http");
  build->add_flag("--force", ib_force, "overwrite an existing index");

  // search
  auto* search = app.add_subcommand("search", "query an index");
  std::string s_index, s_query;
  std::size_t s_k = 1;
  search->add_option("--index", s_index, "index file")->required();
  search->add_option("--query", s_query, "query text")->required();
  search->add_option("-k", s_k, "results to return")->check(CLI::PositiveNumber);

  // registry validate
  auto* registry = app.add_subcommand("registry", "intent registry commands");
  registry->require_subcommand(1);
  auto* validate = registry->add_subcommand("validate", "check a registry file");
  std::string r_path = std::string(SATHI_DATA_DIR) + "/registry.yaml";
  validate->add_option("--registry", r_path, "registry YAML")->check(CLI::ExistingFile);

  // build-dict
  auto* dict = app.add_subcommand("build-dict", "build a character frequency dictionary");
  std::string d_lang, d_corpus, d_out;
  dict->add_option("--lang", d_lang, "en or hi")->required();
  dict->add_option("--corpus", d_corpus, "one sentence per line")->required();
  dict->add_option("--out", d_out, "dictionary file")->required();

  // detect
  auto* detect = app.add_subcommand("detect", "detect the language of a text");
  RuntimeFlags detect_flags;
  std::string det_text;
  detect->add_option("--text", det_text, "text")->required();
  detect->add_option("--config", detect_flags.config_path, "YAML config file")->check(CLI::ExistingFile);

  // chat
  auto* chat = app.add_subcommand("chat", "talk to the engine in the terminal");
  RuntimeFlags chat_flags;
  chat_flags.add_to(chat);
  std::string c_script, c_lang;
  chat->add_option("--script", c_script, "replay user lines from a file");
  chat->add_option("--language", c_lang, "fix the session language (en or hi)");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  RuntimeFlags serve_flags;
  serve_flags.add_to(serve);
  std::string sv_host;
  std::optional<int> sv_port;
  serve->add_option("--host", sv_host, "bind address");
  serve->add_option("--port", sv_port, "port; 0 picks a free one")->check(CLI::Range(0, 65535));

  // eval
  auto* eval = app.add_subcommand("eval", "compute evaluation metrics from a journal");
  std::string e_journal, e_ann, e_format;
  eval->add_option("--journal", e_journal, "session journal")->required();
  eval->add_option("--annotations", e_ann, "annotation file (JSON lines)");
  eval->add_option("--format", e_format, "text_table or line_delimited")
      ->check(CLI::IsMember({"text_table", "line_delimited"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }
  const bool ld = output == "line_delimited";

  try {
    if (*curate) return cmd_curate(cur_in, cur_out, cur_cfg, cur_threads, ld);
    if (*build) return cmd_index_build(ib_passages, ib_out, ib_embedder, ib_url, ib_force, ld);
    if (*search) return cmd_search(s_index, s_query, s_k, ld);
    if (*validate) return cmd_registry_validate(r_path, ld);
    if (*dict) return cmd_build_dict(d_lang, d_corpus, d_out);
    if (*detect) return cmd_detect(detect_flags, det_text);
    if (*chat) return cmd_chat(chat_flags, c_script, c_lang);
    if (*serve) return cmd_serve(serve_flags, sv_host, sv_port);
    if (*eval) {
      if (e_format.empty()) e_format = ld ? "line_delimited" : "text_table";
      return cmd_eval(e_journal, e_ann, e_format);
    }
  } catch (const sathi::retrieval::FormatError& e) {
    return fail(kCorrupt, e.what());
  } catch (const sathi::retrieval::ChecksumError& e) {
    return fail(kCorrupt, e.what());
  } catch (const sathi::journal::JournalCorrupt& e) {
    return fail(kCorrupt, e.what());
  } catch (const sathi::backends::BackendUnavailable& e) {
    return fail(kBackend, e.what());
  } catch (const sathi::retrieval::EmbedderError& e) {
    return fail(kBackend, e.what());
  } catch (const std::exception& e) {
    return fail(kInput, e.what());
  }
  return kInput;
}
