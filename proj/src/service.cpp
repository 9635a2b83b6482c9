#include "sathi/service.hpp"

#include <chrono>
#include <cstring>

#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>

#include "sathi/metrics.hpp"

namespace sathi::service {

using nlohmann::json;

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t le32(std::string_view b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t le16(std::string_view b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>(v >> 8);
}

}  // namespace

WavInfo parse_wav(std::string_view b) {
  if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE") {
    throw AudioFormatError("audio is not a RIFF/WAVE file");
  }
  WavInfo info;
  bool have_fmt = false;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const auto id = b.substr(pos, 4);
    const std::size_t size = le32(b, pos + 4);
    const auto body = pos + 8;
    if (size > b.size() - body) throw AudioFormatError("WAV chunk runs past end of file");
    if (id == "fmt ") {
      if (size < 16) throw AudioFormatError("WAV fmt chunk too short");
      info.format = le16(b, body);
      info.channels = le16(b, body + 2);
      info.sample_rate = le32(b, body + 4);
      info.bits_per_sample = le16(b, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      info.data_bytes = size;
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || !have_data) throw AudioFormatError("WAV file lacks fmt or data chunk");
  return info;
}

void validate_speech_wav(std::string_view bytes) {
  const auto info = parse_wav(bytes);
  if (info.format != 1 || info.bits_per_sample != 16) {
    throw AudioFormatError("audio must be 16-bit PCM");
  }
  if (info.sample_rate != 16000) {
    throw AudioFormatError("audio must be sampled at 16 kHz, got " +
                           std::to_string(info.sample_rate) + " Hz");
  }
  if (info.channels != 1) throw AudioFormatError("audio must be mono");
}

std::string make_wav(const std::vector<std::int16_t>& samples, std::uint32_t rate,
                     std::uint16_t channels) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out = "RIFF";
  put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, channels);
  put32(out, rate);
  put32(out, rate * channels * 2);
  put16(out, static_cast<std::uint16_t>(channels * 2));
  put16(out, 16);
  out += "data";
  put32(out, data_bytes);
  for (auto s : samples) put16(out, static_cast<std::uint16_t>(s));
  return out;
}

// ---------------------------------------------------------------------------
// Service

namespace {

Response error(int status, std::string code, std::string message) {
  return {status, {{"error", std::move(code)}, {"message", std::move(message)}}, {}, "application/json"};
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               since)
      .count();
}

}  // namespace

Service::Service(config::Runtime runtime, std::shared_ptr<SpeechAdapter> speech, Clock clock)
    : rt_(std::move(runtime)),
      speech_(std::move(speech)),
      clock_(std::move(clock)),
      template_(rt_.prompt_template) {
  snapshot_path_ = rt_.config.snapshot_path.empty()
                       ? std::filesystem::path(rt_.config.journal_path.string() + ".snapshot")
                       : rt_.config.snapshot_path;
  recover();
  journal_ = std::make_unique<journal::Journal>(rt_.config.journal_path, rt_.config.fsync_journal);
  journal_->append({{"type", journal::kServiceStarted}, {"ts", clock_()}});
}

Service::~Service() = default;

void Service::apply_record(const json& rec) {
  const auto type = rec.value("type", "");
  if (type != journal::kSessionCreated && type != journal::kTurn &&
      type != journal::kSessionClosed) {
    return;
  }
  auto state = dialogue::state_from_json(rec.at("state"));
  auto entry = std::make_shared<Entry>();
  entry->state = std::move(state);
  sessions_[entry->state.session_id] = std::move(entry);
}

void Service::recover() {
  std::uint64_t offset = 0;
  if (std::filesystem::exists(snapshot_path_)) {
    const auto snap = json::parse(read_file(snapshot_path_), nullptr, false);
    const bool usable = snap.is_object() && snap.contains("offset") &&
                        snap["offset"].get<std::uint64_t>() <=
                            (std::filesystem::exists(rt_.config.journal_path)
                                 ? std::filesystem::file_size(rt_.config.journal_path)
                                 : 0);
    if (usable) {
      offset = snap["offset"].get<std::uint64_t>();
      for (const auto& s : snap.at("sessions")) {
        auto entry = std::make_shared<Entry>();
        entry->state = dialogue::state_from_json(s);
        sessions_[entry->state.session_id] = std::move(entry);
      }
    }
  }
  for (const auto& rec : journal::read_journal(rt_.config.journal_path, offset)) apply_record(rec);
}

void Service::write_snapshot() {
  std::lock_guard snap_lock(snapshot_mu_);
  const auto offset = journal_->offset();
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, e] : sessions_) entries.push_back(e);
  }
  json sessions = json::array();
  for (const auto& e : entries) {
    std::lock_guard lock(e->mu);
    sessions.push_back(dialogue::to_json(e->state));
  }
  const json snap = {{"offset", offset}, {"sessions", std::move(sessions)}};
  const auto tmp = snapshot_path_.string() + ".tmp";
  write_file(tmp, snap.dump());
  std::filesystem::rename(tmp, snapshot_path_);
  turns_since_snapshot_ = 0;
}

void Service::note_turn() {
  if (rt_.config.snapshot_every <= 0) return;
  if (++turns_since_snapshot_ >= rt_.config.snapshot_every) {
    try {
      write_snapshot();
    } catch (const std::exception&) {
      // The journal alone is enough for recovery; try again next time.
    }
  }
}

void Service::heartbeat() { journal_->append({{"type", journal::kHeartbeat}, {"ts", clock_()}}); }

std::shared_ptr<Service::Entry> Service::find(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t Service::session_count() const {
  std::shared_lock lock(sessions_mu_);
  return sessions_.size();
}

dialogue::Deps Service::deps() const {
  auto d = rt_.deps(clock_);
  std::lock_guard lock(template_mu_);
  d.prompt_template = template_;
  return d;
}

json Service::session_view(const dialogue::SessionState& s) const {
  json view = dialogue::to_json(s);
  json slots = json::array();
  const schema::IntentDef* intent = nullptr;
  if (s.crop_id && s.intent_id) {
    if (const auto* crop = rt_.registry->find_crop(*s.crop_id)) intent = crop->find_intent(*s.intent_id);
  }
  for (const auto& [id, v] : s.slots) {
    const auto* def = intent ? intent->find_slot(id) : nullptr;
    slots.push_back({{"id", id},
                     {"display_name", def ? def->display_name : id},
                     {"filled", v.has_value()},
                     {"value", v ? json(*v) : json(nullptr)}});
  }
  view["slots"] = std::move(slots);
  if (intent) view["intent_display_name"] = intent->display_name;
  return view;
}

Response Service::create_session(const json& body) {
  if (!body.is_object()) return error(400, "bad_request", "body must be a JSON object");
  auto modality = dialogue::Modality::Text;
  if (const auto it = body.find("modality"); it != body.end()) {
    const auto m = it->is_string() ? dialogue::parse_modality(it->get<std::string>()) : std::nullopt;
    if (!m) return error(400, "bad_request", "modality must be 'text' or 'speech'");
    modality = *m;
  }
  std::optional<lingua::Language> language;
  if (const auto it = body.find("language"); it != body.end() && !it->is_null()) {
    const auto l = it->is_string() ? lingua::parse_tag(it->get<std::string>()) : std::nullopt;
    if (!l) return error(400, "bad_request", "language must be 'en' or 'hi'");
    language = *l;
  }
  auto entry = std::make_shared<Entry>();
  entry->state = dialogue::new_session(random_hex(16), modality, language);
  try {
    journal_->append({{"type", journal::kSessionCreated},
                      {"ts", clock_()},
                      {"session_id", entry->state.session_id},
                      {"state", dialogue::to_json(entry->state)}});
  } catch (const IoError& e) {
    return error(503, "store_unavailable", e.what());
  }
  json out = {{"session_id", entry->state.session_id},
              {"phase", dialogue::to_string(entry->state.phase)},
              {"modality", dialogue::to_string(modality)},
              {"language", language ? json(lingua::to_tag(*language)) : json(nullptr)}};
  {
    std::unique_lock lock(sessions_mu_);
    sessions_[entry->state.session_id] = std::move(entry);
  }
  return {201, std::move(out), {}, "application/json"};
}

void Service::reject(const std::string& id, int status, const std::string& reason) {
  try {
    journal_->append({{"type", journal::kRejected},
                      {"ts", clock_()},
                      {"session_id", id},
                      {"status", status},
                      {"reason", reason}});
  } catch (const IoError&) {
  }
}

Response Service::post_message(const std::string& id, const json& body) {
  const auto started = std::chrono::steady_clock::now();
  const auto entry = find(id);
  if (!entry) return error(404, "not_found", "unknown session");
  std::lock_guard lock(entry->mu);
  auto& state = entry->state;

  if (state.phase == dialogue::Phase::Closed) {
    reject(id, 409, "session closed");
    return error(409, "session_closed", "session is closed");
  }
  if (!body.is_object()) {
    reject(id, 400, "bad body");
    return error(400, "bad_request", "body must be a JSON object");
  }
  const bool has_text = body.contains("text");
  const bool has_audio = body.contains("audio");
  if (has_text == has_audio) {
    reject(id, 400, "need text or audio");
    return error(400, "bad_request", "send exactly one of 'text' or 'audio'");
  }

  std::string text;
  if (has_text) {
    if (!body["text"].is_string() || trim(body["text"].get<std::string>()).empty()) {
      reject(id, 400, "empty text");
      return error(400, "bad_request", "'text' must be a non-empty string");
    }
    text = body["text"].get<std::string>();
  } else {
    if (state.modality != dialogue::Modality::Speech) {
      reject(id, 422, "audio on text session");
      return error(422, "unprocessable_audio", "audio is only accepted on speech sessions");
    }
    std::string wav;
    try {
      if (!body["audio"].is_string()) throw AudioFormatError("'audio' must be base64 text");
      wav = base64_decode(body["audio"].get<std::string>());
      validate_speech_wav(wav);
    } catch (const Error& e) {
      reject(id, 422, e.what());
      return error(422, "unprocessable_audio", e.what());
    }
    try {
      text = speech_->transcribe(wav);
    } catch (const SpeechUnavailable& e) {
      reject(id, 501, e.what());
      return error(501, "speech_unavailable", e.what());
    }
  }

  if (!is_valid_utf8(text)) {
    reject(id, 400, "invalid utf-8");
    return error(400, "bad_request", "text must be valid UTF-8");
  }

  auto [next, out] = dialogue::step(state, text, deps());
  const auto latency = elapsed_ms(started);
  next.transcript.back().annotations["latency_ms"] = latency;
  const int status = out.backend_unavailable ? 502 : 200;
  const auto turn_index = next.transcript.size() - 1;

  json events = json::array();
  for (const auto& e : out.events) events.push_back(e.to_json());
  try {
    journal_->append({{"type", journal::kTurn},
                      {"ts", clock_()},
                      {"session_id", id},
                      {"turn_index", turn_index},
                      {"status", status},
                      {"latency_ms", latency},
                      {"phase", dialogue::to_string(next.phase)},
                      {"events", events},
                      {"state", dialogue::to_json(next)}});
  } catch (const IoError& e) {
    return error(503, "store_unavailable", e.what());
  }
  state = std::move(next);

  json res = {{"session_id", id},
              {"turn_index", turn_index},
              {"reply_text", out.reply_text},
              {"phase", dialogue::to_string(out.phase_after)},
              {"pending_question", out.is_question},
              {"pending_slot", state.pending_slot ? json(*state.pending_slot) : json(nullptr)},
              {"category", state.category ? json(dialogue::to_string(*state.category)) : json(nullptr)},
              {"intent_id", state.intent_id ? json(*state.intent_id) : json(nullptr)},
              {"passage_id", out.passage_id ? json(*out.passage_id) : json(nullptr)},
              {"latency_ms", latency},
              {"events", std::move(events)}};
  if (status == 502) res["error"] = "backend_unavailable";
  if (status == 200 && state.modality == dialogue::Modality::Speech) {
    try {
      res["audio"] = base64_encode(
          speech_->synthesize(out.reply_text, state.language.value_or(lingua::Language::En)));
    } catch (const SpeechUnavailable& e) {
      res["audio_error"] = e.what();
    }
  }
  note_turn();
  return {status, std::move(res), {}, "application/json"};
}

Response Service::get_session(const std::string& id) const {
  const auto entry = find(id);
  if (!entry) return error(404, "not_found", "unknown session");
  std::lock_guard lock(entry->mu);
  return {200, session_view(entry->state), {}, "application/json"};
}

Response Service::post_feedback(const std::string& id, const json& body) {
  const auto entry = find(id);
  if (!entry) return error(404, "not_found", "unknown session");
  if (!body.is_object()) return error(400, "bad_request", "body must be a JSON object");
  std::lock_guard lock(entry->mu);
  const auto& s = entry->state;

  const auto rating = body.find("rating");
  if (rating == body.end() || !rating->is_number_integer() || rating->get<int>() < 1 ||
      rating->get<int>() > 5) {
    return error(422, "invalid_feedback", "rating must be an integer from 1 to 5");
  }
  const auto turn = body.find("turn_index");
  if (turn == body.end() || !turn->is_number_integer() || turn->get<std::int64_t>() < 0 ||
      turn->get<std::size_t>() >= s.transcript.size() ||
      s.transcript[turn->get<std::size_t>()].author != dialogue::Author::System) {
    return error(422, "invalid_feedback", "turn_index must name a system turn of this session");
  }
  const auto helpful = body.find("helpful");
  if (helpful != body.end() && !helpful->is_boolean()) {
    return error(422, "invalid_feedback", "helpful must be a boolean");
  }
  const auto comment = body.find("comment");
  if (comment != body.end() && !comment->is_null() && !comment->is_string()) {
    return error(422, "invalid_feedback", "comment must be a string");
  }
  const auto now = clock_();
  json record = {{"session_id", id},
                 {"turn_index", turn->get<std::size_t>()},
                 {"rating", rating->get<int>()},
                 {"helpful", helpful != body.end() && helpful->get<bool>()},
                 {"comment", comment != body.end() ? *comment : json(nullptr)},
                 {"created_at", format_iso8601(now)}};
  json rec = record;
  rec["type"] = journal::kFeedback;
  rec["ts"] = now;
  try {
    journal_->append(std::move(rec));
  } catch (const IoError& e) {
    return error(503, "store_unavailable", e.what());
  }
  return {201, std::move(record), {}, "application/json"};
}

Response Service::close_session(const std::string& id) {
  const auto entry = find(id);
  if (!entry) return error(404, "not_found", "unknown session");
  std::lock_guard lock(entry->mu);
  if (entry->state.phase == dialogue::Phase::Closed) {
    return error(409, "session_closed", "session is already closed");
  }
  auto next = entry->state;
  next.phase = dialogue::Phase::Closed;
  next.pending_slot.reset();
  try {
    journal_->append({{"type", journal::kSessionClosed},
                      {"ts", clock_()},
                      {"session_id", id},
                      {"state", dialogue::to_json(next)}});
  } catch (const IoError& e) {
    return error(503, "store_unavailable", e.what());
  }
  entry->state = std::move(next);
  return {200, session_view(entry->state), {}, "application/json"};
}

Response Service::health() const {
  json body = {{"status", rt_.index ? "ok" : "degraded"},
               {"index_loaded", rt_.index != nullptr},
               {"index_entries", rt_.index ? rt_.index->size() : 0},
               {"backend_mode", config::to_string(rt_.config.backend_mode)},
               {"sessions", session_count()}};
  if (!rt_.index) body["index_error"] = rt_.index_error;
  return {200, std::move(body), {}, "application/json"};
}

Response Service::metrics(std::string_view format) const {
  try {
    const auto report = metrics::compute_metrics(
        journal::read_journal(rt_.config.journal_path), std::span<const metrics::AnnotationRecord>{});
    if (format == "json") return {200, metrics::to_json(report), {}, "application/json"};
    const auto fmt = metrics::parse_format(format);
    return {200, nullptr, metrics::render_report(report, fmt),
            fmt == metrics::ReportFormat::TextTable ? "text/plain" : "application/x-ndjson"};
  } catch (const std::invalid_argument& e) {
    return error(400, "bad_request", e.what());
  } catch (const journal::JournalCorrupt& e) {
    return error(500, "journal_corrupt", e.what());
  }
}

Response Service::reload_template() {
  try {
    auto fresh = std::make_shared<const prompting::PromptTemplate>(
        prompting::load_template(rt_.config.template_path));
    std::lock_guard lock(template_mu_);
    template_ = std::move(fresh);
  } catch (const std::exception& e) {
    return error(422, "invalid_template", e.what());
  }
  return {200, {{"reloaded", true}, {"path", rt_.config.template_path.string()}}, {}, "application/json"};
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  if (r.content_type == "application/json") {
    res.set_content(r.body.dump(), "application/json");
  } else {
    res.set_content(r.text, r.content_type);
  }
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) {
    send(res, error(400, "bad_request", "body is not valid JSON"));
    return std::nullopt;
  }
  return j;
}

}  // namespace

HttpServer::HttpServer(Service& service, const config::AppConfig& cfg)
    : service_(service), cfg_(cfg), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  const auto threads = static_cast<std::size_t>(cfg_.worker_threads);
  s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  s.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) send(res, service_.create_session(*body));
  });
  s.Post(R"(/v1/sessions/([^/]+)/messages)",
         [this](const httplib::Request& req, httplib::Response& res) {
           if (auto body = parse_body(req, res)) {
             send(res, service_.post_message(req.matches[1], *body));
           }
         });
  s.Post(R"(/v1/sessions/([^/]+)/feedback)",
         [this](const httplib::Request& req, httplib::Response& res) {
           if (auto body = parse_body(req, res)) {
             send(res, service_.post_feedback(req.matches[1], *body));
           }
         });
  s.Get(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_session(req.matches[1]));
  });
  s.Delete(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.close_session(req.matches[1]));
  });
  s.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send(res, service_.health());
  });
  s.Get("/v1/metrics", [this](const httplib::Request& req, httplib::Response& res) {
    const auto format = req.has_param("format") ? req.get_param_value("format") : "json";
    send(res, service_.metrics(format));
  });
  s.Post("/v1/admin/reload-template", [this](const httplib::Request&, httplib::Response& res) {
    send(res, service_.reload_template());
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error(500, "internal", what));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  if (cfg_.port == 0) return server_->bind_to_any_port(cfg_.host);
  return server_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
}

void HttpServer::start_heartbeat() {
  if (cfg_.heartbeat_seconds <= 0) return;
  heartbeat_ = std::thread([this] {
    std::unique_lock lock(hb_mu_);
    while (!hb_cv_.wait_for(lock, std::chrono::seconds(cfg_.heartbeat_seconds),
                            [this] { return stopping_; })) {
      try {
        service_.heartbeat();
      } catch (const std::exception&) {
      }
    }
  });
}

void HttpServer::serve() {
  start_heartbeat();
  server_->listen_after_bind();
}

void HttpServer::stop() {
  {
    std::lock_guard lock(hb_mu_);
    stopping_ = true;
  }
  hb_cv_.notify_all();
  if (server_) server_->stop();
  if (heartbeat_.joinable()) heartbeat_.join();
}

}  // namespace sathi::service
