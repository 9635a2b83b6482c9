#include "sathi/backends.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "sathi/http_client.hpp"

namespace sathi::backends {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System:
      return "system";
    case Role::Human:
      return "human";
    case Role::Assistant:
      break;
  }
  return "assistant";
}

std::string_view to_string(ModelClass cls) noexcept {
  return cls == ModelClass::Domain ? "domain" : "general";
}

std::vector<std::string> LlmRequest::problems() const {
  std::vector<std::string> out;
  if (messages.empty()) out.push_back("messages is empty");
  if (max_tokens < 1) out.push_back("max_tokens must be >= 1");
  if (!(temperature >= 0.0)) out.push_back("temperature must be >= 0");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    if (m.role != Role::Assistant && m.content.empty()) {
      out.push_back("message " + std::to_string(i) + " has empty content");
    }
  }
  return out;
}

std::string LlmRequest::flatten() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += '\n';
    out += to_string(m.role);
    out += ":\n";
    out += m.content;
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

HttpChatBackend::HttpChatBackend(Options opts) : opts_(std::move(opts)) {}

std::string HttpChatBackend::complete(const LlmRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    const char* role = m.role == Role::System ? "system"
                       : m.role == Role::Human ? "user"
                                               : "assistant";
    messages.push_back({{"role", role}, {"content", m.content}});
  }
  const json body = {{"model", opts_.model},
                     {"messages", std::move(messages)},
                     {"max_tokens", req.max_tokens},
                     {"temperature", req.temperature}};
  http::Headers headers;
  if (!opts_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + opts_.api_key);
  try {
    const auto res = http::post_json(opts_.url, body, opts_.timeout, headers);
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const http::HttpError& e) {
    throw BackendUnavailable(name(), e.what());
  } catch (const json::exception& e) {
    throw BackendUnavailable(name(), std::string("malformed completion: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stub heuristics

namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",     "about", "am",    "an",   "and",   "any",  "are",   "as",    "at",
      "be",    "by",    "can",   "could", "do",   "doe",  "for",   "from",  "has",
      "have",  "how",   "i",     "if",   "in",    "into", "is",    "it",    "its",
      "me",    "my",    "of",    "on",   "or",    "our",  "should", "so",   "than",
      "that",  "the",   "their", "them", "then",  "there", "these", "they", "thi",
      "this",  "to",    "u",     "wa",   "was",   "we",   "were",  "what",  "when",
      "where", "which", "who",   "why",  "will",  "with", "would", "you",   "your"};
  return words;
}

// Lowercased alphanumeric runs (non-ASCII bytes count as letters), plural
// 's' stripped, stopwords and one-letter tokens dropped.
std::set<std::string> keywords(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() > 3 && cur.back() == 's' && cur[cur.size() - 2] != 's') cur.pop_back();
    if (cur.size() > 1 && !stopwords().contains(cur)) out.insert(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::optional<std::string> line_value(const std::vector<std::string>& lines,
                                      std::string_view label) {
  std::optional<std::string> found;
  for (const auto& line : lines) {
    const auto t = trim(line);
    if (t.starts_with(label)) found = std::string(trim(t.substr(label.size())));
  }
  return found;
}

std::optional<std::string> requested_key(std::string_view flat) {
  static constexpr std::string_view marker = "JSON blob with the key \"";
  const auto pos = flat.rfind(marker);
  if (pos == std::string_view::npos) return std::nullopt;
  const auto start = pos + marker.size();
  const auto end = flat.find('"', start);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(flat.substr(start, end - start));
}

std::string choose_option(const std::vector<std::string>& lines) {
  std::vector<std::string> options;
  for (const auto& line : lines) {
    const auto t = trim(line);
    for (std::string_view label : {"Intents:", "Categories:", "Crops:", "Options:"}) {
      if (!t.starts_with(label)) continue;
      const auto parsed = json::parse(t.substr(label.size()), nullptr, false);
      if (parsed.is_array()) {
        options.clear();
        for (const auto& v : parsed) {
          if (v.is_string()) options.push_back(v.get<std::string>());
        }
      }
    }
  }
  const auto fallback = line_value(lines, "Fallback:");
  if (options.empty()) return fallback.value_or("");

  // Words of the option name count twice, descriptor words once.
  std::vector<std::map<std::string, std::size_t>> descriptors;
  for (const auto& opt : options) {
    std::map<std::string, std::size_t> words;
    const std::string prefix = "- " + opt + ":";
    for (const auto& line : lines) {
      const auto t = trim(line);
      if (t.starts_with(prefix)) {
        for (const auto& w : keywords(t.substr(prefix.size()))) words[w] = 1;
      }
    }
    for (const auto& w : keywords(opt)) words[w] = 2;
    descriptors.push_back(std::move(words));
  }

  const auto query = keywords(line_value(lines, "Query:").value_or(""));
  auto score = [&](std::size_t i) {
    std::size_t n = 0;
    for (const auto& w : query) {
      const auto it = descriptors[i].find(w);
      if (it != descriptors[i].end()) n += it->second;
    }
    return n;
  };
  std::size_t best = 0;
  std::size_t best_score = 0;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const auto s = score(i);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }

  const auto current = line_value(lines, "Current Intent:");
  if (current && !current->empty()) {
    const auto it = std::find(options.begin(), options.end(), *current);
    if (it != options.end()) {
      const auto cur_score = score(static_cast<std::size_t>(it - options.begin()));
      if (best_score >= 2 && best_score > cur_score) return options[best];
      return *current;
    }
  }
  if (best_score == 0 && fallback) return *fallback;
  return options[best];
}

bool contains_phrase(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(haystack[pos - 1]));
    const auto end = pos + needle.size();
    const bool right_ok =
        end >= haystack.size() || !std::isalnum(static_cast<unsigned char>(haystack[end]));
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

// Slot lines look like "- id | Display Name | free_text" or
// "- id | Display Name | enumerated: [...]".
std::string extract_slots_reply(const std::vector<std::string>& lines) {
  const auto user_text = line_value(lines, "User text:").value_or("");
  const auto pending = line_value(lines, "Pending slot:").value_or("none");
  const auto lowered = to_lower_ascii(user_text);
  json slots = json::object();
  bool in_slots = false;
  for (const auto& line : lines) {
    const auto t = trim(line);
    if (t == "Slots:") {
      in_slots = true;
      continue;
    }
    if (!in_slots) continue;
    if (!t.starts_with("- ")) {
      if (!t.empty()) in_slots = false;
      continue;
    }
    std::vector<std::string> parts;
    std::string_view rest = t.substr(2);
    while (true) {
      const auto bar = rest.find('|');
      parts.emplace_back(trim(rest.substr(0, bar)));
      if (bar == std::string_view::npos) break;
      rest = rest.substr(bar + 1);
    }
    if (parts.size() < 3) continue;
    const auto& id = parts[0];
    const std::string_view kind = parts[2];
    if (kind.starts_with("enumerated:")) {
      const auto allowed = json::parse(kind.substr(11), nullptr, false);
      if (!allowed.is_array()) continue;
      std::string best;
      for (const auto& v : allowed) {
        if (!v.is_string()) continue;
        const auto value = v.get<std::string>();
        if (contains_phrase(lowered, to_lower_ascii(value)) && value.size() > best.size()) {
          best = value;
        }
      }
      if (!best.empty()) slots[id] = best;
    } else if (id == pending) {
      std::string value(trim(user_text));
      while (!value.empty() && (value.back() == '.' || value.back() == '!' || value.back() == '?')) {
        value.pop_back();
      }
      if (!value.empty()) slots[id] = value;
    }
  }
  return json{{"slots", slots}}.dump();
}

std::string first_sentence(std::string_view text) {
  text = trim(text);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) {
      return std::string(text.substr(0, i + 1));
    }
  }
  return std::string(text);
}

std::string answer_reply(std::string_view flat) {
  static constexpr std::string_view ref = "Reference passage:";
  static constexpr std::string_view none = "No reference passage";
  const auto ref_pos = flat.rfind(ref);
  const auto none_pos = flat.rfind(none);
  if (none_pos != std::string_view::npos &&
      (ref_pos == std::string_view::npos || none_pos > ref_pos)) {
    return "I could not find verified guidance for this question. Please check with your "
           "local agriculture extension officer before acting.";
  }
  if (ref_pos != std::string_view::npos) {
    auto body = flat.substr(ref_pos + ref.size());
    const auto stop = body.find("\n\n");
    body = body.substr(0, stop);
    const auto sentence = first_sentence(body);
    if (!sentence.empty()) return "Based on the reference material: " + sentence;
  }
  const auto lines = split_lines(flat);
  if (line_value(lines, "Category:") == "Casual") {
    return "Happy to help. Ask me anything about your crops whenever you are ready.";
  }
  const auto query = line_value(lines, "Query:");
  if (query && !query->empty()) return "Here is a general answer to your question: " + *query;
  return "Thank you for your message.";
}

}  // namespace

std::string heuristic_reply(const std::string& flat) {
  const auto lines = split_lines(flat);
  if (const auto key = requested_key(flat)) {
    if (*key == "slots") return extract_slots_reply(lines);
    return json{{*key, choose_option(lines)}}.dump();
  }
  if (const auto q = line_value(lines, "Clarification question:")) return *q;
  return answer_reply(flat);
}

ScriptedStub::ScriptedStub(std::string name) : name_(std::move(name)) {}

ScriptedStub& ScriptedStub::on(std::string needle, std::string response) {
  return on_sequence(std::move(needle), {std::move(response)});
}

ScriptedStub& ScriptedStub::on_sequence(std::string needle, std::vector<std::string> responses) {
  return on_match(
      [needle = std::move(needle)](const LlmRequest&, const std::string& flat) {
        return flat.find(needle) != std::string::npos;
      },
      std::move(responses));
}

ScriptedStub& ScriptedStub::on_match(Matcher matcher, std::vector<std::string> responses) {
  if (responses.empty()) responses.emplace_back();
  std::lock_guard lock(mu_);
  rules_.push_back({std::move(matcher), std::move(responses), 0});
  return *this;
}

std::string ScriptedStub::complete(const LlmRequest& req) {
  const auto flat = req.flatten();
  {
    std::lock_guard lock(mu_);
    ++calls_;
    for (auto& rule : rules_) {
      if (!rule.matcher(req, flat)) continue;
      const auto i = std::min(rule.next, rule.responses.size() - 1);
      if (rule.next < rule.responses.size()) ++rule.next;
      return rule.responses[i];
    }
  }
  return heuristic_reply(flat);
}

std::size_t ScriptedStub::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// Audit and routing

json AuditRecord::to_json() const {
  json j = {{"timestamp", format_iso8601(timestamp_ms)},
            {"model_class", to_string(model_class)},
            {"backend", backend},
            {"request_digest", request_digest},
            {"response", response},
            {"latency_ms", latency_ms}};
  if (!error.empty()) j["error"] = error;
  return j;
}

AuditLog::AuditLog(const std::filesystem::path& path) {
  file_.emplace(path, std::ios::app);
  if (!*file_) throw IoError("cannot open audit log " + path.string());
}

void AuditLog::append(AuditRecord record) {
  std::lock_guard lock(mu_);
  if (file_) {
    *file_ << record.to_json().dump() << '\n';
    file_->flush();
  }
  records_.push_back(std::move(record));
}

std::vector<AuditRecord> AuditLog::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

ModelRouter::ModelRouter(std::shared_ptr<LlmBackend> general, std::shared_ptr<LlmBackend> domain,
                         std::shared_ptr<AuditLog> audit, Clock clock)
    : general_(std::move(general)),
      domain_(std::move(domain)),
      audit_(std::move(audit)),
      clock_(std::move(clock)) {
  if (!general_ || !domain_) throw Error("router needs both backends");
  if (!audit_) audit_ = std::make_shared<AuditLog>();
}

LlmBackend& ModelRouter::route(ModelClass cls) const noexcept {
  return cls == ModelClass::Domain ? *domain_ : *general_;
}

std::string ModelRouter::complete(const LlmRequest& req) {
  if (const auto p = req.problems(); !p.empty()) {
    throw std::invalid_argument("invalid LlmRequest: " + p.front());
  }
  auto& backend = route(req.model_class);
  const auto flat = req.flatten();
  AuditRecord rec;
  rec.model_class = req.model_class;
  rec.backend = backend.name();
  rec.request_digest = sha256_hex(flat);
  rec.timestamp_ms = clock_();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
  };
  try {
    rec.response = backend.complete(req);
  } catch (const std::exception& e) {
    rec.latency_ms = elapsed();
    rec.error = e.what();
    audit_->append(std::move(rec));
    if (dynamic_cast<const BackendUnavailable*>(&e)) throw;
    throw BackendUnavailable(backend.name(), e.what());
  }
  rec.latency_ms = elapsed();
  auto out = rec.response;
  audit_->append(std::move(rec));
  return out;
}

std::string complete(ModelRouter& router, const LlmRequest& req) { return router.complete(req); }

// ---------------------------------------------------------------------------
// Structured output

std::optional<json> find_first_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    // Find the matching close brace, honouring strings, then try to parse.
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

std::string parse_single_key(std::string_view response, std::string_view key,
                             std::optional<std::span<const std::string>> allowed) {
  if (key.empty()) throw std::invalid_argument("parse_single_key needs a key");
  const auto obj = find_first_object(response);
  if (!obj) throw ParseFailure("no JSON object in response");
  const auto it = obj->find(std::string(key));
  if (it == obj->end()) throw ParseFailure("key '" + std::string(key) + "' missing");
  if (!it->is_string()) throw ParseFailure("key '" + std::string(key) + "' is not a string");
  auto value = it->get<std::string>();
  if (allowed && std::find(allowed->begin(), allowed->end(), value) == allowed->end()) {
    throw DisallowedValue("value '" + value + "' is not allowed");
  }
  return value;
}

}  // namespace sathi::backends
