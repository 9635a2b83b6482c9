#include "sathi/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace sathi::dialogue {

using backends::LlmRequest;
using backends::ModelClass;
using backends::ModelRouter;
using backends::Role;
using nlohmann::json;

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::DomainSpecific:
      return "DomainSpecific";
    case Category::GeneralKnowledge:
      return "GeneralKnowledge";
    case Category::Casual:
      break;
  }
  return "Casual";
}

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::AwaitingQuery:
      return "AwaitingQuery";
    case Phase::Clarifying:
      return "Clarifying";
    case Phase::Answered:
      return "Answered";
    case Phase::Closed:
      break;
  }
  return "Closed";
}

std::string_view to_string(Modality m) noexcept {
  return m == Modality::Speech ? "speech" : "text";
}

std::optional<Category> parse_category(std::string_view s) noexcept {
  for (auto c : {Category::DomainSpecific, Category::GeneralKnowledge, Category::Casual}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<Phase> parse_phase(std::string_view s) noexcept {
  for (auto p : {Phase::AwaitingQuery, Phase::Clarifying, Phase::Answered, Phase::Closed}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::optional<Modality> parse_modality(std::string_view s) noexcept {
  if (s == "text") return Modality::Text;
  if (s == "speech") return Modality::Speech;
  return std::nullopt;
}

std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::CategoryAssigned:
      return "CategoryAssigned";
    case EventKind::CropDetected:
      return "CropDetected";
    case EventKind::IntentAssigned:
      return "IntentAssigned";
    case EventKind::SlotFilled:
      return "SlotFilled";
    case EventKind::QuestionAsked:
      return "QuestionAsked";
    case EventKind::ContextRetrieved:
      return "ContextRetrieved";
    case EventKind::AnswerGenerated:
      return "AnswerGenerated";
    case EventKind::EscalatedToGeneral:
      return "EscalatedToGeneral";
    case EventKind::PromptTruncated:
      return "PromptTruncated";
    case EventKind::Error:
      break;
  }
  return "Error";
}

json Event::to_json() const { return {{"kind", to_string(kind)}, {"data", data}}; }

bool TurnOutput::has(EventKind k) const noexcept { return count(k) > 0; }

std::size_t TurnOutput::count(EventKind k) const noexcept {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [k](const Event& e) { return e.kind == k; }));
}

const std::optional<std::string>* SessionState::slot(std::string_view id) const noexcept {
  for (const auto& [k, v] : slots) {
    if (k == id) return &v;
  }
  return nullptr;
}

std::size_t SessionState::system_turns() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      transcript.begin(), transcript.end(), [](const ChatTurn& t) { return t.author == Author::System; }));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

json to_json(const SessionState& s) {
  json slots = json::array();
  for (const auto& [id, v] : s.slots) slots.push_back({{"id", id}, {"value", opt(v)}});
  json transcript = json::array();
  for (const auto& t : s.transcript) {
    transcript.push_back({{"author", t.author == Author::User ? "user" : "system"},
                          {"text", t.text},
                          {"timestamp_ms", t.timestamp_ms},
                          {"annotations", t.annotations}});
  }
  return {{"session_id", s.session_id},
          {"language", s.language ? json(lingua::to_tag(*s.language)) : json(nullptr)},
          {"modality", to_string(s.modality)},
          {"phase", to_string(s.phase)},
          {"category", s.category ? json(to_string(*s.category)) : json(nullptr)},
          {"crop_id", opt(s.crop_id)},
          {"intent_id", opt(s.intent_id)},
          {"slots", std::move(slots)},
          {"pending_slot", opt(s.pending_slot)},
          {"clarification_turns", s.clarification_turns},
          {"query", s.query},
          {"transcript", std::move(transcript)}};
}

SessionState state_from_json(const json& j) {
  SessionState s;
  s.session_id = j.at("session_id").get<std::string>();
  if (const auto lang = opt_string(j, "language")) {
    const auto tag = lingua::parse_tag(*lang);
    if (!tag) throw Error("unknown session language '" + *lang + "'");
    s.language = *tag;
  }
  const auto modality = parse_modality(j.at("modality").get<std::string>());
  const auto phase = parse_phase(j.at("phase").get<std::string>());
  if (!modality || !phase) throw Error("bad modality or phase in session record");
  s.modality = *modality;
  s.phase = *phase;
  if (const auto c = opt_string(j, "category")) {
    s.category = parse_category(*c);
    if (!s.category) throw Error("unknown category '" + *c + "'");
  }
  s.crop_id = opt_string(j, "crop_id");
  s.intent_id = opt_string(j, "intent_id");
  for (const auto& slot : j.at("slots")) {
    s.slots.emplace_back(slot.at("id").get<std::string>(), opt_string(slot, "value"));
  }
  s.pending_slot = opt_string(j, "pending_slot");
  s.clarification_turns = j.at("clarification_turns").get<int>();
  s.query = j.value("query", "");
  for (const auto& t : j.at("transcript")) {
    ChatTurn turn;
    turn.author = t.at("author").get<std::string>() == "user" ? Author::User : Author::System;
    turn.text = t.at("text").get<std::string>();
    turn.timestamp_ms = t.at("timestamp_ms").get<std::int64_t>();
    turn.annotations = t.value("annotations", json::object());
    s.transcript.push_back(std::move(turn));
  }
  return s;
}

SessionState new_session(std::string session_id, Modality modality,
                         std::optional<lingua::Language> language) {
  SessionState s;
  s.session_id = std::move(session_id);
  s.modality = modality;
  s.language = language;
  return s;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr std::string_view kCategoryDescriptors[] = {
    "- DomainSpecific: farming farm field crop grape vine vineyard onion bulb seed seedling "
    "nursery sow sowing transplant transplanting soil irrigation irrigate water watering "
    "fertilizer fertiliser manure nutrient pest insect thrips disease mildew rot blight "
    "fungicide pesticide spray harvest yield variety prune pruning plant planting storage "
    "berry bunch weed leaf leave acre kharif rabi mandi",
    "- GeneralKnowledge: capital country history science president minister population "
    "define meaning explain world planet sun moon invent inventor language sport cricket "
    "computer mathematics math movie news geography wrote writer author anthem invented telephone "
    "national earth ocean continent mountain river light speed largest tallest leap",
    "- Casual: hello hi hey namaste thank thanks bye goodbye morning evening night okay ok "
    "great nice name joke welcome fine doing later see good day",
};

std::string one_line(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

LlmRequest make_request(std::string system, std::string human, ModelClass cls,
                        double temperature, int max_tokens = 64) {
  LlmRequest req;
  req.messages.push_back({Role::System, std::move(system)});
  req.messages.push_back({Role::Human, std::move(human)});
  req.model_class = cls;
  req.temperature = temperature;
  req.max_tokens = max_tokens;
  return req;
}

std::string output_contract(std::string_view key) {
  return "Output only a JSON blob with the key \"" + std::string(key) +
         "\" and nothing else. The value must be copied exactly from the list above.";
}

}  // namespace

Category classify_category(std::string_view query, ModelRouter& router, int max_attempts) {
  static const std::vector<std::string> allowed = {"DomainSpecific", "GeneralKnowledge",
                                                   "Casual"};
  std::string system =
      "You route questions for a farming assistant. Decide which category the query belongs "
      "to.\nCategories: [\"DomainSpecific\", \"GeneralKnowledge\", \"Casual\"]\n";
  for (auto d : kCategoryDescriptors) system += std::string(d) + "\n";
  system += output_contract("category");
  const auto req = make_request(std::move(system), "Query: " + one_line(query),
                                ModelClass::General, backends::kClassificationTemperature);
  auto parser = [](const std::string& r) {
    return backends::parse_single_key(r, "category", std::span<const std::string>(allowed));
  };
  try {
    return *parse_category(backends::complete_with_retry(router, req, parser, max_attempts).value);
  } catch (const backends::ExhaustedRetries&) {
  } catch (const backends::BackendUnavailable&) {
  }
  return Category::GeneralKnowledge;
}

std::optional<std::string> detect_crop(std::string_view query, const schema::Registry& registry,
                                       ModelRouter& router, int max_attempts) {
  std::vector<std::string> allowed;
  for (const auto& c : registry.crops) allowed.push_back(c.id);
  allowed.emplace_back("unknown");
  std::string system =
      "Identify which crop the farmer's query is about. Answer \"unknown\" when no listed "
      "crop is clearly mentioned.\nCrops: " +
      json(allowed).dump() + "\n";
  for (const auto& c : registry.crops) {
    system += "- " + c.id + ": " + c.display_name;
    for (const auto& a : c.aliases) system += " " + a;
    system += "\n";
  }
  system += "Fallback: unknown\n" + output_contract("crop");
  const auto req = make_request(std::move(system), "Query: " + one_line(query),
                                ModelClass::General, backends::kClassificationTemperature);
  auto parser = [&](const std::string& r) {
    return backends::parse_single_key(r, "crop", std::span<const std::string>(allowed));
  };
  std::string crop;
  try {
    crop = backends::complete_with_retry(router, req, parser, max_attempts).value;
  } catch (const backends::ExhaustedRetries&) {
    return std::nullopt;
  } catch (const backends::BackendUnavailable&) {
    return std::nullopt;
  }
  if (crop == "unknown") return std::nullopt;
  return crop;
}

std::string detect_intent(std::string_view query, const schema::CropProfile& crop,
                          const std::optional<std::string>& current_intent, ModelRouter& router,
                          int max_attempts) {
  if (crop.intents.empty()) throw std::invalid_argument("crop has no intents");
  std::vector<std::string> names;
  for (const auto& i : crop.intents) names.push_back(i.display_name);
  const schema::IntentDef* current =
      current_intent ? crop.find_intent(*current_intent) : nullptr;

  std::string system =
      "Pick the intent from the list that best matches the farmer's query about " +
      crop.display_name +
      ". When a current intent is given and it still covers the query, keep it. Match names "
      "exactly, including case.\nIntents: " +
      json(names).dump() + "\n";
  for (const auto& i : crop.intents) {
    system += "- " + i.display_name + ": " + i.description + ". Slots:";
    for (const auto& s : i.slots) system += " " + s.display_name + ",";
    system.back() = '\n';
  }
  system += output_contract("intent");
  const auto human = "Current Intent: " + (current ? current->display_name : "None") +
                     "\nQuery: " + one_line(query);
  const auto req = make_request(std::move(system), human, ModelClass::General,
                                backends::kClassificationTemperature);
  auto parser = [&](const std::string& r) {
    return backends::parse_single_key(r, "intent", std::span<const std::string>(names));
  };
  std::string name;
  try {
    name = backends::complete_with_retry(router, req, parser, max_attempts).value;
  } catch (const backends::ExhaustedRetries&) {
  } catch (const backends::BackendUnavailable&) {
  }
  if (name.empty()) {
    if (current) return current->id;
    name = parser(backends::heuristic_reply(req.flatten()));
  }
  return crop.find_intent_by_name(name)->id;
}

SlotMap slots_for(const schema::IntentDef& intent, const SlotMap& carry) {
  SlotMap out;
  for (const auto& s : intent.slots) {
    std::optional<std::string> value;
    for (const auto& [k, v] : carry) {
      if (k == s.id) value = v;
    }
    out.emplace_back(s.id, value);
  }
  return out;
}

SlotMap extract_slots(std::string_view user_text, const schema::IntentDef& intent,
                      const SlotMap& existing, const std::optional<std::string>& pending_slot,
                      ModelRouter& router, int max_attempts) {
  SlotMap out = slots_for(intent, existing);
  if (trim(user_text).empty()) return out;

  std::string system = "Extract slot values for the intent below from the user's text. Only "
                       "fill a slot when the text states its value; enumerated slots take one "
                       "of the listed values.\nIntent: " +
                       intent.display_name + "\nSlots:\n";
  for (const auto& s : intent.slots) {
    system += "- " + s.id + " | " + s.display_name + " | ";
    if (s.value_kind == schema::ValueKind::Enumerated) {
      system += "enumerated: " + json(s.allowed_values).dump();
    } else {
      system += "free_text";
    }
    system += "\n";
  }
  system += "\nOutput only a JSON blob with the key \"slots\" mapping slot ids to values, "
            "and nothing else.";
  const auto human = "Pending slot: " + pending_slot.value_or("none") +
                     "\nUser text: " + one_line(user_text);
  const auto req = make_request(std::move(system), human, ModelClass::General,
                                backends::kClassificationTemperature, 128);
  auto parser = [](const std::string& r) {
    const auto obj = backends::find_first_object(r);
    if (!obj) throw backends::ParseFailure("no JSON object in response");
    const auto it = obj->find("slots");
    if (it == obj->end() || !it->is_object()) throw backends::ParseFailure("no slots object");
    return *it;
  };
  json values;
  try {
    values = backends::complete_with_retry(router, req, parser, max_attempts).value;
  } catch (const backends::ExhaustedRetries&) {
    return out;
  } catch (const backends::BackendUnavailable&) {
    return out;
  }

  for (auto& [id, value] : out) {
    const auto it = values.find(id);
    if (it == values.end() || !it->is_string()) continue;
    std::string v(trim(it->get<std::string>()));
    if (v.empty()) continue;
    const auto* def = intent.find_slot(id);
    if (def->value_kind == schema::ValueKind::Enumerated) {
      const auto lowered = to_lower_ascii(v);
      const auto match =
          std::find_if(def->allowed_values.begin(), def->allowed_values.end(),
                       [&](const std::string& a) { return to_lower_ascii(a) == lowered; });
      if (match == def->allowed_values.end()) continue;
      v = *match;
    }
    value = std::move(v);
  }
  return out;
}

std::optional<Question> next_clarification(const SessionState& state,
                                           const schema::Registry& registry,
                                           ModelRouter* router, bool rephrase) {
  if (!state.crop_id || !state.intent_id) {
    throw std::invalid_argument("next_clarification needs a crop and an intent");
  }
  const auto& crop = schema::lookup_crop(registry, *state.crop_id);
  const auto& intent = schema::lookup_intent(registry, *state.crop_id, *state.intent_id);
  for (const auto& def : intent.slots) {
    if (!def.required) continue;
    const auto* v = state.slot(def.id);
    if (v && *v && !(*v)->empty()) continue;
    Question q{def.id, schema::render_question(def, crop.display_name, intent.display_name)};
    if (rephrase && router) {
      const auto req = make_request(
          "Rephrase the clarification question below so that it reads naturally for a farmer. "
          "Reply with the question only.",
          "Clarification question: " + q.text, ModelClass::General,
          backends::kClassificationTemperature);
      try {
        auto text = std::string(trim(router->complete(req)));
        if (!text.empty()) q.text = std::move(text);
      } catch (const backends::BackendUnavailable&) {
      }
    }
    return q;
  }
  return std::nullopt;
}

std::string enrich_query(const SessionState& state, const schema::Registry& registry) {
  if (!state.crop_id || !state.intent_id) {
    throw std::invalid_argument("enrich_query needs a crop and an intent");
  }
  const auto& intent = schema::lookup_intent(registry, *state.crop_id, *state.intent_id);
  std::string out = state.query + "; crop: " + *state.crop_id + "; intent: " + intent.display_name;
  for (const auto& def : intent.slots) {
    const auto* v = state.slot(def.id);
    if (v && *v && !(*v)->empty()) out += "; " + def.id + ": " + **v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// The state machine

namespace {

std::string crop_question(const schema::Registry& registry) {
  std::string names;
  for (std::size_t i = 0; i < registry.crops.size(); ++i) {
    if (i > 0) names += i + 1 == registry.crops.size() ? " or " : ", ";
    names += registry.crops[i].display_name;
  }
  return "Which crop is your question about: " + names + "?";
}

// Direct match of a crop id, name or alias as a word in the text.
std::optional<std::string> crop_by_name(std::string_view text, const schema::Registry& registry) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : to_lower_ascii(text)) {
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(c);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  for (const auto& crop : registry.crops) {
    std::vector<std::string> names = {to_lower_ascii(crop.id), to_lower_ascii(crop.display_name)};
    for (const auto& a : crop.aliases) names.push_back(to_lower_ascii(a));
    for (const auto& w : words) {
      if (std::find(names.begin(), names.end(), w) != names.end()) return crop.id;
    }
  }
  return std::nullopt;
}

class Turn {
 public:
  Turn(SessionState& s, TurnOutput& out, const Deps& deps)
      : s_(s), out_(out), deps_(deps), reg_(*deps.registry), router_(*deps.router) {}

  void run(const std::string& text) {
    if (s_.phase == Phase::Clarifying) {
      on_answer(text);
    } else {
      on_query(text);
    }
  }

 private:
  void emit(EventKind kind, json data = json::object()) {
    out_.events.push_back({kind, std::move(data)});
  }

  void on_query(const std::string& text) {
    s_.query = text;
    s_.clarification_turns = 0;
    s_.pending_slot.reset();
    const auto category = classify_category(text, router_, deps_.config.max_attempts);
    s_.category = category;
    emit(EventKind::CategoryAssigned, {{"category", to_string(category)}});
    if (category != Category::DomainSpecific) {
      answer_general(text);
      return;
    }
    if (!s_.crop_id) {
      const auto crop = detect_crop(text, reg_, router_, deps_.config.max_attempts);
      if (!crop) {
        ask(std::string(kCropSlot), crop_question(reg_));
        return;
      }
      set_crop(*crop);
    }
    resolve(text, text, std::nullopt);
  }

  void on_answer(const std::string& text) {
    if (s_.pending_slot == kCropSlot) {
      auto crop = crop_by_name(text, reg_);
      if (!crop) crop = detect_crop(text, reg_, router_, deps_.config.max_attempts);
      if (!crop) {
        if (s_.clarification_turns < deps_.config.max_clarification_turns) {
          ask(std::string(kCropSlot), crop_question(reg_));
        } else {
          answer_general(s_.query);
        }
        return;
      }
      set_crop(*crop);
      resolve(s_.query, s_.query, std::nullopt);
      return;
    }
    resolve(text, text, s_.pending_slot);
  }

  void set_crop(const std::string& crop) {
    s_.crop_id = crop;
    emit(EventKind::CropDetected, {{"crop", crop}});
  }

  void resolve(const std::string& intent_query, const std::string& extract_text,
               const std::optional<std::string>& pending) {
    const auto& crop = schema::lookup_crop(reg_, *s_.crop_id);
    const auto intent_id =
        detect_intent(intent_query, crop, s_.intent_id, router_, deps_.config.max_attempts);
    const auto& intent = *crop.find_intent(intent_id);
    if (s_.intent_id != intent_id) {
      s_.intent_id = intent_id;
      s_.slots = slots_for(intent, s_.slots);
      emit(EventKind::IntentAssigned, {{"intent", intent_id}});
    } else if (s_.slots.size() != intent.slots.size()) {
      s_.slots = slots_for(intent, s_.slots);
    }

    const auto before = s_.slots;
    s_.slots = extract_slots(extract_text, intent,
                             s_.slots,
                             pending && intent.find_slot(*pending) ? pending : std::nullopt,
                             router_, deps_.config.max_attempts);
    for (std::size_t i = 0; i < s_.slots.size(); ++i) {
      const auto& [id, v] = s_.slots[i];
      if (v && v != before[i].second) emit(EventKind::SlotFilled, {{"slot", id}, {"value", *v}});
    }

    if (s_.clarification_turns < deps_.config.max_clarification_turns) {
      if (const auto q = next_clarification(s_, reg_, &router_, deps_.config.rephrase_questions)) {
        ask(q->slot_id, q->text);
        return;
      }
    }
    answer_domain();
  }

  void ask(std::string slot, std::string question) {
    s_.phase = Phase::Clarifying;
    s_.pending_slot = slot;
    ++s_.clarification_turns;
    emit(EventKind::QuestionAsked, {{"slot", std::move(slot)}, {"question", question}});
    out_.is_question = true;
    out_.reply_text = std::move(question);
  }

  void answer_general(const std::string& text) {
    emit(EventKind::EscalatedToGeneral,
         {{"category", s_.category ? to_string(*s_.category) : "GeneralKnowledge"}});
    const auto req = make_request(
        "You are a friendly assistant for farmers. Reply briefly and politely.",
        "Category: " + std::string(to_string(s_.category.value_or(Category::GeneralKnowledge))) +
            "\nQuery: " + one_line(text),
        ModelClass::General, backends::kAnswerTemperature,
        static_cast<int>(deps_.config.budget.reserve_for_answer));
    try {
      out_.reply_text = router_.complete(req);
    } catch (const backends::BackendUnavailable& e) {
      unavailable(e);
      return;
    }
    emit(EventKind::AnswerGenerated, {{"model_class", "general"}});
    s_.phase = Phase::Answered;
    s_.pending_slot.reset();
  }

  void answer_domain() {
    const auto enriched = enrich_query(s_, reg_);
    std::optional<retrieval::RetrievalResult> ctx;
    if (deps_.index && deps_.embedder && !deps_.index->empty()) {
      try {
        ctx = retrieval::retrieve_context(*deps_.index, enriched, *deps_.embedder,
                                          deps_.config.score_floor);
      } catch (const std::exception& e) {
        emit(EventKind::Error, {{"stage", "retrieval"}, {"message", e.what()}});
      }
    }
    if (ctx) {
      out_.passage_id = ctx->passage_id;
      emit(EventKind::ContextRetrieved, {{"passage_id", ctx->passage_id}, {"score", ctx->score}});
    }

    prompting::AssembledPrompt prompt;
    try {
      prompt = prompting::assemble_prompt(
          *deps_.prompt_template, enriched,
          ctx ? std::optional<std::string_view>(ctx->text) : std::nullopt, deps_.config.budget);
    } catch (const prompting::BudgetImpossible& e) {
      emit(EventKind::Error, {{"stage", "prompting"}, {"message", e.what()}});
      out_.reply_text = "Your question is too long for me to answer. Please shorten it and ask again.";
      finish_answer();
      return;
    }
    if (!prompt.truncations.empty()) {
      json steps = json::array();
      for (auto t : prompt.truncations) steps.push_back(prompting::to_string(t));
      emit(EventKind::PromptTruncated, {{"steps", std::move(steps)}});
    }

    LlmRequest req;
    req.messages.push_back({Role::System, prompt.system});
    req.messages.push_back({Role::Human, prompt.human});
    req.model_class = ModelClass::Domain;
    req.temperature = backends::kAnswerTemperature;
    req.max_tokens = static_cast<int>(deps_.config.budget.reserve_for_answer);
    try {
      out_.reply_text = router_.complete(req);
    } catch (const backends::BackendUnavailable& e) {
      unavailable(e);
      return;
    }
    json data = {{"model_class", "domain"},
                 {"intent", *s_.intent_id},
                 {"prompt_tokens", prompt.token_estimate}};
    if (ctx) data["passage_id"] = ctx->passage_id;
    emit(EventKind::AnswerGenerated, std::move(data));
    finish_answer();
  }

  void finish_answer() {
    s_.phase = Phase::Answered;
    s_.pending_slot.reset();
  }

  void unavailable(const backends::BackendUnavailable& e) {
    emit(EventKind::Error, {{"stage", "backend"}, {"backend", e.backend()}, {"message", e.what()}});
    out_.backend_unavailable = true;
    out_.reply_text = std::string(kBackendFallbackReply);
  }

  SessionState& s_;
  TurnOutput& out_;
  const Deps& deps_;
  const schema::Registry& reg_;
  ModelRouter& router_;
};

}  // namespace

std::pair<SessionState, TurnOutput> step(const SessionState& state, std::string_view user_text,
                                         const Deps& deps) {
  if (state.phase == Phase::Closed) throw SessionClosed("session is closed");
  if (!deps.registry || !deps.router || !deps.prompt_template) {
    throw std::invalid_argument("step needs a registry, a router and a prompt template");
  }
  if (trim(user_text).empty()) throw std::invalid_argument("user text is empty");

  SessionState s = state;
  TurnOutput out;
  s.transcript.push_back({Author::User, std::string(user_text), deps.clock(), json::object()});

  if (!s.language) {
    auto lang = lingua::Language::En;
    if (deps.dict_en && deps.dict_hi) {
      const auto v = lingua::detect_language(user_text, *deps.dict_en, *deps.dict_hi);
      if (v.language != lingua::Language::Unknown) lang = v.language;
    }
    s.language = lang;
  }

  lingua::IdentityTranslator identity;
  lingua::TranslationClient& translator = deps.translator ? *deps.translator : identity;

  bool translated_in = true;
  std::string english;
  try {
    english = lingua::to_english(std::string(user_text), {*s.language, 0.0, 0.0}, translator).text;
  } catch (const lingua::TranslationError& e) {
    out.events.push_back({EventKind::Error, {{"stage", "translation"}, {"message", e.what()}}});
    out.reply_text = std::string(kTranslationFallbackReply);
    translated_in = false;
  }

  if (translated_in) {
    Turn turn(s, out, deps);
    turn.run(english);
    if (out.backend_unavailable) {
      // Keep the pre-turn dialogue position; only the transcript advances.
      const auto language = s.language;
      auto transcript = std::move(s.transcript);
      s = state;
      s.language = language;
      s.transcript = std::move(transcript);
    }
  }

  std::string reply = out.reply_text;
  if (*s.language != lingua::Language::En) {
    try {
      reply = lingua::from_english(out.reply_text, *s.language, translator);
    } catch (const lingua::TranslationError& e) {
      out.events.push_back({EventKind::Error, {{"stage", "translation"}, {"message", e.what()}}});
    }
  }
  out.reply_text = reply;
  out.phase_after = s.phase;

  json ann = json::object();
  if (s.category) ann["category"] = to_string(*s.category);
  if (s.intent_id && s.category == Category::DomainSpecific) ann["intent"] = *s.intent_id;
  if (out.passage_id) ann["passage_id"] = *out.passage_id;
  if (out.is_question) ann["question"] = true;
  if (out.backend_unavailable) ann["backend_unavailable"] = true;
  s.transcript.push_back({Author::System, reply, deps.clock(), std::move(ann)});
  return {std::move(s), std::move(out)};
}

}  // namespace sathi::dialogue
