#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sathi/backends.hpp"
#include "sathi/common.hpp"
#include "sathi/lingua.hpp"
#include "sathi/prompting.hpp"
#include "sathi/retrieval.hpp"
#include "sathi/schema.hpp"

namespace sathi::dialogue {

enum class Category { DomainSpecific, GeneralKnowledge, Casual };
enum class Phase { AwaitingQuery, Clarifying, Answered, Closed };
enum class Modality { Text, Speech };
enum class Author { User, System };

std::string_view to_string(Category c) noexcept;
std::string_view to_string(Phase p) noexcept;
std::string_view to_string(Modality m) noexcept;
std::optional<Category> parse_category(std::string_view s) noexcept;
std::optional<Phase> parse_phase(std::string_view s) noexcept;
std::optional<Modality> parse_modality(std::string_view s) noexcept;

/// pending_slot value while the crop itself is being asked for.
inline constexpr std::string_view kCropSlot = "crop";

struct ChatTurn {
  Author author = Author::User;
  std::string text;
  std::int64_t timestamp_ms = 0;
  /// category, intent, passage_id, latency_ms; all optional.
  nlohmann::json annotations = nlohmann::json::object();

  bool operator==(const ChatTurn&) const = default;
};

/// Slot values of the current intent, in registry order. nullopt = missing.
using SlotMap = std::vector<std::pair<std::string, std::optional<std::string>>>;

struct SessionState {
  std::string session_id;
  /// Fixed at creation or by detection on the first user turn.
  std::optional<lingua::Language> language;
  Modality modality = Modality::Text;
  Phase phase = Phase::AwaitingQuery;
  std::optional<Category> category;
  std::optional<std::string> crop_id;
  std::optional<std::string> intent_id;
  SlotMap slots;
  std::optional<std::string> pending_slot;
  int clarification_turns = 0;
  /// The English text of the query being worked on.
  std::string query;
  std::vector<ChatTurn> transcript;

  const std::optional<std::string>* slot(std::string_view id) const noexcept;
  std::size_t system_turns() const noexcept;

  bool operator==(const SessionState&) const = default;
};

nlohmann::json to_json(const SessionState& s);
SessionState state_from_json(const nlohmann::json& j);

enum class EventKind {
  CategoryAssigned,
  CropDetected,
  IntentAssigned,
  SlotFilled,
  QuestionAsked,
  ContextRetrieved,
  AnswerGenerated,
  EscalatedToGeneral,
  PromptTruncated,
  Error,
};

std::string_view to_string(EventKind k) noexcept;

struct Event {
  EventKind kind;
  nlohmann::json data = nlohmann::json::object();

  nlohmann::json to_json() const;
  bool operator==(const Event&) const = default;
};

struct TurnOutput {
  std::string reply_text;
  Phase phase_after = Phase::AwaitingQuery;
  std::vector<Event> events;
  /// The reply is a clarification question.
  bool is_question = false;
  std::optional<std::string> passage_id;
  /// A backend needed for the reply could not be reached; reply_text is the
  /// user-safe fallback.
  bool backend_unavailable = false;

  bool has(EventKind k) const noexcept;
  std::size_t count(EventKind k) const noexcept;
};

struct DialogueConfig {
  int max_clarification_turns = 6;
  double score_floor = retrieval::kDefaultScoreFloor;
  int max_attempts = backends::kDefaultMaxAttempts;
  bool rephrase_questions = true;
  prompting::TokenBudget budget;
};

/// Everything a step needs. Pointers are borrowed; index/embedder may be
/// null, in which case answers run without context.
struct Deps {
  const schema::Registry* registry = nullptr;
  backends::ModelRouter* router = nullptr;
  const retrieval::VectorIndex* index = nullptr;
  const retrieval::Embedder* embedder = nullptr;
  std::shared_ptr<const prompting::PromptTemplate> prompt_template;
  const lingua::CharFreqDict* dict_en = nullptr;
  const lingua::CharFreqDict* dict_hi = nullptr;
  lingua::TranslationClient* translator = nullptr;
  DialogueConfig config;
  Clock clock = system_clock();
};

class SessionClosed : public Error {
 public:
  using Error::Error;
};

inline constexpr std::string_view kBackendFallbackReply =
    "Sorry, the advisory service is temporarily unavailable. Please try again in a few minutes.";
inline constexpr std::string_view kTranslationFallbackReply =
    "Sorry, I could not process your message. Please try again.";

// Individual decisions; step() strings them together. Each is total: a
// failing backend degrades to the documented default.

Category classify_category(std::string_view query, backends::ModelRouter& router,
                           int max_attempts = backends::kDefaultMaxAttempts);

/// nullopt means the user has to be asked which crop.
std::optional<std::string> detect_crop(std::string_view query, const schema::Registry& registry,
                                       backends::ModelRouter& router,
                                       int max_attempts = backends::kDefaultMaxAttempts);

std::string detect_intent(std::string_view query, const schema::CropProfile& crop,
                          const std::optional<std::string>& current_intent,
                          backends::ModelRouter& router,
                          int max_attempts = backends::kDefaultMaxAttempts);

/// Returns the updated map: existing values stay unless replaced by a new
/// non-empty value; only this intent's slots; enumerated slots only take
/// allowed values.
SlotMap extract_slots(std::string_view user_text, const schema::IntentDef& intent,
                      const SlotMap& existing, const std::optional<std::string>& pending_slot,
                      backends::ModelRouter& router,
                      int max_attempts = backends::kDefaultMaxAttempts);

/// Empty slot map for an intent, keeping values of slots it shares with `carry`.
SlotMap slots_for(const schema::IntentDef& intent, const SlotMap& carry = {});

struct Question {
  std::string slot_id;
  std::string text;
};

/// First missing required slot in registry order; nullopt when complete.
std::optional<Question> next_clarification(const SessionState& state,
                                           const schema::Registry& registry,
                                           backends::ModelRouter* router, bool rephrase = true);

/// "query; crop: c; intent: Display Name; slot: value; ..." over filled slots.
std::string enrich_query(const SessionState& state, const schema::Registry& registry);

/// Runs one user turn through the state machine. Throws SessionClosed when
/// the session is closed; every other failure is reported in the output.
std::pair<SessionState, TurnOutput> step(const SessionState& state, std::string_view user_text,
                                         const Deps& deps);

SessionState new_session(std::string session_id, Modality modality,
                         std::optional<lingua::Language> language = std::nullopt);

}  // namespace sathi::dialogue
