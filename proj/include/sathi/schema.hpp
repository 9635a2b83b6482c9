#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sathi/common.hpp"

namespace sathi::schema {

enum class ValueKind { FreeText, Enumerated };

std::string_view to_string(ValueKind kind) noexcept;

struct SlotDef {
  std::string id;
  std::string display_name;
  /// Clarification question; may contain {crop} and {intent}.
  std::string question_template;
  ValueKind value_kind = ValueKind::FreeText;
  std::vector<std::string> allowed_values;
  bool required = true;

  bool operator==(const SlotDef&) const = default;
};

struct IntentDef {
  std::string id;
  std::string display_name;
  std::string crop_id;
  std::string description;
  /// True for intents added locally rather than shipped with the base registry.
  bool synthesized = false;
  std::vector<SlotDef> slots;

  const SlotDef* find_slot(std::string_view slot_id) const noexcept;

  bool operator==(const IntentDef&) const = default;
};

struct CropProfile {
  std::string id;
  std::string display_name;
  /// Extra words that identify the crop in a query ("vine", "vineyard").
  std::vector<std::string> aliases;
  std::vector<IntentDef> intents;

  const IntentDef* find_intent(std::string_view intent_id) const noexcept;
  const IntentDef* find_intent_by_name(std::string_view display_name) const noexcept;

  bool operator==(const CropProfile&) const = default;
};

/// Crop -> intent -> slot registry. Crops keep file order.
struct Registry {
  std::string version;
  std::vector<CropProfile> crops;

  const CropProfile* find_crop(std::string_view crop_id) const noexcept;

  bool operator==(const Registry&) const = default;
};

struct Violation {
  std::string path;  // "crop/intent/slot"
  std::string message;

  bool operator==(const Violation&) const = default;
};

inline constexpr std::size_t kMinSlots = 2;
inline constexpr std::size_t kMaxSlots = 5;

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

/// Checks every registry invariant. The result order follows file order.
std::vector<Violation> validate_registry(const Registry& registry);

/// Parses registry YAML text without validating it.
Registry parse_registry(std::string_view yaml_text);

/// Parses and validates; throws ParseError or ValidationError.
Registry load_registry(const std::filesystem::path& path);
Registry load_registry_text(std::string_view yaml_text);

std::string serialize_registry(const Registry& registry);

const CropProfile& lookup_crop(const Registry& registry, std::string_view crop_id);
const IntentDef& lookup_intent(const Registry& registry, std::string_view crop_id,
                               std::string_view intent_id);

/// Expands {crop} and {intent} in a slot's question template.
std::string render_question(const SlotDef& slot, std::string_view crop_name,
                            std::string_view intent_name);

}  // namespace sathi::schema
