#include "sathi/schema.hpp"

#include <yaml-cpp/yaml.h>

#include <set>

namespace sathi::schema {

std::string_view to_string(ValueKind kind) noexcept {
  return kind == ValueKind::Enumerated ? "enumerated" : "free_text";
}

const SlotDef* IntentDef::find_slot(std::string_view slot_id) const noexcept {
  for (const auto& s : slots) {
    if (s.id == slot_id) return &s;
  }
  return nullptr;
}

const IntentDef* CropProfile::find_intent(std::string_view intent_id) const noexcept {
  for (const auto& i : intents) {
    if (i.id == intent_id) return &i;
  }
  return nullptr;
}

const IntentDef* CropProfile::find_intent_by_name(
    std::string_view display_name) const noexcept {
  for (const auto& i : intents) {
    if (i.display_name == display_name) return &i;
  }
  return nullptr;
}

const CropProfile* Registry::find_crop(std::string_view crop_id) const noexcept {
  for (const auto& c : crops) {
    if (c.id == crop_id) return &c;
  }
  return nullptr;
}

namespace {

std::string join_violations(const std::vector<Violation>& vs) {
  std::string msg = "registry has " + std::to_string(vs.size()) + " violation(s)";
  for (const auto& v : vs) msg += "\n  " + v.path + ": " + v.message;
  return msg;
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

std::vector<Violation> validate_registry(const Registry& registry) {
  std::vector<Violation> out;
  auto add = [&out](std::string path, std::string message) {
    out.push_back({std::move(path), std::move(message)});
  };

  if (registry.version.empty()) add("", "version is empty");

  std::set<std::string> crop_ids;
  for (const auto& crop : registry.crops) {
    const std::string cpath = crop.id;
    if (crop.id.empty()) add(cpath, "crop id is empty");
    if (!crop_ids.insert(crop.id).second) add(cpath, "duplicate crop id '" + crop.id + "'");

    std::set<std::string> intent_ids;
    for (const auto& intent : crop.intents) {
      const std::string ipath = cpath + "/" + intent.id;
      if (intent.id.empty()) add(ipath, "intent id is empty");
      if (!intent_ids.insert(intent.id).second) {
        add(ipath, "duplicate intent id '" + intent.id + "'");
      }
      if (intent.crop_id != crop.id) {
        add(ipath, "crop_id '" + intent.crop_id + "' does not match enclosing crop");
      }
      if (intent.slots.size() < kMinSlots || intent.slots.size() > kMaxSlots) {
        add(ipath, "slot count out of range [2,5]: " + std::to_string(intent.slots.size()));
      }

      std::set<std::string> slot_ids;
      for (const auto& slot : intent.slots) {
        const std::string spath = ipath + "/" + slot.id;
        if (slot.id.empty()) add(spath, "slot id is empty");
        if (!slot_ids.insert(slot.id).second) {
          add(spath, "duplicate slot id '" + slot.id + "'");
        }
        if (slot.question_template.empty()) add(spath, "question_template is empty");
        if (slot.value_kind == ValueKind::Enumerated && slot.allowed_values.empty()) {
          add(spath, "enumerated slot has no allowed_values");
        }
        if (slot.value_kind == ValueKind::FreeText && !slot.allowed_values.empty()) {
          add(spath, "free_text slot must not list allowed_values");
        }
      }
    }
  }
  return out;
}

namespace {

void check_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError(where + ": unknown key '" + key + "'");
  }
}

std::string req_string(const YAML::Node& node, const char* key, const std::string& where) {
  const auto v = node[key];
  if (!v || !v.IsScalar()) throw ParseError(where + ": missing string field '" + key + "'");
  return v.as<std::string>();
}

std::string opt_string(const YAML::Node& node, const char* key) {
  const auto v = node[key];
  return v && v.IsScalar() ? v.as<std::string>() : std::string{};
}

std::vector<std::string> opt_string_list(const YAML::Node& node, const char* key,
                                         const std::string& where) {
  std::vector<std::string> out;
  const auto v = node[key];
  if (!v) return out;
  if (!v.IsSequence()) throw ParseError(where + ": '" + key + "' must be a list");
  for (const auto& e : v) out.push_back(e.as<std::string>());
  return out;
}

const YAML::Node& require_seq(const YAML::Node& n, const std::string& where) {
  if (!n || !n.IsSequence()) throw ParseError(where + " must be a list");
  return n;
}

SlotDef parse_slot(const YAML::Node& n, const std::string& where) {
  if (!n.IsMap()) throw ParseError(where + ": slot must be a mapping");
  check_keys(n, {"id", "display_name", "question_template", "value_kind",
                 "allowed_values", "required"},
             where);
  SlotDef s;
  s.id = req_string(n, "id", where);
  s.display_name = req_string(n, "display_name", where);
  s.question_template = opt_string(n, "question_template");
  const auto kind = n["value_kind"] ? n["value_kind"].as<std::string>() : "free_text";
  if (kind == "free_text") {
    s.value_kind = ValueKind::FreeText;
  } else if (kind == "enumerated") {
    s.value_kind = ValueKind::Enumerated;
  } else {
    throw ParseError(where + ": value_kind must be free_text or enumerated");
  }
  s.allowed_values = opt_string_list(n, "allowed_values", where);
  s.required = n["required"] ? n["required"].as<bool>() : true;
  return s;
}

}  // namespace

Registry parse_registry(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("registry is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) throw ParseError("registry file is empty");
  if (!root.IsMap()) throw ParseError("registry root must be a mapping");

  try {
    check_keys(root, {"version", "crops"}, "registry");
    Registry reg;
    reg.version = req_string(root, "version", "registry");
    for (const auto& cn : require_seq(root["crops"], "registry.crops")) {
      const std::string cwhere = "crop '" + opt_string(cn, "id") + "'";
      if (!cn.IsMap()) throw ParseError("crop entries must be mappings");
      check_keys(cn, {"id", "display_name", "aliases", "intents"}, cwhere);
      CropProfile crop;
      crop.id = req_string(cn, "id", cwhere);
      crop.display_name = req_string(cn, "display_name", cwhere);
      crop.aliases = opt_string_list(cn, "aliases", cwhere);
      for (const auto& in : require_seq(cn["intents"], cwhere + ".intents")) {
        const std::string iwhere = cwhere + " intent '" + opt_string(in, "id") + "'";
        if (!in.IsMap()) throw ParseError(iwhere + ": intent must be a mapping");
        check_keys(in, {"id", "display_name", "description", "synthesized", "slots"},
                   iwhere);
        IntentDef intent;
        intent.id = req_string(in, "id", iwhere);
        intent.display_name = req_string(in, "display_name", iwhere);
        intent.crop_id = crop.id;
        intent.description = opt_string(in, "description");
        intent.synthesized = in["synthesized"] ? in["synthesized"].as<bool>() : false;
        for (const auto& sn : require_seq(in["slots"], iwhere + ".slots")) {
          intent.slots.push_back(parse_slot(sn, iwhere));
        }
        crop.intents.push_back(std::move(intent));
      }
      reg.crops.push_back(std::move(crop));
    }
    return reg;
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("registry has a malformed field: ") + e.what());
  }
}

Registry load_registry_text(std::string_view yaml_text) {
  Registry reg = parse_registry(yaml_text);
  auto violations = validate_registry(reg);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return reg;
}

Registry load_registry(const std::filesystem::path& path) {
  return load_registry_text(read_file(path));
}

std::string serialize_registry(const Registry& registry) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << YAML::DoubleQuoted << registry.version;
  out << YAML::Key << "crops" << YAML::Value << YAML::BeginSeq;
  for (const auto& crop : registry.crops) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << crop.id;
    out << YAML::Key << "display_name" << YAML::Value << crop.display_name;
    if (!crop.aliases.empty()) {
      out << YAML::Key << "aliases" << YAML::Value << YAML::Flow << crop.aliases;
    }
    out << YAML::Key << "intents" << YAML::Value << YAML::BeginSeq;
    for (const auto& intent : crop.intents) {
      out << YAML::BeginMap;
      out << YAML::Key << "id" << YAML::Value << intent.id;
      out << YAML::Key << "display_name" << YAML::Value << intent.display_name;
      out << YAML::Key << "description" << YAML::Value << intent.description;
      out << YAML::Key << "synthesized" << YAML::Value << intent.synthesized;
      out << YAML::Key << "slots" << YAML::Value << YAML::BeginSeq;
      for (const auto& slot : intent.slots) {
        out << YAML::BeginMap;
        out << YAML::Key << "id" << YAML::Value << slot.id;
        out << YAML::Key << "display_name" << YAML::Value << slot.display_name;
        out << YAML::Key << "question_template" << YAML::Value << YAML::DoubleQuoted
            << slot.question_template;
        out << YAML::Key << "value_kind" << YAML::Value << std::string(to_string(slot.value_kind));
        if (!slot.allowed_values.empty()) {
          out << YAML::Key << "allowed_values" << YAML::Value << YAML::Flow
              << slot.allowed_values;
        }
        out << YAML::Key << "required" << YAML::Value << slot.required;
        out << YAML::EndMap;
      }
      out << YAML::EndSeq << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

const CropProfile& lookup_crop(const Registry& registry, std::string_view crop_id) {
  if (const auto* crop = registry.find_crop(crop_id)) return *crop;
  throw NotFound("unknown crop '" + std::string(crop_id) + "'");
}

const IntentDef& lookup_intent(const Registry& registry, std::string_view crop_id,
                               std::string_view intent_id) {
  const auto& crop = lookup_crop(registry, crop_id);
  if (const auto* intent = crop.find_intent(intent_id)) return *intent;
  throw NotFound("unknown intent '" + std::string(intent_id) + "' for crop '" +
                 std::string(crop_id) + "'");
}

std::string render_question(const SlotDef& slot, std::string_view crop_name,
                            std::string_view intent_name) {
  std::string out;
  const std::string& t = slot.question_template;
  for (std::size_t i = 0; i < t.size();) {
    if (t.compare(i, 6, "{crop}") == 0) {
      out += crop_name;
      i += 6;
    } else if (t.compare(i, 8, "{intent}") == 0) {
      out += intent_name;
      i += 8;
    } else {
      out.push_back(t[i++]);
    }
  }
  return out;
}

}  // namespace sathi::schema
