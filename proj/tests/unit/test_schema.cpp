#include <gtest/gtest.h>

#include <random>

#include "sathi/schema.hpp"
#include "support/test_support.hpp"

namespace sathi::schema {
namespace {

const Registry& shipped() {
  static const Registry r = load_registry(testing::data_dir() / "registry.yaml");
  return r;
}

std::vector<std::string> slot_ids(const IntentDef& i) {
  std::vector<std::string> out;
  for (const auto& s : i.slots) out.push_back(s.id);
  return out;
}

constexpr const char* kSmall = R"(version: "t1"
crops:
  - id: okra
    display_name: Okra
    aliases: [bhindi]
    intents:
      - id: sowing
        display_name: Sowing
        description: When to sow
        slots:
          - id: state
            display_name: State
            question_template: Which state is your {crop} farm in?
            value_kind: free_text
          - id: season
            display_name: Season
            question_template: Which season for {intent}?
            value_kind: enumerated
            allowed_values: [kharif, rabi]
)";

TEST(Registry, ShippedCounts) {
  const auto& r = shipped();
  ASSERT_EQ(r.crops.size(), 2u);
  EXPECT_EQ(r.crops[0].id, "grapes");
  EXPECT_EQ(r.crops[0].intents.size(), 25u);
  EXPECT_EQ(r.crops[1].id, "onions");
  EXPECT_EQ(r.crops[1].intents.size(), 22u);
}

TEST(Registry, EveryShippedIntentHasTwoToFiveSlots) {
  std::size_t intents = 0;
  for (const auto& c : shipped().crops) {
    for (const auto& i : c.intents) {
      ++intents;
      EXPECT_GE(i.slots.size(), kMinSlots) << i.id;
      EXPECT_LE(i.slots.size(), kMaxSlots) << i.id;
    }
  }
  EXPECT_EQ(intents, 47u);
}

TEST(Registry, ReferenceIntentSlotOrder) {
  EXPECT_EQ(slot_ids(lookup_intent(shipped(), "grapes", "vineyard_variety_selection")),
            (std::vector<std::string>{"grape_variety", "climate", "expected_yield_potential",
                                      "soil_type"}));
  EXPECT_EQ(slot_ids(lookup_intent(shipped(), "onions", "time_of_transplanting")),
            (std::vector<std::string>{"state", "season", "seed_variety", "time_of_sowing"}));
}

TEST(Registry, UnknownLookupsThrowNotFound) {
  EXPECT_THROW(lookup_intent(shipped(), "wheat", "anything"), NotFound);
  EXPECT_THROW(lookup_intent(shipped(), "grapes", "nope"), NotFound);
  EXPECT_THROW(lookup_crop(shipped(), "wheat"), NotFound);
}

TEST(Registry, ShippedFileValidates) { EXPECT_TRUE(validate_registry(shipped()).empty()); }

TEST(Registry, SingleSlotIntentIsRejected) {
  auto r = load_registry_text(kSmall);
  r.crops[0].intents[0].slots.pop_back();
  const auto v = validate_registry(r);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].message.find("slot count out of range [2,5]"), std::string::npos);
  EXPECT_EQ(v[0].path, "okra/sowing");
  try {
    load_registry_text(serialize_registry(r));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.violations(), v);
  }
}

TEST(Registry, DuplicateIntentIdNamed) {
  auto r = load_registry_text(kSmall);
  r.crops[0].intents.push_back(r.crops[0].intents[0]);
  const auto v = validate_registry(r);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].message.find("'sowing'"), std::string::npos);
}

TEST(Registry, EnumeratedWithoutValues) {
  auto r = load_registry_text(kSmall);
  r.crops[0].intents[0].slots[1].allowed_values.clear();
  const auto v = validate_registry(r);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].path, "okra/sowing/season");
}

TEST(Registry, EmptyOrMalformedFileIsParseError) {
  EXPECT_THROW(load_registry_text(""), ParseError);
  EXPECT_THROW(load_registry_text("crops: [unclosed"), ParseError);
  EXPECT_THROW(load_registry_text("version: x\ncrops: 5\n"), ParseError);
}

TEST(Registry, ShippedRoundTrip) {
  const auto text = serialize_registry(shipped());
  EXPECT_EQ(load_registry_text(text), shipped());
}

// Random edits of a valid registry: serialization never changes what
// validation reports, and validation is deterministic.
TEST(Registry, RoundTripAndPurityUnderMutation) {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 60; ++round) {
    auto r = shipped();
    for (int k = 0; k < 3; ++k) {
      auto& crop = r.crops[rng() % r.crops.size()];
      auto& intent = crop.intents[rng() % crop.intents.size()];
      switch (rng() % 4) {
        case 0:
          intent.slots.pop_back();
          break;
        case 1:
          intent.id = crop.intents[0].id;
          break;
        case 2:
          intent.display_name += " x";
          break;
        default:
          intent.slots[0].question_template = "Which {crop}?";
      }
    }
    const auto v1 = validate_registry(r);
    EXPECT_EQ(v1, validate_registry(r));
    const auto reparsed = parse_registry(serialize_registry(r));
    EXPECT_EQ(reparsed, r);
    EXPECT_EQ(validate_registry(reparsed), v1);
  }
}

TEST(Registry, RenderQuestionExpandsPlaceholders) {
  const auto r = load_registry_text(kSmall);
  const auto& i = r.crops[0].intents[0];
  EXPECT_EQ(render_question(i.slots[0], "Okra", "Sowing"), "Which state is your Okra farm in?");
  EXPECT_EQ(render_question(i.slots[1], "Okra", "Sowing"), "Which season for Sowing?");
}

TEST(Registry, AliasesAndOrderKept) {
  const auto r = load_registry_text(kSmall);
  EXPECT_EQ(r.crops[0].aliases, std::vector<std::string>{"bhindi"});
  EXPECT_EQ(r.crops[0].intents[0].crop_id, "okra");
  EXPECT_EQ(r.crops[0].intents[0].slots[1].value_kind, ValueKind::Enumerated);
}

}  // namespace
}  // namespace sathi::schema
