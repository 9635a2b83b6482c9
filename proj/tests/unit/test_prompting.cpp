#include <gtest/gtest.h>

#include <random>

#include "sathi/prompting.hpp"
#include "support/test_support.hpp"

namespace sathi::prompting {
namespace {

const PromptTemplate& shipped() {
  static const auto t = load_template(testing::data_dir() / "prompt_template.yaml");
  return t;
}

std::size_t ceil43(std::size_t words) { return (4 * words + 2) / 3; }

// Word count of the rendered prompt, derived from the block formats.
std::size_t oracle_words(const PromptTemplate& t, const std::string& query, std::size_t examples,
                         std::optional<std::size_t> context_words) {
  std::size_t w = count_words(t.system_preamble);
  for (std::size_t i = 0; i < examples; ++i) {
    const auto& e = t.examples[i];
    // "Example N", "Query:", "Reference passage:", "Answer:"
    w += 2 + 1 + count_words(e.query) + 2 + count_words(e.context) + 1 + count_words(e.answer);
  }
  w += context_words ? 2 + *context_words : count_words(kNoContextBlock);
  w += 1 + count_words(query) + 1;
  return w;
}

TEST(Estimate, CeilFourThirdsOfWords) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("one"), 2u);
  EXPECT_EQ(estimate_tokens("one two three"), 4u);
  EXPECT_EQ(estimate_tokens(" a\tb\nc  d e f "), 8u);
}

TEST(Template, ShippedTemplateIsValid) {
  EXPECT_TRUE(shipped().problems().empty());
  EXPECT_EQ(shipped().examples.size(), 3u);
  EXPECT_EQ(shipped().layout,
            (std::vector<Block>{Block::Preamble, Block::Examples, Block::Context, Block::Query}));
}

TEST(Template, Validation) {
  EXPECT_THROW(parse_template("preamble: x\nexamples: []\n"), TemplateError);
  EXPECT_THROW(parse_template("- a\n"), TemplateError);
  auto t = shipped();
  t.layout = {Block::Preamble, Block::Query, Block::Query, Block::Context};
  EXPECT_FALSE(t.problems().empty());
  t = shipped();
  t.examples[1].answer = " ";
  EXPECT_THROW(assemble_prompt(t, "q", std::nullopt), TemplateError);
  EXPECT_THROW(parse_template(
                   "preamble: p\nexamples:\n  - {query: a, context: b, answer: c}\n"
                   "  - {query: a, context: b, answer: c}\nlayout: [preamble, footer]\n"),
               TemplateError);
}

TEST(Assemble, DefaultLayoutOrder) {
  const auto p = assemble_prompt(shipped(), "which grape variety; crop: grapes", "Choose by market.");
  EXPECT_EQ(p.system, shipped().system_preamble);
  EXPECT_TRUE(p.text.starts_with(shipped().system_preamble));
  const auto ex = p.text.find("Example 1\n");
  const auto ctx = p.text.find("Reference passage:\nChoose by market.");
  const auto q = p.text.find("Query: which grape variety; crop: grapes\nAnswer:");
  EXPECT_LT(ex, ctx);
  EXPECT_LT(ctx, q);
  EXPECT_NE(q, std::string::npos);
  EXPECT_TRUE(p.text.ends_with("Answer:"));
  EXPECT_EQ(p.human.find(shipped().system_preamble), std::string::npos);
  EXPECT_EQ(p.examples_used, 3u);
  EXPECT_TRUE(p.has_context);
  EXPECT_TRUE(p.truncations.empty());
  EXPECT_EQ(p.token_estimate, ceil43(oracle_words(shipped(), "which grape variety; crop: grapes", 3, 3)));
}

TEST(Assemble, CustomLayoutAndNoContext) {
  auto t = shipped();
  t.layout = {Block::Query, Block::Context, Block::Examples, Block::Preamble};
  const auto p = assemble_prompt(t, "q", std::nullopt);
  EXPECT_TRUE(p.text.starts_with("Query: q\nAnswer:"));
  EXPECT_TRUE(p.text.ends_with(t.system_preamble));
  EXPECT_LT(p.text.find(kNoContextBlock), p.text.find("Example 1"));
  EXPECT_FALSE(p.has_context);
}

TEST(Assemble, LadderStepsInOrder) {
  const std::string q = "how to water onions";
  std::mt19937_64 rng(1);
  const std::string ctx = testing::random_words(rng, 300);
  const auto full = ceil43(oracle_words(shipped(), q, 3, 300));
  const auto two = ceil43(oracle_words(shipped(), q, 2, 300));
  const auto one = ceil43(oracle_words(shipped(), q, 1, 300));
  auto at = [&](std::size_t available) {
    return assemble_prompt(shipped(), q, ctx, TokenBudget{available + 100, 100});
  };
  EXPECT_TRUE(at(full).truncations.empty());
  EXPECT_EQ(at(full - 1).truncations, std::vector<Truncation>{Truncation::DroppedThirdExample});
  EXPECT_EQ(at(two - 1).truncations,
            (std::vector<Truncation>{Truncation::DroppedThirdExample, Truncation::DroppedSecondExample}));
  const auto cut = at(one - 1);
  EXPECT_EQ(cut.truncations.back(), Truncation::TruncatedContext);
  EXPECT_EQ(cut.examples_used, 1u);
  EXPECT_TRUE(cut.has_context);
  EXPECT_LE(cut.token_estimate, one - 1);
}

TEST(Assemble, ThirtyWordQueryAndTwoHundredWordPassageFitUntouched) {
  std::mt19937_64 rng(30);
  const auto q = testing::random_words(rng, 30);
  const auto ctx = testing::random_words(rng, 200);
  const auto p = assemble_prompt(shipped(), q, ctx);
  EXPECT_TRUE(p.truncations.empty());
  EXPECT_EQ(p.token_estimate, ceil43(oracle_words(shipped(), q, 3, 200)));
  EXPECT_LE(p.token_estimate + 512, 2048u);
  EXPECT_NE(p.text.find(ctx), std::string::npos);
  // Same inputs, same bytes.
  EXPECT_EQ(assemble_prompt(shipped(), q, ctx).text, p.text);
}

TEST(Assemble, BudgetImpossibleAndBadBudget) {
  std::mt19937_64 rng(3000);
  EXPECT_THROW(assemble_prompt(shipped(), testing::random_words(rng, 3000), "ctx"), BudgetImpossible);
  EXPECT_THROW(assemble_prompt(shipped(), "q", "ctx", TokenBudget{60, 10}), BudgetImpossible);
  EXPECT_THROW(assemble_prompt(shipped(), "q", "ctx", TokenBudget{100, 100}), std::invalid_argument);
  EXPECT_THROW(assemble_prompt(shipped(), " ", "ctx"), std::invalid_argument);
}

TEST(Assemble, FuzzedBudgetsNeverOverflow) {
  std::mt19937_64 rng(2026);
  const auto& t = shipped();
  for (int i = 0; i < 1000; ++i) {
    const auto q = testing::random_words(rng, 1 + rng() % 40);
    const bool with_ctx = rng() % 4 != 0;
    const std::size_t ctx_words = rng() % 600;
    const auto ctx = testing::random_words(rng, ctx_words);
    const std::size_t avail = 20 + rng() % 900;
    const TokenBudget budget{avail + 256, 256};
    const std::optional<std::string_view> context =
        with_ctx ? std::optional<std::string_view>(ctx) : std::nullopt;
    const auto ctx_n = with_ctx ? std::optional<std::size_t>(ctx_words) : std::nullopt;

    // Smallest prompt the ladder can reach.
    const auto min_ctx = with_ctx && ctx_words > 0 ? std::optional<std::size_t>(1) : std::nullopt;
    const bool feasible = ceil43(oracle_words(t, q, 1, min_ctx)) <= avail;
    if (!feasible) {
      EXPECT_THROW(assemble_prompt(t, q, context, budget), BudgetImpossible);
      continue;
    }
    const auto p = assemble_prompt(t, q, context, budget);
    ASSERT_LE(p.token_estimate, avail);
    ASSERT_EQ(p.token_estimate, estimate_tokens(p.text));
    ASSERT_GE(p.examples_used, 1u);
    ASSERT_NE(p.text.find("Query: " + q + "\nAnswer:"), std::string::npos);
    // The ladder stops as soon as the prompt fits.
    const auto& tr = p.truncations;
    const std::vector<Truncation> order = {Truncation::DroppedThirdExample,
                                           Truncation::DroppedSecondExample,
                                           Truncation::TruncatedContext};
    ASSERT_TRUE(std::equal(tr.begin(), tr.end(), order.begin()));
    if (tr.empty()) EXPECT_EQ(p.examples_used, 3u);
    if (tr.size() >= 1) EXPECT_GT(ceil43(oracle_words(t, q, 3, ctx_n)), avail);
    if (tr.size() >= 2) EXPECT_GT(ceil43(oracle_words(t, q, 2, ctx_n)), avail);
    if (tr.size() == 3) {
      EXPECT_GT(ceil43(oracle_words(t, q, 1, ctx_n)), avail);
      // A kept context is a word prefix, and one more word would not fit.
      const auto start = p.text.find("Reference passage:\n");
      ASSERT_NE(start, std::string::npos);
      const auto kept_end = p.text.find("\n\nQuery: ", start);
      const auto kept = p.text.substr(start + 19, kept_end - start - 19);
      EXPECT_TRUE(ctx.starts_with(kept));
      const auto kept_words = count_words(kept);
      EXPECT_LT(kept_words, ctx_words);
      EXPECT_GT(ceil43(oracle_words(t, q, 1, kept_words + 1)), avail);
    } else {
      EXPECT_EQ(p.has_context, with_ctx);
    }
  }
}

}  // namespace
}  // namespace sathi::prompting
