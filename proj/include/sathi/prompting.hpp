#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sathi/common.hpp"

namespace sathi::prompting {

struct FewShotExample {
  std::string query;
  std::string context;
  std::string answer;

  bool operator==(const FewShotExample&) const = default;
};

enum class Block { Preamble, Examples, Context, Query };

std::string_view to_string(Block block) noexcept;

struct PromptTemplate {
  std::string system_preamble;
  std::vector<FewShotExample> examples;
  std::vector<Block> layout{Block::Preamble, Block::Examples, Block::Context, Block::Query};

  /// Empty when the template is usable.
  std::vector<std::string> problems() const;

  bool operator==(const PromptTemplate&) const = default;
};

struct TokenBudget {
  std::size_t context_limit = 2048;
  std::size_t reserve_for_answer = 512;

  std::size_t available() const noexcept {
    return context_limit > reserve_for_answer ? context_limit - reserve_for_answer : 0;
  }
};

class TemplateError : public Error {
 public:
  using Error::Error;
};
class BudgetImpossible : public Error {
 public:
  using Error::Error;
};

class TokenEstimator {
 public:
  virtual ~TokenEstimator() = default;
  virtual std::size_t estimate(std::string_view text) const = 0;
};

/// ceil(words * 4 / 3), words being whitespace-delimited runs.
class WordHeuristicEstimator final : public TokenEstimator {
 public:
  std::size_t estimate(std::string_view text) const override;
};

std::size_t estimate_tokens(std::string_view text);

enum class Truncation { DroppedThirdExample, DroppedSecondExample, TruncatedContext };

std::string_view to_string(Truncation t) noexcept;

struct AssembledPrompt {
  std::string system;  // the preamble
  std::string human;   // every other block, in layout order
  /// Full rendering in layout order; what the estimate is computed over.
  std::string text;
  std::size_t token_estimate = 0;
  /// Estimate with examples and context left out.
  std::size_t skeleton_tokens = 0;
  std::size_t examples_used = 0;
  bool has_context = false;
  std::vector<Truncation> truncations;
};

inline constexpr std::string_view kNoContextBlock =
    "No reference passage is available for this question. Answer conservatively, say "
    "what you are unsure about, and suggest consulting a local agriculture officer.";

/// Fits the prompt into budget.available() tokens by dropping the third, then
/// the second example, then cutting the context to a word prefix. Throws
/// BudgetImpossible when even that does not fit.
AssembledPrompt assemble_prompt(const PromptTemplate& tmpl, std::string_view enriched_query,
                                std::optional<std::string_view> context,
                                const TokenBudget& budget = {},
                                const TokenEstimator& estimator = WordHeuristicEstimator{});

/// YAML: preamble, examples[{query, context, answer}], layout[...].
PromptTemplate parse_template(std::string_view yaml_text);
PromptTemplate load_template(const std::filesystem::path& path);

}  // namespace sathi::prompting
