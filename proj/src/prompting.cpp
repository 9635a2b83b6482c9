#include "sathi/prompting.hpp"

#include <algorithm>

#include <yaml-cpp/yaml.h>

namespace sathi::prompting {

std::string_view to_string(Block block) noexcept {
  switch (block) {
    case Block::Preamble:
      return "preamble";
    case Block::Examples:
      return "examples";
    case Block::Context:
      return "context";
    case Block::Query:
      break;
  }
  return "query";
}

std::string_view to_string(Truncation t) noexcept {
  switch (t) {
    case Truncation::DroppedThirdExample:
      return "dropped_third_example";
    case Truncation::DroppedSecondExample:
      return "dropped_second_example";
    case Truncation::TruncatedContext:
      break;
  }
  return "truncated_context";
}

std::vector<std::string> PromptTemplate::problems() const {
  std::vector<std::string> out;
  if (trim(system_preamble).empty()) out.push_back("preamble is empty");
  if (examples.size() < 2 || examples.size() > 3) {
    out.push_back("template needs 2 or 3 examples, has " + std::to_string(examples.size()));
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (trim(e.query).empty() || trim(e.context).empty() || trim(e.answer).empty()) {
      out.push_back("example " + std::to_string(i + 1) + " has an empty field");
    }
  }
  for (Block b : {Block::Preamble, Block::Examples, Block::Context, Block::Query}) {
    const auto n = std::count(layout.begin(), layout.end(), b);
    if (n != 1) {
      out.push_back("layout must contain '" + std::string(to_string(b)) + "' exactly once");
    }
  }
  if (layout.size() != 4 && out.empty()) out.push_back("layout has unknown entries");
  return out;
}

std::size_t WordHeuristicEstimator::estimate(std::string_view text) const {
  return estimate_tokens(text);
}

std::size_t estimate_tokens(std::string_view text) {
  const auto words = count_words(text);
  return (words * 4 + 2) / 3;
}

namespace {

struct Parts {
  std::size_t examples = 0;
  bool include_context = true;
  std::optional<std::string_view> context;
};

std::string render_examples(const PromptTemplate& tmpl, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = tmpl.examples[i];
    if (!out.empty()) out += "\n\n";
    out += "Example " + std::to_string(i + 1) + "\n";
    out += "Query: " + e.query + "\n";
    out += "Reference passage: " + e.context + "\n";
    out += "Answer: " + e.answer;
  }
  return out;
}

AssembledPrompt render(const PromptTemplate& tmpl, std::string_view query, const Parts& parts,
                       const TokenEstimator& estimator) {
  AssembledPrompt p;
  p.system = tmpl.system_preamble;
  p.examples_used = parts.examples;
  p.has_context = parts.context.has_value();
  std::vector<std::string> human_blocks;
  std::vector<std::string> all_blocks;
  std::vector<std::string> skeleton_blocks;
  for (Block b : tmpl.layout) {
    std::string block;
    std::string skeleton;
    switch (b) {
      case Block::Preamble:
        block = skeleton = tmpl.system_preamble;
        break;
      case Block::Examples:
        block = render_examples(tmpl, parts.examples);
        break;
      case Block::Context:
        block = parts.context ? "Reference passage:\n" + std::string(*parts.context)
                              : std::string(kNoContextBlock);
        break;
      case Block::Query:
        block = skeleton = "Query: " + std::string(query) + "\nAnswer:";
        break;
    }
    if (block.empty()) continue;
    if (b != Block::Preamble) human_blocks.push_back(block);
    if (!skeleton.empty()) skeleton_blocks.push_back(skeleton);
    all_blocks.push_back(std::move(block));
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& b : v) {
      if (!s.empty()) s += "\n\n";
      s += b;
    }
    return s;
  };
  p.human = join(human_blocks);
  p.text = join(all_blocks);
  p.token_estimate = estimator.estimate(p.text);
  p.skeleton_tokens = estimator.estimate(join(skeleton_blocks));
  return p;
}

// Byte offset just past the n-th word.
std::size_t prefix_end(std::string_view text, std::size_t n) {
  std::size_t words = 0;
  std::size_t i = 0;
  while (i < text.size() && words < n) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    ++words;
  }
  return i;
}

}  // namespace

AssembledPrompt assemble_prompt(const PromptTemplate& tmpl, std::string_view enriched_query,
                                std::optional<std::string_view> context,
                                const TokenBudget& budget, const TokenEstimator& estimator) {
  if (trim(enriched_query).empty()) throw std::invalid_argument("enriched query is empty");
  if (const auto p = tmpl.problems(); !p.empty()) throw TemplateError(p.front());
  if (budget.reserve_for_answer >= budget.context_limit) {
    throw std::invalid_argument("reserve_for_answer must be below context_limit");
  }
  const auto limit = budget.available();

  Parts parts{tmpl.examples.size(), true, context};
  std::vector<Truncation> steps;
  auto attempt = render(tmpl, enriched_query, parts, estimator);

  if (attempt.token_estimate > limit && parts.examples >= 3) {
    parts.examples = 2;
    steps.push_back(Truncation::DroppedThirdExample);
    attempt = render(tmpl, enriched_query, parts, estimator);
  }
  if (attempt.token_estimate > limit && parts.examples >= 2) {
    parts.examples = 1;
    steps.push_back(Truncation::DroppedSecondExample);
    attempt = render(tmpl, enriched_query, parts, estimator);
  }
  if (attempt.token_estimate > limit && context) {
    steps.push_back(Truncation::TruncatedContext);
    const auto total = count_words(*context);
    // Largest word prefix that fits; the estimate is monotone in its length.
    std::size_t lo = 0;
    std::size_t hi = total;
    while (lo < hi) {
      const auto mid = lo + (hi - lo + 1) / 2;
      parts.context = context->substr(0, prefix_end(*context, mid));
      if (render(tmpl, enriched_query, parts, estimator).token_estimate <= limit) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    // Zero words left means no usable grounding: render the conservative block.
    parts.context = lo == 0 ? std::nullopt
                            : std::optional<std::string_view>(
                                  context->substr(0, prefix_end(*context, lo)));
    attempt = render(tmpl, enriched_query, parts, estimator);
  }
  if (attempt.token_estimate > limit) {
    throw BudgetImpossible("prompt needs " + std::to_string(attempt.token_estimate) +
                           " tokens but only " + std::to_string(limit) + " are available");
  }
  attempt.truncations = std::move(steps);
  return attempt;
}

PromptTemplate parse_template(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw TemplateError(std::string("template is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw TemplateError("template must be a mapping");
  PromptTemplate t;
  try {
    t.system_preamble = std::string(trim(root["preamble"].as<std::string>("")));
    if (const auto ex = root["examples"]; ex) {
      if (!ex.IsSequence()) throw TemplateError("examples must be a list");
      for (const auto& e : ex) {
        t.examples.push_back({std::string(trim(e["query"].as<std::string>(""))),
                              std::string(trim(e["context"].as<std::string>(""))),
                              std::string(trim(e["answer"].as<std::string>("")))});
      }
    }
    if (const auto layout = root["layout"]; layout) {
      if (!layout.IsSequence()) throw TemplateError("layout must be a list");
      t.layout.clear();
      for (const auto& item : layout) {
        const auto name = item.as<std::string>();
        if (name == "preamble") {
          t.layout.push_back(Block::Preamble);
        } else if (name == "examples") {
          t.layout.push_back(Block::Examples);
        } else if (name == "context") {
          t.layout.push_back(Block::Context);
        } else if (name == "query") {
          t.layout.push_back(Block::Query);
        } else {
          throw TemplateError("unknown layout entry '" + name + "'");
        }
      }
    }
  } catch (const YAML::Exception& e) {
    throw TemplateError(std::string("malformed template: ") + e.what());
  }
  if (const auto p = t.problems(); !p.empty()) throw TemplateError(p.front());
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  return parse_template(read_file(path));
}

}  // namespace sathi::prompting
