#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sathi/common.hpp"

namespace sathi::curation {

struct RawDoc {
  std::string id;
  std::string source_url;
  std::string text;
  std::string fetched_at;  // ISO-8601
  /// Set by the reader when the input record could not be decoded; such
  /// documents are reported and dropped by run_pipeline.
  std::string decode_error;
};

struct FilterConfig {
  std::size_t min_word_count = 50;
  double max_whitespace_ratio = 0.4;
  std::size_t ngram_n = 3;
  double max_ngram_repetition_ratio = 0.3;
  double max_numeric_ratio = 0.3;
  std::vector<std::string> boilerplate_patterns;
  /// Paragraphs are merged until a passage reaches this many words.
  std::size_t passage_target_words = 150;

  /// Returns one message per broken invariant.
  std::vector<std::string> problems() const;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed passages or documents file.
class InputError : public Error {
 public:
  using Error::Error;
};

FilterConfig load_filter_config(const std::filesystem::path& path);
FilterConfig parse_filter_config(std::string_view yaml_text);

struct CurationReport {
  std::string doc_id;
  std::vector<std::string> stages_applied;
  std::vector<std::string> filters_triggered;
  bool retained = false;
  std::size_t words_before = 0;
  std::size_t words_after = 0;
  std::string error;  // non-empty only for undecodable input

  bool operator==(const CurationReport&) const = default;
};

struct Passage {
  std::string id;
  std::string doc_id;
  std::string text;
  std::size_t ordinal = 0;
  /// Optional tags carried into the index (crop, source, intent).
  std::map<std::string, std::string> meta;

  bool operator==(const Passage&) const = default;
};

// Stage and filter names as they appear in reports.
inline constexpr std::string_view kStripHtml = "strip_html";
inline constexpr std::string_view kNormalizeUnicode = "normalize_unicode";
inline constexpr std::string_view kRemoveBoilerplate = "remove_boilerplate";
inline constexpr std::string_view kCollapseWhitespace = "collapse_whitespace";

inline constexpr std::string_view kWordCountFilter = "word_count";
inline constexpr std::string_view kWhitespaceFilter = "whitespace";
inline constexpr std::string_view kRepeatingNgramFilter = "repeating_ngram";
inline constexpr std::string_view kNumericalDominanceFilter = "numerical_dominance";
inline constexpr std::string_view kDecodeError = "decode_error";

// --- modification stages --------------------------------------------------

/// Removes markup. Script and style contents are dropped; block-level tags
/// become line breaks; a '<' that does not open a tag is kept as text.
std::string strip_html(std::string_view text);

/// NFC composition after removing zero-width and control characters
/// (newline and tab survive; CR and CRLF become newline).
std::string normalize_unicode(std::string_view text);

/// Space/tab runs become one space, 3+ newlines become 2, ends trimmed.
std::string collapse_whitespace(std::string_view text);

/// Drops lines whose trimmed content equals one of the patterns.
std::string remove_boilerplate(std::string_view text,
                               std::span<const std::string> patterns);

/// All four stages in pipeline order, repeated until the text is stable so
/// the composition is idempotent.
std::string apply_modifications(std::string_view text, const FilterConfig& cfg);

// --- filters (true = pass) -----------------------------------------------

double whitespace_ratio(std::string_view text);
double ngram_repetition_ratio(std::string_view text, std::size_t n);
double numeric_ratio(std::string_view text);

bool word_count_filter(std::string_view text, const FilterConfig& cfg);
bool whitespace_filter(std::string_view text, const FilterConfig& cfg);
bool repeating_ngram_filter(std::string_view text, const FilterConfig& cfg);
bool numerical_dominance_filter(std::string_view text, const FilterConfig& cfg);

/// Name of the first failing filter in pipeline order, if any.
std::optional<std::string_view> first_failing_filter(std::string_view text,
                                                     const FilterConfig& cfg);

// --- passages and pipeline -------------------------------------------------

std::vector<Passage> split_passages(std::string_view text, std::size_t target_words,
                                    std::string_view doc_id = {});

struct PipelineResult {
  std::vector<Passage> passages;
  std::vector<CurationReport> reports;
};

/// Runs every document through the stages and filters. Reports come back in
/// input order regardless of `threads`.
PipelineResult run_pipeline(std::span<const RawDoc> docs, const FilterConfig& cfg,
                            unsigned threads = 1);

struct CurationSummary {
  std::size_t docs_in = 0;
  std::size_t docs_out = 0;
  std::size_t decode_errors = 0;
  std::size_t words_in = 0;
  std::size_t words_out = 0;
  std::size_t passages = 0;
  std::optional<double> retention_ratio;  // docs_out / docs_in
  std::map<std::string, std::size_t> filter_counts;
};

CurationSummary summarize(const PipelineResult& result);

// --- line-delimited I/O ----------------------------------------------------

/// One JSON object per line with id, source_url, text, fetched_at. Lines
/// that fail to decode become RawDocs with decode_error set.
std::vector<RawDoc> read_raw_docs(const std::filesystem::path& path);
std::vector<RawDoc> parse_raw_docs(std::string_view jsonl);

std::string to_jsonl(std::span<const Passage> passages);
std::string to_jsonl(std::span<const CurationReport> reports);
std::string summary_json(const CurationSummary& summary);

std::vector<Passage> parse_passages(std::string_view jsonl);
std::vector<Passage> read_passages(const std::filesystem::path& path);

}  // namespace sathi::curation
