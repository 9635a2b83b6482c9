#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "sathi/common.hpp"

namespace sathi::lingua {

enum class Language { En, Hi, Unknown };

std::string_view to_tag(Language lang) noexcept;
/// "en" / "hi"; anything else is nullopt.
std::optional<Language> parse_tag(std::string_view tag) noexcept;

/// Relative frequency of every non-whitespace code point in a corpus.
struct CharFreqDict {
  Language language = Language::En;
  std::map<char32_t, double> freq;
  std::string built_from;

  double lookup(char32_t c) const noexcept;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class DictFormatError : public Error {
 public:
  using Error::Error;
};

CharFreqDict build_char_dict(std::span<const std::string> corpus, Language language,
                             std::string built_from = {});

/// Text table: "#" header lines, then one "U+XXXX<TAB>frequency" per line.
std::string serialize_dict(const CharFreqDict& dict);
CharFreqDict parse_dict(std::string_view text);
CharFreqDict load_dict(const std::filesystem::path& path);

struct LanguageVerdict {
  Language language = Language::Unknown;
  double score_en = 0.0;
  double score_hi = 0.0;
};

/// Additive smoothing applied before taking logs.
inline constexpr double kSmoothing = 1e-9;

/// Mean per-character log-likelihood under each dictionary. Whitespace is
/// skipped; empty or whitespace-only input is Unknown; exact ties go to
/// English.
LanguageVerdict detect_language(std::string_view text, const CharFreqDict& en,
                                const CharFreqDict& hi);

class TranslationError : public Error {
 public:
  TranslationError(const std::string& what, std::string original_text)
      : Error(what), original_text_(std::move(original_text)) {}
  const std::string& original_text() const noexcept { return original_text_; }

 private:
  std::string original_text_;
};

/// Implementations must be safe to call from several threads.
class TranslationClient {
 public:
  virtual ~TranslationClient() = default;
  virtual std::string translate(const std::string& text, Language source,
                                Language target) = 0;
};

/// Returns its input verbatim.
class IdentityTranslator final : public TranslationClient {
 public:
  std::string translate(const std::string& text, Language, Language) override {
    return text;
  }
};

/// POST {text, source, target} -> {text}. The API key, when configured, is
/// sent as a bearer token.
class HttpTranslator final : public TranslationClient {
 public:
  HttpTranslator(std::string endpoint, std::string api_key,
                 std::chrono::milliseconds timeout);
  std::string translate(const std::string& text, Language source,
                        Language target) override;

 private:
  std::string endpoint_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

struct EnglishText {
  std::string text;
  Language original = Language::En;
};

/// Hindi goes through the client; English passes through untouched.
/// Throws TranslationError (with the original text) on client failure.
EnglishText to_english(const std::string& text, const LanguageVerdict& verdict,
                       TranslationClient& client);
std::string from_english(const std::string& text, Language target,
                         TranslationClient& client);

}  // namespace sathi::lingua
