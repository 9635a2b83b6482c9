#include "sathi/lingua.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sathi/http_client.hpp"

namespace sathi::lingua {

std::string_view to_tag(Language lang) noexcept {
  switch (lang) {
    case Language::En:
      return "en";
    case Language::Hi:
      return "hi";
    case Language::Unknown:
      break;
  }
  return "unknown";
}

std::optional<Language> parse_tag(std::string_view tag) noexcept {
  if (tag == "en") return Language::En;
  if (tag == "hi") return Language::Hi;
  return std::nullopt;
}

double CharFreqDict::lookup(char32_t c) const noexcept {
  const auto it = freq.find(c);
  return it == freq.end() ? 0.0 : it->second;
}

CharFreqDict build_char_dict(std::span<const std::string> corpus, Language language,
                             std::string built_from) {
  std::map<char32_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& line : corpus) {
    for (char32_t c : decode_utf8(line)) {
      if (is_space(c)) continue;
      ++counts[c];
      ++total;
    }
  }
  if (total == 0) throw EmptyCorpus("corpus has no non-whitespace characters");
  CharFreqDict dict;
  dict.language = language;
  dict.built_from = std::move(built_from);
  for (const auto& [c, n] : counts) {
    dict.freq[c] = static_cast<double>(n) / static_cast<double>(total);
  }
  return dict;
}

std::string serialize_dict(const CharFreqDict& dict) {
  std::string out = "# character frequency dictionary\n";
  out += "# language: " + std::string(to_tag(dict.language)) + "\n";
  out += "# built_from: " + dict.built_from + "\n";
  char buf[64];
  for (const auto& [c, f] : dict.freq) {
    std::snprintf(buf, sizeof buf, "U+%04X\t%.17g\n", static_cast<unsigned>(c), f);
    out += buf;
  }
  return out;
}

CharFreqDict parse_dict(std::string_view text) {
  CharFreqDict dict;
  bool have_language = false;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      if (body.starts_with("language:")) {
        const auto tag = parse_tag(trim(body.substr(9)));
        if (!tag) throw DictFormatError("unknown language tag in dictionary header");
        dict.language = *tag;
        have_language = true;
      } else if (body.starts_with("built_from:")) {
        dict.built_from = std::string(trim(body.substr(11)));
      }
      continue;
    }
    unsigned cp = 0;
    double f = 0.0;
    const std::string s(line);
    if (std::sscanf(s.c_str(), "U+%X %lf", &cp, &f) != 2 || f < 0.0 || f > 1.0) {
      throw DictFormatError("dictionary line " + std::to_string(line_no) + " is malformed");
    }
    dict.freq[static_cast<char32_t>(cp)] = f;
  }
  if (!have_language) throw DictFormatError("dictionary has no language header");
  if (dict.freq.empty()) throw DictFormatError("dictionary has no entries");
  double sum = 0.0;
  for (const auto& [c, f] : dict.freq) sum += f;
  if (std::abs(sum - 1.0) > 1e-6) {
    throw DictFormatError("dictionary frequencies sum to " + std::to_string(sum));
  }
  return dict;
}

CharFreqDict load_dict(const std::filesystem::path& path) {
  return parse_dict(read_file(path));
}

LanguageVerdict detect_language(std::string_view text, const CharFreqDict& en,
                                const CharFreqDict& hi) {
  LanguageVerdict v;
  double sum_en = 0.0;
  double sum_hi = 0.0;
  std::size_t n = 0;
  std::u32string cps;
  try {
    cps = decode_utf8(text);
  } catch (const Error&) {
    return v;
  }
  for (char32_t c : cps) {
    if (is_space(c)) continue;
    sum_en += std::log(en.lookup(c) + kSmoothing);
    sum_hi += std::log(hi.lookup(c) + kSmoothing);
    ++n;
  }
  if (n == 0) return v;
  v.score_en = sum_en / static_cast<double>(n);
  v.score_hi = sum_hi / static_cast<double>(n);
  v.language = v.score_hi > v.score_en ? Language::Hi : Language::En;
  return v;
}

HttpTranslator::HttpTranslator(std::string endpoint, std::string api_key,
                               std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), timeout_(timeout) {}

std::string HttpTranslator::translate(const std::string& text, Language source,
                                      Language target) {
  http::Headers headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
  const nlohmann::json body = {
      {"text", text}, {"source", to_tag(source)}, {"target", to_tag(target)}};
  try {
    const auto res = http::post_json(endpoint_, body, timeout_, headers);
    return res.at("text").get<std::string>();
  } catch (const http::HttpError& e) {
    throw TranslationError(e.what(), text);
  } catch (const nlohmann::json::exception& e) {
    throw TranslationError(std::string("malformed translation response: ") + e.what(), text);
  }
}

EnglishText to_english(const std::string& text, const LanguageVerdict& verdict,
                       TranslationClient& client) {
  if (verdict.language == Language::Unknown) {
    throw std::invalid_argument("to_english needs a decided language");
  }
  if (verdict.language == Language::En) return {text, Language::En};
  try {
    return {client.translate(text, Language::Hi, Language::En), Language::Hi};
  } catch (const TranslationError&) {
    throw;
  } catch (const std::exception& e) {
    throw TranslationError(e.what(), text);
  }
}

std::string from_english(const std::string& text, Language target,
                         TranslationClient& client) {
  if (target != Language::Hi) return text;
  try {
    return client.translate(text, Language::En, Language::Hi);
  } catch (const TranslationError&) {
    throw;
  } catch (const std::exception& e) {
    throw TranslationError(e.what(), text);
  }
}

}  // namespace sathi::lingua
