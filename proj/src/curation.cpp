#include "sathi/curation.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <thread>
#include <unordered_set>

namespace sathi::curation {

using json = nlohmann::json;

std::vector<std::string> FilterConfig::problems() const {
  std::vector<std::string> out;
  auto ratio = [&out](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) out.push_back(std::string(name) + " must be in [0,1]");
  };
  if (min_word_count < 1) out.emplace_back("min_word_count must be >= 1");
  ratio(max_whitespace_ratio, "max_whitespace_ratio");
  if (ngram_n < 2) out.emplace_back("ngram_n must be >= 2");
  ratio(max_ngram_repetition_ratio, "max_ngram_repetition_ratio");
  ratio(max_numeric_ratio, "max_numeric_ratio");
  if (passage_target_words < 1) out.emplace_back("passage_target_words must be >= 1");
  return out;
}

FilterConfig parse_filter_config(std::string_view yaml_text) {
  FilterConfig cfg;
  try {
    const YAML::Node root = YAML::Load(std::string(yaml_text));
    if (root.IsNull()) return cfg;
    if (!root.IsMap()) throw ConfigError("curation config must be a mapping");
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      const auto& v = kv.second;
      if (key == "min_word_count") {
        cfg.min_word_count = v.as<std::size_t>();
      } else if (key == "max_whitespace_ratio") {
        cfg.max_whitespace_ratio = v.as<double>();
      } else if (key == "ngram_n") {
        cfg.ngram_n = v.as<std::size_t>();
      } else if (key == "max_ngram_repetition_ratio") {
        cfg.max_ngram_repetition_ratio = v.as<double>();
      } else if (key == "max_numeric_ratio") {
        cfg.max_numeric_ratio = v.as<double>();
      } else if (key == "boilerplate_patterns") {
        cfg.boilerplate_patterns = v.as<std::vector<std::string>>();
      } else if (key == "passage_target_words") {
        cfg.passage_target_words = v.as<std::size_t>();
      } else {
        throw ConfigError("unknown curation config key '" + key + "'");
      }
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("bad curation config: ") + e.what());
  }
  if (auto p = cfg.problems(); !p.empty()) throw ConfigError(p.front());
  return cfg;
}

FilterConfig load_filter_config(const std::filesystem::path& path) {
  return parse_filter_config(read_file(path));
}

// ---------------------------------------------------------------------------
// strip_html

namespace {

bool ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool is_block_tag(std::string_view name) {
  static constexpr std::string_view kBlock[] = {
      "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt",
      "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
      "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section", "table",
      "tbody", "thead", "title", "tr", "ul"};
  return std::find(std::begin(kBlock), std::end(kBlock), name) != std::end(kBlock);
}

std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool eq = true;
    for (std::size_t k = 0; k < needle.size() && eq; ++k) {
      char c = hay[i + k];
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      eq = c == needle[k];
    }
    if (eq) return i;
  }
  return std::string_view::npos;
}

std::string strip_html_once(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    const char c = in[i];
    if (c != '<' || i + 1 >= in.size()) {
      out.push_back(c);
      ++i;
      continue;
    }
    if (in.compare(i, 4, "<!--") == 0) {
      const auto end = in.find("-->", i + 4);
      i = end == std::string_view::npos ? in.size() : end + 3;
      continue;
    }
    const char next = in[i + 1];
    if (!(ascii_alpha(next) || next == '/' || next == '!' || next == '?')) {
      out.push_back(c);
      ++i;
      continue;
    }
    const auto close = in.find('>', i + 1);
    if (close == std::string_view::npos) {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t n = i + 1;
    const bool closing = in[n] == '/';
    if (closing) ++n;
    std::string name;
    while (n < close && (ascii_alpha(in[n]) || (in[n] >= '0' && in[n] <= '9'))) {
      name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(in[n]))));
      ++n;
    }
    i = close + 1;
    if (!closing && (name == "script" || name == "style")) {
      const auto end = find_ci(in, "</" + name, i);
      if (end == std::string_view::npos) {
        i = in.size();
      } else {
        const auto gt = in.find('>', end);
        i = gt == std::string_view::npos ? in.size() : gt + 1;
      }
      continue;
    }
    if (is_block_tag(name)) {
      out.push_back('\n');
    } else if (name == "td" || name == "th") {
      out.push_back(' ');
    }
  }
  return std::string(trim(out));
}

}  // namespace

std::string strip_html(std::string_view text) {
  // Removing one tag can splice together a new one ("<<b>p>"), so iterate;
  // every productive pass shrinks the text.
  std::string cur(text);
  for (;;) {
    std::string next = strip_html_once(cur);
    if (next == cur) return next;
    cur = std::move(next);
  }
}

// ---------------------------------------------------------------------------
// normalize_unicode

namespace {

bool dropped_codepoint(char32_t cp) {
  if (cp == '\n' || cp == '\t') return false;
  if (cp < 0x20 || (cp >= 0x7F && cp <= 0x9F)) return true;
  switch (cp) {
    case 0x200B:  // zero width space
    case 0x200C:  // zero width non-joiner
    case 0x200D:  // zero width joiner
    case 0x2060:  // word joiner
    case 0xFEFF:  // byte order mark
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string normalize_unicode(std::string_view text) {
  std::string filtered;
  filtered.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    // Lenient decode: malformed bytes become U+FFFD.
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = b0 < 0x80 ? 1 : (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3
                                      : (b0 & 0xF8) == 0xF0 ? 4 : 0;
    if (len == 0 || i + len > text.size() || !is_valid_utf8(text.substr(i, len))) {
      append_utf8(filtered, 0xFFFD);
      ++i;
      continue;
    }
    const char32_t cp = decode_utf8(text.substr(i, len))[0];
    i += len;
    if (cp == '\r') {
      if (i < text.size() && text[i] == '\n') continue;
      filtered.push_back('\n');
      continue;
    }
    if (!dropped_codepoint(cp)) append_utf8(filtered, cp);
  }

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(filtered);
  const icu::UnicodeString composed = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  std::string out;
  composed.toUTF8String(out);
  return out;
}

// ---------------------------------------------------------------------------
// collapse_whitespace / remove_boilerplate

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t newlines = 0;
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
      if (newlines > 0) {
        out.append(std::min<std::size_t>(newlines, 2), '\n');
        newlines = 0;
      }
      pending_space = true;
    } else if (c == '\n') {
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      ++newlines;
    } else {
      if (newlines > 0) {
        out.append(newlines >= 3 ? 2 : newlines, '\n');
        newlines = 0;
      }
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.push_back(c);
    }
  }
  if (newlines > 0) out.append(newlines >= 3 ? 2 : newlines, '\n');
  return std::string(trim(out));
}

std::string remove_boilerplate(std::string_view text,
                               std::span<const std::string> patterns) {
  if (patterns.empty()) return std::string(text);
  std::vector<std::string_view> trimmed;
  for (const auto& p : patterns) {
    if (!trim(p).empty()) trimmed.push_back(trim(p));
  }
  std::string out;
  out.reserve(text.size());
  bool first = true;
  // Split by hand: kept lines must come back byte for byte.
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = text.substr(start, nl == std::string_view::npos ? text.size() - start : nl - start);
    if (std::find(trimmed.begin(), trimmed.end(), trim(line)) == trimmed.end()) {
      if (!first) out.push_back('\n');
      out += line;
      first = false;
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string apply_modifications(std::string_view text, const FilterConfig& cfg) {
  std::string cur(text);
  // Each stage is idempotent on its own; a stage can expose work for an
  // earlier one (a control character removed from inside "<\x01b>"), so
  // iterate the composition to a fixed point.
  for (int round = 0; round < 16; ++round) {
    std::string next = strip_html(cur);
    next = normalize_unicode(next);
    next = remove_boilerplate(next, cfg.boilerplate_patterns);
    next = collapse_whitespace(next);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Filters

double whitespace_ratio(std::string_view text) {
  if (text.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t ws = 0;
  for (char c : text) ws += is_space(static_cast<unsigned char>(c)) ? 1 : 0;
  return static_cast<double>(ws) / static_cast<double>(codepoint_count(text));
}

double ngram_repetition_ratio(std::string_view text, std::size_t n) {
  const auto words = split_words(text);
  if (n == 0 || words.size() < n) return 0.0;
  const std::size_t total = words.size() - n + 1;
  std::unordered_set<std::string> distinct;
  distinct.reserve(total);
  std::string key;
  for (std::size_t i = 0; i < total; ++i) {
    key.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += words[i + k];
    }
    distinct.insert(key);
  }
  return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

namespace {

bool is_digit_cp(char32_t cp) {
  return (cp >= '0' && cp <= '9') || (cp >= 0x0966 && cp <= 0x096F);
}

}  // namespace

double numeric_ratio(std::string_view text) {
  std::size_t digits = 0;
  std::size_t non_ws = 0;
  for (std::size_t i = 0; i < text.size();) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    if (b0 < 0x80) {
      if (!is_space(b0)) {
        ++non_ws;
        if (b0 >= '0' && b0 <= '9') ++digits;
      }
      ++i;
      continue;
    }
    std::size_t len = (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3 : (b0 & 0xF8) == 0xF0 ? 4 : 1;
    len = std::min(len, text.size() - i);
    ++non_ws;
    if (is_valid_utf8(text.substr(i, len)) && is_digit_cp(decode_utf8(text.substr(i, len))[0])) {
      ++digits;
    }
    i += len;
  }
  if (non_ws == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(digits) / static_cast<double>(non_ws);
}

bool word_count_filter(std::string_view text, const FilterConfig& cfg) {
  return count_words(text) >= cfg.min_word_count;
}

bool whitespace_filter(std::string_view text, const FilterConfig& cfg) {
  const double r = whitespace_ratio(text);
  return !std::isnan(r) && r <= cfg.max_whitespace_ratio;
}

bool repeating_ngram_filter(std::string_view text, const FilterConfig& cfg) {
  return ngram_repetition_ratio(text, cfg.ngram_n) <= cfg.max_ngram_repetition_ratio;
}

bool numerical_dominance_filter(std::string_view text, const FilterConfig& cfg) {
  const double r = numeric_ratio(text);
  return !std::isnan(r) && r <= cfg.max_numeric_ratio;
}

std::optional<std::string_view> first_failing_filter(std::string_view text,
                                                     const FilterConfig& cfg) {
  if (!word_count_filter(text, cfg)) return kWordCountFilter;
  if (!whitespace_filter(text, cfg)) return kWhitespaceFilter;
  if (!repeating_ngram_filter(text, cfg)) return kRepeatingNgramFilter;
  if (!numerical_dominance_filter(text, cfg)) return kNumericalDominanceFilter;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Passages

namespace {

std::vector<std::string_view> paragraphs(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t end) {
    const auto p = trim(text.substr(start, end - start));
    if (!p.empty()) out.push_back(p);
  };
  while (i < text.size()) {
    if (text[i] != '\n') {
      ++i;
      continue;
    }
    // A blank line is a newline followed by optional spaces and a newline.
    std::size_t j = i + 1;
    while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
    if (j < text.size() && text[j] == '\n') {
      flush(i);
      while (j < text.size() && is_space(static_cast<unsigned char>(text[j]))) ++j;
      start = j;
      i = j;
    } else {
      i = j;
    }
  }
  if (start < text.size()) flush(text.size());
  return out;
}

}  // namespace

std::vector<Passage> split_passages(std::string_view text, std::size_t target_words,
                                    std::string_view doc_id) {
  std::vector<Passage> out;
  std::string buf;
  std::size_t buf_words = 0;
  auto emit = [&] {
    Passage p;
    p.ordinal = out.size();
    p.doc_id = std::string(doc_id);
    p.id = std::string(doc_id) + "#" + std::to_string(p.ordinal);
    p.text = std::move(buf);
    out.push_back(std::move(p));
    buf.clear();
    buf_words = 0;
  };
  for (const auto para : paragraphs(text)) {
    if (!buf.empty()) buf += "\n\n";
    buf += para;
    buf_words += count_words(para);
    if (buf_words >= target_words) emit();
  }
  if (!buf.empty()) emit();
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct DocOutcome {
  CurationReport report;
  std::vector<Passage> passages;
};

DocOutcome process_doc(const RawDoc& doc, const FilterConfig& cfg) {
  DocOutcome o;
  o.report.doc_id = doc.id;
  o.report.words_before = count_words(doc.text);
  std::string error = doc.decode_error;
  if (error.empty() && !is_valid_utf8(doc.text)) error = "text is not valid UTF-8";
  if (!error.empty()) {
    o.report.error = error;
    o.report.filters_triggered.emplace_back(kDecodeError);
    return o;
  }
  o.report.stages_applied = {std::string(kStripHtml), std::string(kNormalizeUnicode),
                             std::string(kRemoveBoilerplate),
                             std::string(kCollapseWhitespace)};
  const std::string text = apply_modifications(doc.text, cfg);
  o.report.words_after = count_words(text);
  if (const auto failed = first_failing_filter(text, cfg)) {
    o.report.filters_triggered.emplace_back(*failed);
    return o;
  }
  o.report.retained = true;
  o.passages = split_passages(text, cfg.passage_target_words, doc.id);
  if (!doc.source_url.empty()) {
    for (auto& p : o.passages) p.meta["source"] = doc.source_url;
  }
  return o;
}

}  // namespace

PipelineResult run_pipeline(std::span<const RawDoc> docs, const FilterConfig& cfg,
                            unsigned threads) {
  if (auto p = cfg.problems(); !p.empty()) throw ConfigError(p.front());
  std::vector<DocOutcome> outcomes(docs.size());
  if (threads <= 1 || docs.size() < 2) {
    for (std::size_t i = 0; i < docs.size(); ++i) outcomes[i] = process_doc(docs[i], cfg);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const unsigned n = std::min<std::size_t>(threads, docs.size());
    for (unsigned t = 0; t < n; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < docs.size();) {
          outcomes[i] = process_doc(docs[i], cfg);
        }
      });
    }
  }
  PipelineResult result;
  result.reports.reserve(docs.size());
  for (auto& o : outcomes) {
    result.reports.push_back(std::move(o.report));
    for (auto& p : o.passages) result.passages.push_back(std::move(p));
  }
  return result;
}

CurationSummary summarize(const PipelineResult& result) {
  CurationSummary s;
  s.docs_in = result.reports.size();
  for (const auto& r : result.reports) {
    if (r.retained) ++s.docs_out;
    if (!r.error.empty()) ++s.decode_errors;
    s.words_in += r.words_before;
    if (r.retained) s.words_out += r.words_after;
    for (const auto& f : r.filters_triggered) ++s.filter_counts[f];
  }
  s.passages = result.passages.size();
  if (s.docs_in > 0) {
    s.retention_ratio = static_cast<double>(s.docs_out) / static_cast<double>(s.docs_in);
  }
  return s;
}

// ---------------------------------------------------------------------------
// I/O

std::vector<RawDoc> parse_raw_docs(std::string_view jsonl) {
  std::vector<RawDoc> docs;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(jsonl)) {
    ++line_no;
    if (trim(line).empty()) continue;
    RawDoc doc;
    try {
      const auto j = json::parse(line);
      doc.id = j.at("id").get<std::string>();
      doc.source_url = j.value("source_url", "");
      doc.text = j.at("text").get<std::string>();
      doc.fetched_at = j.value("fetched_at", "");
    } catch (const json::exception& e) {
      doc = RawDoc{};
      doc.id = "line:" + std::to_string(line_no);
      doc.decode_error = e.what();
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<RawDoc> read_raw_docs(const std::filesystem::path& path) {
  return parse_raw_docs(read_file(path));
}

std::string to_jsonl(std::span<const Passage> passages) {
  std::string out;
  for (const auto& p : passages) {
    json j = {{"id", p.id}, {"doc_id", p.doc_id}, {"ordinal", p.ordinal}, {"text", p.text}};
    if (!p.meta.empty()) j["meta"] = p.meta;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::string to_jsonl(std::span<const CurationReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    json j = {{"doc_id", r.doc_id},
              {"stages_applied", r.stages_applied},
              {"filters_triggered", r.filters_triggered},
              {"retained", r.retained},
              {"words_before", r.words_before},
              {"words_after", r.words_after}};
    if (!r.error.empty()) j["error"] = r.error;
    out += j.dump(-1, ' ', false, json::error_handler_t::replace);
    out.push_back('\n');
  }
  return out;
}

std::string summary_json(const CurationSummary& s) {
  json j = {{"docs_in", s.docs_in},
            {"docs_out", s.docs_out},
            {"decode_errors", s.decode_errors},
            {"words_in", s.words_in},
            {"words_out", s.words_out},
            {"passages", s.passages},
            {"filter_counts", s.filter_counts}};
  j["retention_ratio"] = s.retention_ratio ? json(*s.retention_ratio) : json(nullptr);
  return j.dump(2) + "\n";
}

std::vector<Passage> parse_passages(std::string_view jsonl) {
  std::vector<Passage> out;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(jsonl)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      Passage p;
      p.id = j.at("id").get<std::string>();
      p.doc_id = j.value("doc_id", "");
      p.ordinal = j.value("ordinal", std::size_t{0});
      p.text = j.at("text").get<std::string>();
      if (j.contains("meta")) p.meta = j.at("meta").get<std::map<std::string, std::string>>();
      if (p.text.empty()) throw InputError("empty text");
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw InputError("passages line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Passage> read_passages(const std::filesystem::path& path) {
  return parse_passages(read_file(path));
}

}  // namespace sathi::curation
