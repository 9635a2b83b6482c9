#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "sathi/curation.hpp"
#include "support/test_support.hpp"

namespace sathi::curation {
namespace {

FilterConfig defaults() { return FilterConfig{}; }

FilterConfig with(double ws = 0.4, double ngram = 0.3, double numeric = 0.3, std::size_t min_words = 50) {
  FilterConfig c;
  c.max_whitespace_ratio = ws;
  c.max_ngram_repetition_ratio = ngram;
  c.max_numeric_ratio = numeric;
  c.min_word_count = min_words;
  return c;
}

std::string repeat(const std::string& s, int n, const std::string& sep = " ") {
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? sep : "") + s;
  return out;
}

// --- oracles written separately from the library -----------------------------

double oracle_ngram_ratio(const std::string& text, std::size_t n) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(cur);
  if (words.size() < n) return 0.0;
  std::map<std::vector<std::string>, int> seen;
  const std::size_t total = words.size() - n + 1;
  for (std::size_t i = 0; i < total; ++i) {
    seen[std::vector<std::string>(words.begin() + i, words.begin() + i + n)]++;
  }
  return 1.0 - double(seen.size()) / double(total);
}

// --- stages ------------------------------------------------------------------

TEST(StripHtml, Examples) {
  EXPECT_EQ(strip_html("<p>prune in <b>winter</b></p>"), "prune in winter");
  EXPECT_EQ(strip_html("<script>x=1</script>hello"), "hello");
  EXPECT_EQ(strip_html("<style>p{}</style><STYLE>q</STYLE>ok"), "ok");
  EXPECT_EQ(strip_html("a <!-- note --> b"), "a  b");
}

// Expected value taken from Python's html.parser text extraction.
TEST(StripHtml, LiteralAnglesMatchReferenceExtractor) {
  EXPECT_EQ(strip_html("a < b and b > c"), "a < b and b > c");
  EXPECT_EQ(strip_html("x <3 y"), "x <3 y");
}

TEST(StripHtml, BlockTagsBecomeLineBreaks) {
  EXPECT_EQ(strip_html("<p>one</p><p>two</p>"), "one\n\ntwo");
  EXPECT_EQ(strip_html("<ul><li>a</li><li>b</li></ul>"), "a\n\nb");
}

TEST(StripHtml, SplicedTagsAreRemovedToo) {
  const auto once = strip_html("<<b>p>x");
  EXPECT_EQ(once, "x");
  EXPECT_EQ(strip_html(once), once);
}

TEST(NormalizeUnicode, Examples) {
  EXPECT_EQ(normalize_unicode("é"), "é");
  EXPECT_EQ(normalize_unicode("a​b"), "ab");
  EXPECT_EQ(normalize_unicode("plain ascii\n\tline"), "plain ascii\n\tline");
  EXPECT_EQ(normalize_unicode("a\r\nb\rc"), "a\nb\nc");
  EXPECT_EQ(normalize_unicode("x\x01y\x7f"), "xy");
  EXPECT_EQ(normalize_unicode("\xff"), "�");
}

TEST(NormalizeUnicode, DevanagariNuktaComposes) {
  // KA + NUKTA is a composition exclusion, so NFC keeps it decomposed.
  EXPECT_EQ(normalize_unicode("क़"), "क़");
  EXPECT_EQ(normalize_unicode("क़"), "क़");
}

TEST(CollapseWhitespace, Examples) {
  EXPECT_EQ(collapse_whitespace("a   b\t\tc"), "a b c");
  EXPECT_EQ(collapse_whitespace("a\n\n\n\nb"), "a\n\nb");
  EXPECT_EQ(collapse_whitespace(""), "");
  EXPECT_EQ(collapse_whitespace("  lead and trail \n"), "lead and trail");
  EXPECT_EQ(collapse_whitespace("a\nb"), "a\nb");
}

TEST(RemoveBoilerplate, Examples) {
  const std::vector<std::string> pats = {"All Rights Reserved"};
  EXPECT_EQ(remove_boilerplate("keep\n  All Rights Reserved \nthis", pats), "keep\nthis");
  EXPECT_EQ(remove_boilerplate("keep\nthis", {}), "keep\nthis");
  EXPECT_EQ(remove_boilerplate("keep\nthis", pats), "keep\nthis");
  EXPECT_EQ(remove_boilerplate("All Rights Reserved by us", pats), "All Rights Reserved by us");
}

// Hand-rolled generator of messy markup and text.
std::string messy(std::mt19937_64& rng) {
  static const std::vector<std::string> parts = {
      "<p>", "</p>", "<b>", "</B>", "<script>var a=1;</script>", "<style>x</style>", "<br/>",
      "< ", "<", ">", "a < b", "<!-- c -->", "<<i>p>", "&amp;", "é", "​", "क़",
      "\r\n", "\r", "\n", "\n\n\n", "\t", "   ", "\x01", "\x7f", "word", "खेत", "42",
      "All Rights Reserved", "Share this page", "\xff", "\xe0\xa4", "<li>", "<td>", "x"};
  std::string out;
  const auto n = rng() % 40;
  for (std::size_t i = 0; i < n; ++i) out += parts[rng() % parts.size()];
  return out;
}

TEST(Modifications, EveryStageAndTheCompositionAreIdempotent) {
  std::mt19937_64 rng(20260115);
  FilterConfig cfg;
  cfg.boilerplate_patterns = {"All Rights Reserved", "Share this page"};
  for (int i = 0; i < 1000; ++i) {
    const auto in = messy(rng);
    const auto h = strip_html(in);
    ASSERT_EQ(strip_html(h), h) << in;
    const auto u = normalize_unicode(in);
    ASSERT_EQ(normalize_unicode(u), u) << in;
    const auto b = remove_boilerplate(in, cfg.boilerplate_patterns);
    ASSERT_EQ(remove_boilerplate(b, cfg.boilerplate_patterns), b) << in;
    const auto w = collapse_whitespace(in);
    ASSERT_EQ(collapse_whitespace(w), w) << in;
    const auto all = apply_modifications(in, cfg);
    ASSERT_EQ(apply_modifications(all, cfg), all) << in;
  }
}

// --- filters -------------------------------------------------------------------

TEST(Filters, WordCount) {
  EXPECT_FALSE(word_count_filter("only three words", defaults()));
  EXPECT_TRUE(word_count_filter(repeat("w", 50), defaults()));
  EXPECT_FALSE(word_count_filter(repeat("w", 49), defaults()));
}

TEST(Filters, Whitespace) {
  EXPECT_DOUBLE_EQ(whitespace_ratio("ab cd"), 0.2);
  EXPECT_TRUE(whitespace_filter("ab cd", with(0.3)));
  EXPECT_DOUBLE_EQ(whitespace_ratio("a        b"), 0.8);
  EXPECT_FALSE(whitespace_filter("a        b", with(0.3)));
  EXPECT_FALSE(whitespace_filter("", with(0.3)));
  // Code points, not bytes: 3 letters and 1 space.
  EXPECT_DOUBLE_EQ(whitespace_ratio("खे त"), 0.25);
}

TEST(Filters, RepeatingNgram) {
  const auto cat = repeat("the cat sat", 50);
  EXPECT_NEAR(ngram_repetition_ratio(cat, 3), 1.0 - 3.0 / 148.0, 1e-12);
  EXPECT_FALSE(repeating_ngram_filter(cat, with(0.4, 0.5)));
  EXPECT_TRUE(repeating_ngram_filter("two words", with(0.4, 0.5)));
  EXPECT_EQ(ngram_repetition_ratio("two words", 3), 0.0);
  const std::string distinct =
      "farmers near the river plant early onions because the cool nights help bulbs grow firm "
      "and store longer through summer";
  EXPECT_EQ(count_words(distinct), 20u);
  EXPECT_EQ(ngram_repetition_ratio(distinct, 3), 0.0);
  EXPECT_TRUE(repeating_ngram_filter(distinct, with(0.4, 0.5)));
}

TEST(Filters, RepeatingNgramMatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    // Small vocabulary so repeats are common.
    std::string text;
    const auto n = rng() % 60;
    for (std::size_t k = 0; k < n; ++k) text += std::string(k ? " " : "") + "abcde"[rng() % 5];
    for (std::size_t n_ : {2u, 3u, 4u}) {
      ASSERT_NEAR(ngram_repetition_ratio(text, n_), oracle_ngram_ratio(text, n_), 1e-12) << text;
    }
  }
}

TEST(Filters, NumericalDominance) {
  EXPECT_FALSE(numerical_dominance_filter("123456", with(0.4, 0.3, 0.5)));
  EXPECT_TRUE(numerical_dominance_filter("grapes need water", with(0.4, 0.3, 0.5)));
  // Hand count: 14 visible characters, 4 of them digits.
  EXPECT_DOUBLE_EQ(numeric_ratio("pH 6.5 to 7.5 soil"), 4.0 / 14.0);
  EXPECT_TRUE(numerical_dominance_filter("pH 6.5 to 7.5 soil", with(0.4, 0.3, 0.3)));
  EXPECT_FALSE(numerical_dominance_filter("pH 6.5 to 7.5 soil", with(0.4, 0.3, 0.25)));
  EXPECT_FALSE(numerical_dominance_filter("", defaults()));
  EXPECT_DOUBLE_EQ(numeric_ratio("१२ ab"), 0.5);
}

TEST(Filters, RepeatedSentenceFailsNgramFilter) {
  const auto doc = repeat("Water the onion field lightly every evening in the dry months.", 50);
  EXPECT_FALSE(repeating_ngram_filter(doc, defaults()));
  EXPECT_EQ(first_failing_filter(doc, defaults()), kRepeatingNgramFilter);
}

TEST(Filters, ReferencePassagePassesAllFourAtDefaults) {
  const auto text = apply_modifications(
      read_file(testing::fixtures_dir() / "curation" / "reference_passage.txt"), defaults());
  const auto cfg = defaults();
  EXPECT_GT(count_words(text), 200u);
  EXPECT_TRUE(word_count_filter(text, cfg));
  EXPECT_TRUE(whitespace_filter(text, cfg));
  EXPECT_TRUE(repeating_ngram_filter(text, cfg));
  EXPECT_TRUE(numerical_dominance_filter(text, cfg));
  EXPECT_EQ(first_failing_filter(text, cfg), std::nullopt);
}

TEST(Filters, ShortCircuitOrder) {
  // Fails every filter; only the first is reported.
  EXPECT_EQ(first_failing_filter("1 1 1", defaults()), kWordCountFilter);
  EXPECT_EQ(first_failing_filter(repeat("1", 60), defaults()), kWhitespaceFilter);
}

// --- passages ------------------------------------------------------------------

TEST(SplitPassages, MergesUntilTarget) {
  const auto para = [](const std::string& w) { return repeat(w, 100); };
  const auto ps = split_passages(para("a") + "\n\n" + para("b"), 150, "d");
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(count_words(ps[0].text), 200u);
  EXPECT_EQ(ps[0].id, "d#0");
  EXPECT_TRUE(split_passages("", 150).empty());
  const auto one = split_passages("just one paragraph", 150);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].ordinal, 0u);
}

TEST(SplitPassages, ConcatenationAndOrdinals) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    std::string text;
    const auto paras = rng() % 8;
    std::string words_only;
    for (std::size_t p = 0; p < paras; ++p) {
      const auto w = testing::random_words(rng, 1 + rng() % 40);
      text += (p ? "\n\n" : "") + w;
      words_only += (p ? " " : "") + w;
    }
    const auto ps = split_passages(text, 1 + rng() % 60, "doc");
    std::string joined;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      EXPECT_EQ(ps[k].ordinal, k);
      EXPECT_FALSE(ps[k].text.empty());
      joined += (k ? " " : "") + ps[k].text;
    }
    std::string flat;
    for (auto w : split_words(joined)) flat += (flat.empty() ? "" : " ") + std::string(w);
    EXPECT_EQ(flat, words_only);
  }
}

// --- pipeline ------------------------------------------------------------------

RawDoc doc(std::string id, std::string text) { return RawDoc{std::move(id), "", std::move(text), "", ""}; }

TEST(Pipeline, EmptyInput) {
  const auto r = run_pipeline({}, defaults());
  EXPECT_TRUE(r.passages.empty());
  EXPECT_TRUE(r.reports.empty());
  EXPECT_EQ(summarize(r).retention_ratio, std::nullopt);
}

TEST(Pipeline, SixCleanFourJunkRetainsSixTenths) {
  std::mt19937_64 rng(5);
  std::vector<RawDoc> docs;
  for (int i = 0; i < 6; ++i) docs.push_back(doc("c" + std::to_string(i), testing::random_words(rng, 80)));
  docs.push_back(doc("j0", "too short"));
  docs.push_back(doc("j1", repeat("same three words", 40)));
  docs.push_back(doc("j2", repeat("2024", 60)));
  docs.push_back(doc("j3", ""));
  const auto s = summarize(run_pipeline(docs, defaults()));
  EXPECT_EQ(s.docs_in, 10u);
  EXPECT_EQ(s.docs_out, 6u);
  ASSERT_TRUE(s.retention_ratio);
  EXPECT_DOUBLE_EQ(*s.retention_ratio, 0.6);
}

TEST(Pipeline, ReportSoundnessAndOrder) {
  std::mt19937_64 rng(99);
  std::vector<RawDoc> docs;
  for (int i = 0; i < 120; ++i) {
    std::string text;
    switch (rng() % 4) {
      case 0: text = testing::random_words(rng, 40 + rng() % 60); break;
      case 1: text = repeat(testing::random_words(rng, 4), 20 + rng() % 20); break;
      case 2: text = "<div>" + messy(rng) + testing::random_words(rng, rng() % 80) + "</div>"; break;
      default: text = repeat(std::to_string(rng() % 1000), 55) + " " + testing::random_words(rng, 10);
    }
    docs.push_back(doc("d" + std::to_string(i), text));
  }
  const auto cfg = defaults();
  const auto r = run_pipeline(docs, cfg);
  ASSERT_EQ(r.reports.size(), docs.size());
  std::map<std::string, std::size_t> next_ordinal;
  for (const auto& p : r.passages) EXPECT_EQ(p.ordinal, next_ordinal[p.doc_id]++);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& rep = r.reports[i];
    EXPECT_EQ(rep.doc_id, docs[i].id);
    EXPECT_EQ(rep.retained, rep.filters_triggered.empty());
    if (!rep.error.empty()) {
      // The generator can emit invalid UTF-8.
      EXPECT_EQ(rep.filters_triggered, std::vector<std::string>{"decode_error"});
      EXPECT_TRUE(rep.stages_applied.empty());
      continue;
    }
    EXPECT_EQ(rep.stages_applied,
              (std::vector<std::string>{"strip_html", "normalize_unicode", "remove_boilerplate",
                                        "collapse_whitespace"}));
    const auto text = apply_modifications(docs[i].text, cfg);
    for (const auto& f : rep.filters_triggered) {
      if (f == kWordCountFilter) EXPECT_FALSE(word_count_filter(text, cfg));
      if (f == kWhitespaceFilter) EXPECT_FALSE(whitespace_filter(text, cfg));
      if (f == kRepeatingNgramFilter) EXPECT_FALSE(repeating_ngram_filter(text, cfg));
      if (f == kNumericalDominanceFilter) EXPECT_FALSE(numerical_dominance_filter(text, cfg));
    }
    EXPECT_LE(rep.filters_triggered.size(), 1u);
  }
  // Threads do not change anything.
  const auto r4 = run_pipeline(docs, cfg, 4);
  EXPECT_EQ(to_jsonl(std::span<const CurationReport>(r4.reports)),
            to_jsonl(std::span<const CurationReport>(r.reports)));
  EXPECT_EQ(to_jsonl(std::span<const Passage>(r4.passages)),
            to_jsonl(std::span<const Passage>(r.passages)));
}

TEST(Pipeline, DecodeErrorsAreReportedNotFatal) {
  const auto docs = parse_raw_docs("{\"id\":\"a\",\"text\":\"x\"}\nnot json\n{\"id\":\"b\"}\n");
  ASSERT_EQ(docs.size(), 3u);
  const auto r = run_pipeline(docs, defaults());
  EXPECT_EQ(r.reports[1].doc_id, "line:2");
  EXPECT_EQ(r.reports[1].filters_triggered, std::vector<std::string>{"decode_error"});
  EXPECT_FALSE(r.reports[1].error.empty());
  EXPECT_EQ(r.reports[2].doc_id, "line:3");
  EXPECT_EQ(summarize(r).decode_errors, 2u);
}

TEST(Pipeline, GoldenCorpusMatchesHandDerivedExpectations) {
  const auto dir = testing::fixtures_dir() / "curation";
  const auto cfg = load_filter_config(testing::data_dir() / ".." / "config" / "curation.yaml");
  const auto r = run_pipeline(read_raw_docs(dir / "golden_docs.jsonl"), cfg);
  const auto expected = split_lines(read_file(dir / "golden_expected.jsonl"));
  std::size_t n = 0;
  for (const auto& line : expected) {
    if (trim(line).empty()) continue;
    const auto e = nlohmann::json::parse(line);
    ASSERT_LT(n, r.reports.size());
    const auto& rep = r.reports[n++];
    EXPECT_EQ(rep.doc_id, e["doc_id"].get<std::string>());
    EXPECT_EQ(rep.retained, e["retained"].get<bool>()) << rep.doc_id;
    EXPECT_EQ(rep.filters_triggered, e["filters_triggered"].get<std::vector<std::string>>())
        << rep.doc_id;
  }
  EXPECT_EQ(n, 30u);
  EXPECT_EQ(r.reports.size(), 30u);
}

TEST(FilterConfig, ParsingAndValidation) {
  const auto c = parse_filter_config("min_word_count: 10\nboilerplate_patterns: [a, b]\n");
  EXPECT_EQ(c.min_word_count, 10u);
  EXPECT_EQ(c.boilerplate_patterns.size(), 2u);
  EXPECT_THROW(parse_filter_config("surprise: 1\n"), ConfigError);
  EXPECT_THROW(parse_filter_config("max_numeric_ratio: 1.5\n"), ConfigError);
  EXPECT_THROW(parse_filter_config("ngram_n: 1\n"), ConfigError);
  FilterConfig bad;
  bad.min_word_count = 0;
  EXPECT_THROW(run_pipeline({}, bad), ConfigError);
}

TEST(Io, PassagesRoundTrip) {
  std::vector<Passage> ps = {{"d#0", "d", "text one", 0, {{"crop", "grapes"}}},
                             {"d#1", "d", "टेक्स्ट", 1, {}}};
  EXPECT_EQ(parse_passages(to_jsonl(std::span<const Passage>(ps))), ps);
  EXPECT_THROW(parse_passages("{\"id\": 3}\n"), InputError);
}

}  // namespace
}  // namespace sathi::curation
