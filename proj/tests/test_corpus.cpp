#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "support.hpp"

using namespace coordscan;
using testsupport::msg;

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_text("BREAKING:  Maduro https://t.co/x captured!"), "breaking: maduro captured!");
  EXPECT_EQ(normalize_text(""), "");
  EXPECT_EQ(normalize_text("Caracas\t\tprotest\u0007"), "caracas protest");
}

TEST(Normalize, UrlPrefixes) {
  EXPECT_EQ(normalize_text("see www.example.com/a now"), "see now");
  EXPECT_EQ(normalize_text("http://a.b"), "");
  EXPECT_EQ(normalize_text("read:https://x.y/z ok"), "read: ok");
}

TEST(Normalize, KeepsPunctuationAndEmoji) {
  EXPECT_EQ(normalize_text("¡Última HORA! \xF0\x9F\x94\xA5"), "¡última hora! \xF0\x9F\x94\xA5");
}

TEST(Normalize, StripsC1AndZeroWidth) {
  EXPECT_EQ(normalize_text("a\xC2\x9B" "b\xE2\x80\x8B" "c"), "abc");
  // NEL is a line break as well as a C1 control.
  EXPECT_EQ(normalize_text("a\xC2\x85" "b"), "a b");
}

TEST(Normalize, PropertyIdempotentAndClean) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "aZ \t\n.:/wh\x01\x7F" "ptsÉ";
  for (int i = 0; i < 2000; ++i) {
    std::string raw = testsupport::random_text(rng, 0, 40, "aZ \t\n.:/whpts\x01\x7F");
    if (i % 7 == 0) raw += " http://u.rl/" + raw;
    if (i % 11 == 0) raw = "WWW." + raw;
    const auto once = normalize_text(raw);
    EXPECT_EQ(normalize_text(once), once);
    EXPECT_EQ(once.find("  "), std::string::npos);
    EXPECT_EQ(once.find("http://"), std::string::npos);
    EXPECT_EQ(once.find("www."), std::string::npos);
    for (char c : once) {
      EXPECT_FALSE(c >= 'A' && c <= 'Z');
      EXPECT_FALSE(static_cast<unsigned char>(c) < 0x20 || c == 0x7F);
    }
    if (!once.empty()) {
      EXPECT_NE(once.front(), ' ');
      EXPECT_NE(once.back(), ' ');
    }
  }
}

TEST(Parse, SingleRecord) {
  std::istringstream in(R"({"id":"1","channel":"rt","date":1767398400,"text":"Maduro captured"})" "\n");
  const auto r = parse_jsonl(in);
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus.channels(), std::vector<std::string>{"rt"});
  EXPECT_EQ(r.corpus[0].norm_text, "maduro captured");
  EXPECT_EQ(r.corpus[0].timestamp, 1767398400);
}

TEST(Parse, BadJsonLineReportedWithLineNumber) {
  std::istringstream in(
      "{\"id\":\"1\",\"channel\":\"a\",\"date\":1,\"text\":\"x\"}\n"
      "{\"id\":\"2\",\"channel\":\"a\",\"date\":2,\"text\":\"y\"}\n"
      "\n"
      "{not json\n"
      "{\"id\":\"3\",\"channel\":\"b\",\"date\":\"2026-01-03T00:00:00Z\",\"text\":\"z\"}\n");
  const auto r = parse_jsonl(in);
  EXPECT_EQ(r.corpus.size(), 3u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 4u);
  EXPECT_EQ(r.errors[0].kind, ParseIssue::Kind::kJson);
  EXPECT_EQ(r.nonempty_lines, 4u);
}

TEST(Parse, MissingFieldIsSchemaError) {
  std::istringstream in("{\"id\":\"1\",\"channel\":\"a\",\"text\":\"x\"}\n");
  const auto r = parse_jsonl(in);
  EXPECT_TRUE(r.corpus.empty());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].kind, ParseIssue::Kind::kSchema);
}

TEST(Parse, EmptyStreamIsEmptyCorpus) {
  std::istringstream in("");
  const auto r = parse_jsonl(in);
  EXPECT_TRUE(r.corpus.empty());
  EXPECT_TRUE(r.errors.empty());
}

TEST(Parse, NestedFieldMappingAndFloatTimestamp) {
  FieldMapping fm;
  fm.channel = "meta.sub";
  fm.timestamp = "created_utc";
  fm.text = "title";
  fm.default_platform = Platform::kForumSubmission;
  std::istringstream in(R"({"id":7,"meta":{"sub":"vzla"},"created_utc":1767398400.9,"title":"Hi"})");
  const auto r = parse_jsonl(in, fm);
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus[0].id, "7");
  EXPECT_EQ(r.corpus[0].channel, "vzla");
  EXPECT_EQ(r.corpus[0].timestamp, 1767398400);
  EXPECT_EQ(r.corpus[0].platform, Platform::kForumSubmission);
}

TEST(Parse, DuplicateIdLastWinsWithWarning) {
  std::istringstream in(
      "{\"id\":\"1\",\"channel\":\"a\",\"date\":1,\"text\":\"old\"}\n"
      "{\"id\":\"1\",\"channel\":\"a\",\"date\":1,\"text\":\"new\"}\n");
  const auto r = parse_jsonl(in);
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus[0].raw_text, "new");
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.replaced_duplicates, 1u);
}

TEST(Parse, PropertyMessagesPlusErrorsEqualsLines) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::ostringstream ss;
    std::bernoulli_distribution bad(0.3), blank(0.1), dup(0.1);
    int next_id = 0;
    for (int i = 0; i < 40; ++i) {
      if (blank(rng)) {
        ss << "   \n";
      } else if (bad(rng)) {
        ss << (i % 2 ? "{\"id\":\"x\"}\n" : "[1,2\n");
      } else {
        const int id = dup(rng) && next_id > 0 ? next_id - 1 : next_id++;
        ss << "{\"id\":\"" << id << "\",\"channel\":\"c" << i % 3 << "\",\"date\":" << 1000 + i
           << ",\"text\":\"t\"}\n";
      }
    }
    std::istringstream in(ss.str());
    const auto r = parse_jsonl(in);
    EXPECT_EQ(r.corpus.size() + r.replaced_duplicates + r.errors.size(), r.nonempty_lines);
  }
}

TEST(CorpusType, OrderAndChannels) {
  Corpus c({msg("b", "y", 5, "x"), msg("a", "x", 5, "x"), msg("c", "x", 1, "x")});
  EXPECT_EQ(c[0].id, "c");
  EXPECT_EQ(c[1].id, "a");
  EXPECT_EQ(c[2].id, "b");
  EXPECT_EQ(c.channels(), (std::vector<std::string>{"x", "y"}));
}

TEST(CorpusType, RejectsDuplicatesAndNegativeTime) {
  EXPECT_THROW(Corpus({msg("a", "x", 1, ""), msg("a", "y", 2, "")}), DataError);
  EXPECT_THROW(Corpus({msg("a", "x", -1, "")}), DataError);
}

TEST(KeywordFilter, Examples) {
  Corpus c({msg("1", "a", 1, "Maduro arrested"), msg("2", "a", 2, "weather update")});
  const std::vector<std::string> kw{"venezuela", "maduro"};
  EXPECT_EQ(keyword_filter(c, kw).size(), 1u);
  const std::vector<std::string> none{"zzz"};
  EXPECT_TRUE(keyword_filter(c, none).empty());
  EXPECT_THROW(keyword_filter(c, std::vector<std::string>{}), ConfigError);
  EXPECT_EQ(c.size(), 2u);
}

TEST(KeywordFilter, PropertySubsetAndIdempotent) {
  std::mt19937_64 rng(3);
  std::vector<Message> msgs;
  for (int i = 0; i < 300; ++i) {
    msgs.push_back(msg(std::to_string(i), "c" + std::to_string(i % 4), i, testsupport::random_text(rng, 3, 20, "abcde ")));
  }
  Corpus c(std::move(msgs));
  const std::vector<std::string> kw{"abc", "ee"};
  const auto once = keyword_filter(c, kw);
  const auto twice = keyword_filter(once, kw);
  EXPECT_EQ(to_jsonl(once), to_jsonl(twice));
  std::size_t j = 0;
  for (const auto& m : c) {
    if (j < once.size() && once[j].id == m.id) ++j;
  }
  EXPECT_EQ(j, once.size());
}

TEST(KeywordFilter, LoadKeywordsSkipsComments) {
  std::istringstream in("# topic\nVenezuela\n\n  maduro \n");
  EXPECT_EQ(load_keywords(in), (std::vector<std::string>{"venezuela", "maduro"}));
}

TEST(Stats, ReferenceChannelCounts) {
  const auto s = corpus_stats(testsupport::reference_count_corpus());
  EXPECT_EQ(s.total, 2047u);
  EXPECT_EQ(s.per_channel_counts.size(), 9u);
  EXPECT_NEAR(s.per_channel_pct.at("rt_news"), 71.37, 0.01);
  EXPECT_DOUBLE_EQ(s.median_per_channel, 12.0);
  EXPECT_NEAR(s.mean_per_channel, 227.44, 0.01);
}

TEST(Stats, Symmetric) {
  std::vector<Message> m;
  for (int i = 0; i < 10; ++i) m.push_back(msg(std::to_string(i), i < 5 ? "a" : "b", i, "x"));
  const auto s = corpus_stats(Corpus(m));
  EXPECT_DOUBLE_EQ(s.per_channel_pct.at("a"), 50.0);
  EXPECT_DOUBLE_EQ(s.per_channel_pct.at("b"), 50.0);
  EXPECT_DOUBLE_EQ(s.median_per_channel, 5.0);
  EXPECT_DOUBLE_EQ(s.mean_per_channel, 5.0);
}

TEST(Stats, Singleton) {
  const auto s = corpus_stats(Corpus({msg("1", "a", 86400 * 3 + 5, "x")}));
  EXPECT_DOUBLE_EQ(s.per_channel_pct.at("a"), 100.0);
  EXPECT_DOUBLE_EQ(s.median_per_channel, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_per_channel, 1.0);
  EXPECT_EQ(s.date_min, 86400 * 3);
}

TEST(Stats, EmptyCorpusThrows) { EXPECT_THROW(corpus_stats(Corpus{}), DataError); }

TEST(Stats, PropertyPercentagesSumTo100) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Message> m;
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    for (int i = 0; i < n; ++i) {
      m.push_back(msg(std::to_string(i), "c" + std::to_string(rng() % 13), i, "x"));
    }
    const auto s = corpus_stats(Corpus(m));
    double pct = 0;
    std::size_t tot = 0;
    for (const auto& [ch, p] : s.per_channel_pct) pct += p;
    for (const auto& [ch, c] : s.per_channel_counts) tot += c;
    EXPECT_NEAR(pct, 100.0, 0.01);
    EXPECT_EQ(tot, s.total);
  }
}

TEST(Stats, CsvLargestFirst) {
  const auto csv = stats_csv(corpus_stats(Corpus({msg("1", "b", 1, ""), msg("2", "a", 2, ""), msg("3", "b", 3, "")})));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "channel,count,percentage");
  EXPECT_NE(csv.find("\nb,2,"), std::string::npos);
  EXPECT_LT(csv.find("\nb,2,"), csv.find("\na,1,"));
}

TEST(Fixture, TelegramFilterKeepsVenezuelaMessages) {
  std::ifstream in(testsupport::fixture("telegram_venezuela.jsonl"));
  const auto r = parse_jsonl(in);
  ASSERT_TRUE(r.errors.empty());
  std::ifstream kw(testsupport::fixture("venezuela_keywords.txt"));
  const auto keywords = load_keywords(kw);
  const auto filtered = keyword_filter(r.corpus, keywords);
  EXPECT_GT(r.corpus.size(), filtered.size());
  const auto s = corpus_stats(filtered);
  EXPECT_EQ(s.total, 2038u);
  EXPECT_EQ(s.per_channel_counts.size(), 9u);
  EXPECT_DOUBLE_EQ(s.median_per_channel, 12.0);
}

TEST(Fixture, JsonlRoundTripIsIdentity) {
  std::ifstream in(testsupport::fixture("telegram_venezuela.jsonl"));
  const auto r = parse_jsonl(in);
  const auto text = to_jsonl(r.corpus);
  std::istringstream again(text);
  const auto back = parse_jsonl(again, canonical_mapping());
  EXPECT_EQ(to_jsonl(back.corpus), text);
}
