#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mlharness/common.hpp"
#include "mlharness/csv.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/ini.hpp"

using namespace mlharness;

TEST(Common, ParseDirectionAliases) {
  EXPECT_EQ(parse_direction("higher_better"), Direction::HigherBetter);
  EXPECT_EQ(parse_direction("min"), Direction::LowerBetter);
  EXPECT_EQ(parse_direction("lower"), Direction::LowerBetter);
  EXPECT_FALSE(parse_direction("sideways"));
  EXPECT_EQ(to_string(Direction::LowerBetter), "lower_better");
}

TEST(Common, StrictParsers) {
  EXPECT_EQ(parse_double(" 1.5 "), 1.5);
  EXPECT_FALSE(parse_double("1.5x"));
  EXPECT_FALSE(parse_double(""));
  EXPECT_EQ(parse_int("-42"), -42);
  EXPECT_FALSE(parse_int("4.2"));
}

TEST(Common, FixedAndRoundtripFormatting) {
  EXPECT_EQ(format_fixed(1.4921, 3), "1.492");
  EXPECT_EQ(format_fixed(21.2149, 2), "21.21");
  EXPECT_EQ(format_fixed(752.6, 0), "753");
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5}) {
    EXPECT_EQ(*parse_double(format_roundtrip(v)), v);
  }
}

TEST(Common, SplitTrimJoin) {
  EXPECT_EQ(split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(split_whitespace("  a \t b\n"), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(trim("\t x \n"), "x");
  EXPECT_EQ(join({"a", "b", "c"}, " | "), "a | b | c");
  EXPECT_EQ(utf8_length("h\xc3\xa9llo"), 5u);
}

TEST(Common, SeededRngIsReproducible) {
  SeededRng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next(), b.next());
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(7), 7u);
    b.below(7);
  }
}

TEST(Common, RngNormalHasRoughlyUnitMoments) {
  SeededRng rng(1);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Csv, QuotingAndLineEnds) {
  const auto doc = parse_csv("\xEF\xBB\xBFid,text\r\n1,\"a,b\"\r\n2,\"say \"\"hi\"\"\"\n");
  ASSERT_EQ(doc.rows.size(), 3u);
  EXPECT_EQ(doc.rows[0][0], "id");
  EXPECT_EQ(doc.rows[1][1], "a,b");
  EXPECT_EQ(doc.rows[2][1], "say \"hi\"");
  EXPECT_THROW(parse_csv("a,\"open\n"), Malformed);
}

TEST(Csv, EscapeRoundTrip) {
  const std::vector<std::string> cells = {"plain", "with,comma", "with \"quote\"", "line\nbreak"};
  const auto doc = parse_csv(csv_line(cells));
  ASSERT_EQ(doc.rows.size(), 1u);
  EXPECT_EQ(doc.rows[0], cells);
}

TEST(Ini, SectionsAndDefaults) {
  const auto doc = IniDocument::parse("top = 1\n# comment\n[run]\nk = 2\n\n[endpoint:gpt]\nscript = a.jsonl\n");
  EXPECT_EQ(doc.get("", "top"), "1");
  EXPECT_EQ(doc.get("run", "k"), "2");
  EXPECT_EQ(doc.get_or("run", "missing", "x"), "x");
  EXPECT_TRUE(doc.has_section("endpoint:gpt"));
  EXPECT_EQ(doc.section_names(), (std::vector<std::string>{"", "run", "endpoint:gpt"}));
  EXPECT_THROW(IniDocument::parse("[broken\n"), Malformed);
  EXPECT_THROW(IniDocument::load("/nonexistent/file.ini"), IoError);
}
