#include <gtest/gtest.h>

#include <random>
#include <string>

#include "remedy/verdict.hpp"

namespace remedy::verdict {
namespace {

TEST(ParsePairwise, FormatInstance) {
  const auto v = parse_pairwise("analysis...\n####\nA: 85\nB: 70");
  ASSERT_EQ(v.status, Status::kOkPairwise);
  EXPECT_EQ(v.score_a, 85.0);
  EXPECT_EQ(v.score_b, 70.0);
  EXPECT_EQ(v.rationale, "analysis...");
  EXPECT_FALSE(v.failure_reason.has_value());
}

TEST(ParsePairwise, NoMarker) {
  const auto v = parse_pairwise("no scores here");
  EXPECT_EQ(v.status, Status::kParseFailure);
  EXPECT_EQ(v.failure_reason, FailureReason::kNoMarker);
  EXPECT_FALSE(v.score_a || v.score_b || v.score_single);
}

TEST(ParsePairwise, OutOfRange) {
  const auto v = parse_pairwise("####\nA: 150\nB: 10");
  EXPECT_EQ(v.status, Status::kParseFailure);
  EXPECT_EQ(v.failure_reason, FailureReason::kOutOfRange);
  EXPECT_EQ(parse_pairwise("####\nA: -1\nB: 10").failure_reason, FailureReason::kOutOfRange);
}

TEST(ParsePairwise, NonNumeric) {
  EXPECT_EQ(parse_pairwise("####\nA: good\nB: 10").failure_reason, FailureReason::kNonNumeric);
  EXPECT_EQ(parse_pairwise("####\nA: 10").failure_reason, FailureReason::kNonNumeric);
  EXPECT_EQ(parse_pairwise("text ####").failure_reason, FailureReason::kNonNumeric);
}

TEST(ParsePairwise, DuplicateLines) {
  EXPECT_EQ(parse_pairwise("####\nA: 10\nB: 20\nA: 30").failure_reason,
            FailureReason::kDuplicateBlock);
}

TEST(ParsePairwise, LastBlockWins) {
  const auto v = parse_pairwise(
      "Format:\n####\nA: [score]\nB: [score]\nMy analysis.\n####\nA: 72.5\nB: 40.");
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v.score_a, 72.5);
  EXPECT_EQ(v.score_b, 40.0);
  EXPECT_EQ(v.rationale.find("A: 72.5"), std::string::npos);
  EXPECT_NE(v.rationale.find("My analysis."), std::string::npos);
}

TEST(ParsePairwise, ToleratesDecorationAndReversedOrder) {
  auto v = parse_pairwise("x\n#####\n**A:** 90\n**B**: 80 (out of 100)\n");
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v.score_a, 90.0);
  EXPECT_EQ(v.score_b, 80.0);
  EXPECT_EQ(v.rationale, "x");
  EXPECT_FALSE(v.order_reversed);

  v = parse_pairwise("####\r\nB: 20\r\nA: 30\r\n");
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v.score_a, 30.0);
  EXPECT_EQ(v.score_b, 20.0);
  EXPECT_TRUE(v.order_reversed);
}

TEST(ParseSingle, ExampleBox) {
  const auto v = parse_single(
      "The translation conveys the main meaning but mistranslates one idiom.\n#### Score: 65.");
  ASSERT_EQ(v.status, Status::kOkSingle);
  EXPECT_EQ(v.score_single, 65.0);
  EXPECT_EQ(v.rationale, "The translation conveys the main meaning but mistranslates one idiom.");
}

TEST(ParseSingle, Boundary) { EXPECT_EQ(parse_single("#### Score: 0").score_single, 0.0); }

TEST(ParseSingle, LastOccurrence) {
  const auto v = parse_single("#### Score: 90\nreconsidering...\n#### Score: 40");
  EXPECT_EQ(v.score_single, 40.0);
  EXPECT_NE(v.rationale.find("reconsidering"), std::string::npos);
}

TEST(ParseSingle, SkipsTrailingMarkersWithoutScore) {
  const auto v = parse_single("analysis\n#### Score: 55\n####");
  EXPECT_EQ(v.score_single, 55.0);
}

TEST(ParseSingle, Failures) {
  EXPECT_EQ(parse_single("Score: 50").failure_reason, FailureReason::kNoMarker);
  EXPECT_EQ(parse_single("#### Score: high").failure_reason, FailureReason::kNonNumeric);
  EXPECT_EQ(parse_single("#### Score: 101").failure_reason, FailureReason::kOutOfRange);
}

TEST(RenderScores, Definition) {
  EXPECT_EQ(render_scores(85, 70), "####\nA: 85\nB: 70");
  const auto t = render_scores(100, 0);
  EXPECT_NE(t.find("A: 100"), std::string::npos);
  EXPECT_NE(t.find("B: 0"), std::string::npos);
  EXPECT_EQ(render_scores(72.5, 0.25), "####\nA: 72.5\nB: 0.25");
  EXPECT_THROW(render_scores(101, 0), Error);
  EXPECT_THROW(render_scores(0, -0.5), Error);
}

TEST(RenderScores, RoundTripFractional) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng);
    const double b = u(rng);
    const auto v = parse_pairwise(render_scores(a, b));
    ASSERT_TRUE(v.ok());
    EXPECT_EQ(*v.score_a, a);
    EXPECT_EQ(*v.score_b, b);
  }
}

TEST(Parsing, NeverThrowsOnArbitraryText) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "####AB:Score 0123456789.-+*\n\t\r xyz";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 60);
  for (int i = 0; i < 20000; ++i) {
    std::string text;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) text += alphabet[pick(rng)];
    ParsedVerdict p;
    ParsedVerdict s;
    ASSERT_NO_THROW(p = parse_pairwise(text)) << text;
    ASSERT_NO_THROW(s = parse_single(text)) << text;
    for (const auto& v : {p, s}) {
      if (v.status == Status::kParseFailure) {
        EXPECT_TRUE(v.failure_reason.has_value());
        EXPECT_FALSE(v.score_a || v.score_b || v.score_single);
      }
      if (v.status == Status::kOkPairwise) {
        EXPECT_TRUE(*v.score_a >= 0 && *v.score_a <= 100 && *v.score_b >= 0 && *v.score_b <= 100);
      }
    }
  }
}

TEST(VerdictRow, RoundTrip) {
  for (const char* text : {"why\n####\nA: 85\nB: 70", "nothing", "r\n#### Score: 12.5"}) {
    const auto v = std::string(text).find("Score") != std::string::npos ? parse_single(text)
                                                                        : parse_pairwise(text);
    const auto back = from_json_row(to_json_row("item", v));
    EXPECT_EQ(back.status, v.status);
    EXPECT_EQ(back.score_a, v.score_a);
    EXPECT_EQ(back.score_b, v.score_b);
    EXPECT_EQ(back.score_single, v.score_single);
    EXPECT_EQ(back.failure_reason, v.failure_reason);
    EXPECT_EQ(back.rationale, v.rationale);
  }
}

TEST(VerdictRow, RejectsInconsistentRows) {
  EXPECT_THROW(from_json_row({{"status", "OK_PAIRWISE"}, {"score_a", 10}}), Error);
  EXPECT_THROW(from_json_row({{"status", "MAYBE"}}), Error);
  EXPECT_THROW(from_json_row({{"status", "OK_SINGLE"}, {"score", 140}}), Error);
}

}  // namespace
}  // namespace remedy::verdict
