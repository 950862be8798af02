#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "remedy/reward.hpp"

namespace remedy::reward {
namespace {

// Independent oracle: Huber written as the infimal convolution
// min_z (z^2 / (2c) + |e - z|), attained at z = clamp(e, -c, c).
double huber_oracle(double e, double c) {
  const double z = std::max(-c, std::min(c, e));
  return z * z / (2 * c) + std::abs(e - z);
}

corpus::PreferencePair pair_with(double g_a, double g_b) {
  corpus::PreferencePair p;
  p.id = "p";
  p.lang_pair = "en-de";
  p.g_a = g_a;
  p.g_b = g_b;
  p.label = g_a > g_b ? corpus::Label::kABetter : corpus::Label::kBBetter;
  return p;
}

verdict::ParsedVerdict scores(double a, double b) {
  return verdict::parse_pairwise(verdict::render_scores(a, b));
}

TEST(Huber, HandValues) {
  EXPECT_NEAR(huber_penalty(0, 5), 0.0, 1e-12);
  EXPECT_NEAR(huber_penalty(3, 5), 0.9, 1e-12);
  EXPECT_NEAR(huber_penalty(10, 5), 7.5, 1e-12);
  EXPECT_NEAR(huber_penalty(5, 5), 2.5, 1e-12);
  EXPECT_NEAR(huber_penalty(-5, 5), 2.5, 1e-12);
  EXPECT_THROW(huber_penalty(1, 0), Error);
  EXPECT_THROW(huber_penalty(1, -2), Error);
}

TEST(Huber, MatchesOracleAndProperties) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ue(-120, 120);
  std::uniform_real_distribution<double> uc(0.1, 20);
  for (int i = 0; i < 10000; ++i) {
    const double e = ue(rng);
    const double c = uc(rng);
    EXPECT_NEAR(huber_penalty(e, c), huber_oracle(e, c), 1e-9);
    EXPECT_EQ(huber_penalty(e, c), huber_penalty(-e, c));
    EXPECT_GE(huber_penalty(e, c), 0.0);
    EXPECT_LE(huber_penalty(e, c), huber_penalty(std::abs(e) + 0.5, c));
  }
  for (double c : {0.5, 1.0, 5.0, 17.0}) {
    EXPECT_NEAR(huber_penalty(std::nextafter(c, 0.0), c), huber_penalty(std::nextafter(c, 100.0), c),
                1e-9);
  }
}

TEST(Calibration, HandValues) {
  EXPECT_NEAR(calibration_term(0, 0, 5), 0.0, 1e-12);
  EXPECT_NEAR(calibration_term(3, 10, 5), 0.84, 1e-12);
  EXPECT_NEAR(calibration_term(5, 5, 5), 0.5, 1e-12);
}

TEST(RankingReward, Examples) {
  EXPECT_EQ(ranking_reward(scores(100, 99), pair_with(100, 0)), 1);
  EXPECT_EQ(ranking_reward(scores(100, 0), pair_with(100, 0)), 1);
  EXPECT_EQ(ranking_reward(scores(50, 50), pair_with(60, 40)), 0);
  EXPECT_EQ(ranking_reward(verdict::parse_pairwise("oops"), pair_with(60, 40)), 0);
  EXPECT_EQ(ranking_reward(scores(10, 20), pair_with(60, 40)), 0);
  EXPECT_EQ(ranking_reward(verdict::parse_single("#### Score: 50"), pair_with(60, 40)), 0);
}

TEST(ShapedReward, Examples) {
  const RewardConfig cfg;
  EXPECT_EQ(shaped_reward(scores(60, 61), pair_with(80, 20), cfg).r, 0.0);
  EXPECT_EQ(shaped_reward(scores(80, 20), pair_with(80, 20), cfg).r, 1.0);
  const auto s = shaped_reward(scores(83, 30), pair_with(80, 20), cfg);
  EXPECT_EQ(s.r_rank, 1);
  EXPECT_NEAR(s.e_a, 3, 1e-12);
  EXPECT_NEAR(s.e_b, 10, 1e-12);
  EXPECT_NEAR(s.rho_a, 0.9, 1e-12);
  EXPECT_NEAR(s.rho_b, 7.5, 1e-12);
  EXPECT_NEAR(s.psi, 0.84, 1e-12);
  EXPECT_NEAR(s.r, 0.58, 1e-12);
}

TEST(ShapedReward, ParseFailureScoresZeroWithNullDeviations) {
  const auto s = shaped_reward(verdict::parse_pairwise("####\nA: 200\nB: 3"), pair_with(80, 20), {});
  EXPECT_EQ(s.r_rank, 0);
  EXPECT_EQ(s.r, 0.0);
  EXPECT_FALSE(s.scored);
  const auto row = to_json_row("p", s);
  EXPECT_TRUE(row["psi"].is_null());
  EXPECT_EQ(row["r"], 0.0);
}

TEST(ShapedReward, ClampAndUnclamped) {
  RewardConfig cfg;
  cfg.beta = 1.0;
  // psi = ((40 - 2.5) / 5 + (40 - 2.5) / 5) / 2 = 7.5
  const auto v = scores(100, 0);
  const auto p = pair_with(60, 40);
  EXPECT_EQ(shaped_reward(v, p, cfg).r, 0.0);
  cfg.clamp_shaping = false;
  EXPECT_NEAR(shaped_reward(v, p, cfg).r, 1.0 - 7.5, 1e-12);
}

TEST(ShapedReward, Properties) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> u(0, 100);
  std::uniform_real_distribution<double> ub(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double ga = u(rng);
    double gb = u(rng);
    if (ga == gb) continue;
    const double sa = u(rng);
    const double sb = u(rng);
    RewardConfig cfg;
    cfg.beta = ub(rng);
    const auto v = scores(sa, sb);
    const auto p = pair_with(ga, gb);
    const auto s = shaped_reward(v, p, cfg);
    EXPECT_GE(s.r, 0.0);
    EXPECT_LE(s.r, 1.0);
    EXPECT_LE(s.r, s.r_rank);
    EXPECT_NEAR(s.e_a, sa - ga, 1e-12);
    EXPECT_NEAR(s.e_b, sb - gb, 1e-12);

    // A<->B swap of both verdict and pair.
    const auto swapped = shaped_reward(scores(sb, sa), pair_with(gb, ga), cfg);
    EXPECT_EQ(swapped.r_rank, s.r_rank);
    EXPECT_NEAR(swapped.r, s.r, 1e-12);

    // beta = 0 reduces to the ranking reward.
    RewardConfig off = cfg;
    off.beta = 0.0;
    EXPECT_EQ(shaped_reward(v, p, off).r, static_cast<double>(s.r_rank));

    // Moving a prediction further from its target never raises r while the
    // ranking stays correct.
    if (s.r_rank == 1) {
      const double further = sa >= ga ? std::min(100.0, sa + 1) : std::max(0.0, sa - 1);
      const auto worse = shaped_reward(scores(further, sb), p, cfg);
      if (worse.r_rank == 1) {
        EXPECT_LE(worse.r, s.r + 1e-12);
      }
    }
  }
}

TEST(GenRm, Adjust) {
  RewardConfig cfg;
  ShapedReward base;
  base.r = 1.0;
  cfg.genrm_coeff = 0.1;
  EXPECT_NEAR(genrm_adjust(base, 100, cfg), 1.0, 1e-12);
  EXPECT_NEAR(genrm_adjust(base, 0, cfg), 0.9, 1e-12);
  EXPECT_THROW(genrm_adjust(base, 101, cfg), Error);
  cfg.genrm_coeff.reset();
  EXPECT_EQ(genrm_adjust(base, 0, cfg), 1.0);
}

TEST(GenRm, InjectedJudge) {
  RewardConfig cfg;
  cfg.genrm_coeff = 0.5;
  ShapedReward base;
  base.r = 0.8;
  const auto v = verdict::parse_pairwise("short reason\n####\nA: 1\nB: 2");
  int calls = 0;
  const RationaleJudge judge = [&](std::string_view rationale) {
    ++calls;
    EXPECT_EQ(rationale, "short reason");
    return 50.0;
  };
  EXPECT_NEAR(genrm_adjust(base, v, judge, cfg), 0.8 - 0.25, 1e-12);
  cfg.genrm_coeff.reset();
  EXPECT_EQ(genrm_adjust(base, v, judge, cfg), 0.8);
  EXPECT_EQ(calls, 1);
}

TEST(RewardConfig, Validation) {
  RewardConfig cfg;
  cfg.c = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.beta = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.genrm_coeff = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace remedy::reward
