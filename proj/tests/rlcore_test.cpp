#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "remedy/rlcore.hpp"

namespace remedy::rl {
namespace {

// Direct double sum: A_t = sum_{l=0}^{T-1-t} (gamma*lambda)^l delta_{t+l}.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                               double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t l = 0; t + l < n; ++l) {
      const double delta = r[t + l] + gamma * v[t + l + 1] - v[t + l];
      a[t] += std::pow(gamma * lambda, static_cast<double>(l)) * delta;
    }
  }
  return a;
}

TEST(Env, BucketsAreMonotoneWithoutNoise) {
  SyntheticPairEnv env(0.0, 10, 11);
  EXPECT_EQ(env.bucket_for(90 - 10), 9);
  EXPECT_EQ(env.bucket_for(10 - 90), 1);
  EXPECT_EQ(env.bucket_for(-95), 0);
  std::vector<std::pair<double, int>> seen;
  for (int i = 0; i < 10000; ++i) {
    const auto s = env.sample();
    ASSERT_NE(s.pair.g_a, s.pair.g_b);
    ASSERT_GE(s.pair.g_a, 0.0);
    ASSERT_LE(s.pair.g_a, 100.0);
    EXPECT_EQ(s.pair.label == corpus::Label::kABetter, s.pair.g_a > s.pair.g_b);
    seen.emplace_back(s.pair.g_a - s.pair.g_b, s.context);
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 1; i < seen.size(); ++i) ASSERT_LE(seen[i - 1].second, seen[i].second);
  EXPECT_EQ(seen.front().second, 0);
  EXPECT_EQ(seen.back().second, 9);
}

TEST(Env, SeededAndValidated) {
  SyntheticPairEnv a(3.0, 4, 5);
  SyntheticPairEnv b(3.0, 4, 5);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.sample();
    const auto y = b.sample();
    EXPECT_EQ(x.context, y.context);
    EXPECT_EQ(x.pair.g_a, y.pair.g_a);
  }
  EXPECT_THROW(SyntheticPairEnv(-1.0, 4, 1), Error);
  EXPECT_THROW(SyntheticPairEnv(0.0, 1, 1), Error);
}

TEST(Rollout, LengthAndTerminalReward) {
  SyntheticPairEnv env(0.0, 10, 1);
  PolicySnapshot policy(10, 2);
  std::mt19937_64 rng(2);
  const auto batch = rollout(policy, env, 50, 0, {}, rng);
  ASSERT_EQ(batch.size(), 50u);
  for (const auto& t : batch) {
    EXPECT_EQ(t.length(), 2u);
    EXPECT_EQ(t.values.size(), 3u);
    const auto r = t.rewards();
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[1], t.terminal_reward);
  }

  PolicySnapshot filler(10, 5);
  EXPECT_EQ(rollout(filler, env, 3, 3, {}, rng).front().length(), 5u);
  EXPECT_THROW(rollout(filler, env, 3, 0, {}, rng), Error);
}

TEST(Rollout, ForcedAgreementEarnsRankReward) {
  SyntheticPairEnv env(0.0, 10, 3);
  PolicySnapshot policy(10, 2);
  for (int c = 0; c < 10; ++c) {
    policy.row(c, 0)[10] = 60.0;  // score_a = 100
    policy.row(c, 1)[0] = 60.0;   // score_b = 0
  }
  std::mt19937_64 rng(4);
  int a_favoring = 0;
  for (const auto& t : rollout(policy, env, 400, 0, {}, rng)) {
    EXPECT_EQ(t.tokens[0], 10);
    EXPECT_EQ(t.tokens[1], 0);
    if (t.context >= 5) {
      ++a_favoring;
      EXPECT_EQ(t.rank_reward, 1);
      EXPECT_GE(t.terminal_reward, 0.0);
    } else {
      EXPECT_EQ(t.rank_reward, 0);
      EXPECT_EQ(t.terminal_reward, 0.0);
    }
  }
  EXPECT_GT(a_favoring, 100);
}

TEST(Rollout, UniformPolicyRankRate) {
  SyntheticPairEnv env(0.0, 10, 5);
  PolicySnapshot policy(10, 2);
  std::mt19937_64 rng(6);
  double sum = 0.0;
  const auto batch = rollout(policy, env, 10000, 0, {}, rng);
  for (const auto& t : batch) sum += t.rank_reward;
  const double rate = sum / 10000.0;
  EXPECT_GE(rate, 0.40);
  EXPECT_LE(rate, 0.50);
  EXPECT_NEAR(rate, (1.0 - 1.0 / 11.0) / 2.0, 0.02);
}

TEST(Gae, ZeroBaselineTelescopes) {
  const std::vector<double> r{0, 0, 0, 0.7};
  const std::vector<double> v(5, 0.0);
  const auto est = gae(r, v, 1.0, 1.0);
  for (double a : est.advantages) EXPECT_NEAR(a, 0.7, 1e-15);
  EXPECT_EQ(est.deltas.size(), 4u);
  EXPECT_EQ(est.returns.size(), 4u);
}

TEST(Gae, HandChosenThreeStep) {
  const std::vector<double> r{0, 0, 1};
  const std::vector<double> v{0.2, -0.1, 0.4, 0.0};
  const auto est = gae(r, v, 0.9, 0.5);
  // deltas: 0 + 0.9*(-0.1) - 0.2 = -0.29; 0.9*0.4 + 0.1 = 0.46; 1 - 0.4 = 0.6
  EXPECT_NEAR(est.deltas[0], -0.29, 1e-12);
  EXPECT_NEAR(est.deltas[1], 0.46, 1e-12);
  EXPECT_NEAR(est.deltas[2], 0.6, 1e-12);
  EXPECT_NEAR(est.advantages[2], 0.6, 1e-12);
  EXPECT_NEAR(est.advantages[1], 0.46 + 0.45 * 0.6, 1e-12);
  EXPECT_NEAR(est.advantages[0], -0.29 + 0.45 * 0.46 + 0.45 * 0.45 * 0.6, 1e-12);
  const auto oracle = gae_oracle(r, v, 0.9, 0.5);
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(est.advantages[t], oracle[t], 1e-12);
    EXPECT_NEAR(est.returns[t], est.advantages[t] + v[t], 1e-12);
  }
}

TEST(Gae, RandomCasesMatchOracles) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> ug(0.05, 1.0);
  std::uniform_int_distribution<int> len(1, 12);
  for (int i = 0; i < 1000; ++i) {
    const int n = len(rng);
    Trajectory t;
    t.tokens.assign(n, 0);
    t.logprobs_old.assign(n, 0.0);
    t.terminal_reward = u(rng);
    t.values.resize(n + 1);
    for (int k = 0; k < n; ++k) t.values[k] = u(rng);
    t.values[n] = 0.0;
    const double gamma = ug(rng);
    const double lambda = ug(rng);

    const auto est = gae(t, gamma, lambda);
    const auto oracle = gae_oracle(t.rewards(), t.values, gamma, lambda);
    for (int k = 0; k < n; ++k) ASSERT_NEAR(est.advantages[k], oracle[k], 1e-9);

    // lambda = 1: discounted Monte Carlo return minus the baseline.
    const auto mc = gae(t, gamma, 1.0);
    for (int k = 0; k < n; ++k) {
      const double ret = std::pow(gamma, n - 1 - k) * t.terminal_reward;
      ASSERT_NEAR(mc.advantages[k], ret - t.values[k], 1e-9);
    }
  }
}

TEST(Gae, LengthMismatch) {
  const std::vector<double> r{1, 2};
  const std::vector<double> v{0, 0};
  EXPECT_THROW(gae(r, v, 1.0, 1.0), Error);
  Trajectory t;
  t.tokens = {1, 2};
  t.logprobs_old = {0.0};
  t.values = {0, 0, 0};
  EXPECT_THROW(gae(t, 1.0, 1.0), Error);
}

TEST(Ppo, ClipExamples) {
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.0, 1.0, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
}

TEST(Ppo, ClippedNeverExceedsUnclipped) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ur(0.0, 3.0);
  std::uniform_real_distribution<double> ua(-5.0, 5.0);
  std::uniform_real_distribution<double> ue(0.01, 0.5);
  for (int i = 0; i < 10000; ++i) {
    const double ratio = ur(rng);
    const double adv = ua(rng);
    EXPECT_LE(clipped_surrogate(ratio, adv, ue(rng)), ratio * adv);
  }
}

struct Fixture {
  PolicySnapshot policy{3, 2, {0, 50, 100}};
  PolicySnapshot reference{3, 2, {0, 50, 100}};
  std::vector<Trajectory> batch;
  std::vector<std::vector<double>> advantages;
};

Fixture make_fixture(std::uint64_t seed) {
  Fixture f;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.7);
  for (double& x : f.policy.logits()) x = n(rng);
  for (double& x : f.reference.logits()) x = n(rng);
  std::uniform_int_distribution<int> ctx(0, 2);
  std::uniform_int_distribution<int> tok(0, 2);
  for (int i = 0; i < 6; ++i) {
    Trajectory t;
    t.context = ctx(rng);
    t.tokens = {tok(rng), tok(rng)};
    t.logprobs_old = {std::log(0.3) + 0.2 * n(rng), std::log(0.4) + 0.2 * n(rng)};
    t.values = {0, 0, 0};
    f.batch.push_back(t);
    f.advantages.push_back({n(rng) * 2, n(rng) * 2});
  }
  return f;
}

TEST(Ppo, IdentityRatioWithoutKl) {
  PolicySnapshot policy(1, 2, {0, 100});
  Trajectory t;
  t.tokens = {0, 1};
  t.logprobs_old = {std::log(0.5), std::log(0.5)};
  t.values = {0, 0, 0};
  const std::vector<Trajectory> batch{t};
  const std::vector<std::vector<double>> adv{{1.0, 1.0}};
  const auto out = ppo_loss(batch, adv, policy, policy, RlConfig{});
  EXPECT_NEAR(out.surrogate, 1.0, 1e-12);
  EXPECT_NEAR(out.kl, 0.0, 1e-15);
  EXPECT_NEAR(out.loss, -1.0, 1e-12);
  EXPECT_EQ(out.clip_fraction, 0.0);
}

TEST(Ppo, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Fixture f = make_fixture(seed);
    RlConfig cfg;
    cfg.kl_coeff = 0.3;
    const auto out = ppo_loss(f.batch, f.advantages, f.policy, f.reference, cfg);
    const double h = 1e-6;
    for (std::size_t i = 0; i < f.policy.logits().size(); ++i) {
      PolicySnapshot up = f.policy;
      PolicySnapshot down = f.policy;
      up.logits()[i] += h;
      down.logits()[i] -= h;
      const auto lu = ppo_loss(f.batch, f.advantages, up, f.reference, cfg);
      const auto ld = ppo_loss(f.batch, f.advantages, down, f.reference, cfg);
      if (lu.clip_fraction != ld.clip_fraction) continue;  // straddles a clip kink
      EXPECT_NEAR(out.gradient[i], (lu.loss - ld.loss) / (2 * h), 1e-5)
          << "seed " << seed << " index " << i;
    }
  }
}

TEST(Ppo, KlZeroAtReference) {
  Fixture f = make_fixture(3);
  EXPECT_NEAR(mean_kl(f.policy, f.policy), 0.0, 1e-15);
  const auto out = ppo_loss(f.batch, f.advantages, f.policy, f.policy, RlConfig{});
  EXPECT_NEAR(out.kl, 0.0, 1e-15);
  EXPECT_GT(mean_kl(f.policy, f.reference), 0.0);
}

TEST(Ppo, Errors) {
  Fixture f = make_fixture(4);
  EXPECT_THROW(ppo_loss({}, {}, f.policy, f.reference, RlConfig{}), Error);
  f.policy.logits()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    ppo_loss(f.batch, f.advantages, f.policy, f.reference, RlConfig{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
  }
}

RlConfig short_config(int updates) {
  RlConfig cfg;
  cfg.updates = updates;
  cfg.batch_size = 64;
  return cfg;
}

TEST(TrainToy, ZeroLearningRateLeavesPolicyUnchanged) {
  RlConfig cfg = short_config(60);
  cfg.learning_rate = 0.0;
  const auto report = train_toy(SyntheticPairEnv(0.0, 10, 1), cfg, {});
  EXPECT_EQ(report.final_policy, report.reference_policy);
  double first = 0.0;
  double second = 0.0;
  for (int i = 0; i < 30; ++i) first += report.history[i].mean_reward / 30;
  for (int i = 30; i < 60; ++i) second += report.history[i].mean_reward / 30;
  EXPECT_NEAR(first, second, 0.05);
  for (const auto& rec : report.history) EXPECT_EQ(rec.kl, 0.0);
}

TEST(TrainToy, Deterministic) {
  const auto a = train_toy(SyntheticPairEnv(2.0, 10, 1), short_config(40), {});
  const auto b = train_toy(SyntheticPairEnv(2.0, 10, 1), short_config(40), {});
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.final_policy, b.final_policy);
  EXPECT_EQ(a.values, b.values);
  RlConfig other = short_config(40);
  other.rng_seed = 2;
  EXPECT_NE(train_toy(SyntheticPairEnv(2.0, 10, 1), other, {}).history, a.history);
}

TEST(TrainToy, LearnsToOrderScores) {
  const auto report = train_toy(SyntheticPairEnv(0.0, 10, 1), short_config(200), {});
  EXPECT_GE(report.final_mean_rank_reward(), 0.85);
  // Brute-force check on the greedy policy: buckets below the midpoint hold
  // B-favoring pairs, the rest A-favoring.
  const auto greedy = greedy_scores(report.final_policy);
  for (int c = 0; c < 10; ++c) {
    if (c < 5) {
      EXPECT_LT(greedy[c].first, greedy[c].second) << "bucket " << c;
    } else {
      EXPECT_GT(greedy[c].first, greedy[c].second) << "bucket " << c;
    }
  }
}

TEST(TrainToy, StrongKlKeepsPolicyNearReference) {
  for (std::uint64_t seed : {1, 2, 3}) {
    RlConfig free_cfg = short_config(80);
    free_cfg.rng_seed = seed;
    free_cfg.kl_coeff = 0.0;
    RlConfig tight_cfg = free_cfg;
    tight_cfg.kl_coeff = 1.0;
    const double free_kl = train_toy(SyntheticPairEnv(0.0, 10, seed), free_cfg, {}).final_kl();
    const double tight_kl = train_toy(SyntheticPairEnv(0.0, 10, seed), tight_cfg, {}).final_kl();
    EXPECT_LT(tight_kl, free_kl) << "seed " << seed;
  }
}

TEST(TrainToy, DivergenceGuard) {
  RlConfig cfg = short_config(5);
  cfg.max_mean_abs_logit = 1e-6;
  try {
    train_toy(SyntheticPairEnv(0.0, 10, 1), cfg, {});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
  }
}

TEST(TrainToy, HistoryRowsSerialize) {
  const auto report = train_toy(SyntheticPairEnv(0.0, 10, 1), short_config(2), {});
  const json row = report.history.front();
  EXPECT_EQ(row["update"], 1);
  for (const char* key : {"mean_reward", "mean_rank_reward", "kl", "loss"}) {
    EXPECT_TRUE(row.contains(key)) << key;
  }
}

TEST(RlConfig, Validation) {
  RlConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.lambda = 1.1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.clip_eps = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(PolicySnapshot(2, 2, {10, 5}), Error);
  EXPECT_THROW(PolicySnapshot(2, 2, {0, 120}), Error);
}

}  // namespace
}  // namespace remedy::rl
