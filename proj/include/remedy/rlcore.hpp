#pragma once

// Clipped PPO with GAE on a tabular softmax policy.
//
// The policy is a table of logits indexed by (context bucket, emission step)
// over a small score alphabet. An episode emits `filler_len` placeholder
// tokens, then score A, then score B. The two scores are rendered as a
// score block, re-parsed and rewarded against the hidden human scores, so
// every episode goes through the same parse -> reward path as a model reply.
// All rewards are terminal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/corpus.hpp"
#include "remedy/error.hpp"
#include "remedy/reward.hpp"
#include "remedy/verdict.hpp"

namespace remedy::rl {

using json = nlohmann::json;

struct RlConfig {
  double gamma = 1.0;
  double lambda = 1.0;
  double clip_eps = 0.2;
  double kl_coeff = 0.01;
  double learning_rate = 4.0;
  int updates = 500;
  int batch_size = 128;
  std::uint64_t rng_seed = 1;

  // Knobs below have no counterpart in the objective itself.
  int ppo_epochs = 4;
  double value_learning_rate = 0.5;
  bool normalize_advantages = true;
  int filler_len = 2;
  double max_mean_abs_logit = 50.0;  // divergence guard

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) fail(ErrorKind::kConfig, "gamma must lie in (0,1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::kConfig, "lambda must lie in [0,1]");
    if (!(clip_eps > 0.0)) fail(ErrorKind::kConfig, "clip_eps must be positive");
    if (!(kl_coeff >= 0.0)) fail(ErrorKind::kConfig, "kl_coeff must be non-negative");
    if (!(learning_rate >= 0.0)) fail(ErrorKind::kConfig, "learning_rate must be non-negative");
    if (updates < 1) fail(ErrorKind::kConfig, "updates must be positive");
    if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be positive");
    if (ppo_epochs < 1) fail(ErrorKind::kConfig, "ppo_epochs must be positive");
    if (!(value_learning_rate >= 0.0 && value_learning_rate <= 1.0)) {
      fail(ErrorKind::kConfig, "value_learning_rate must lie in [0,1]");
    }
    if (filler_len < 0) fail(ErrorKind::kConfig, "filler_len must be non-negative");
    if (!(max_mean_abs_logit > 0.0)) fail(ErrorKind::kConfig, "max_mean_abs_logit must be positive");
  }
};

inline std::vector<double> default_alphabet() {
  std::vector<double> a;
  for (int v = 0; v <= 100; v += 10) a.push_back(v);
  return a;
}

// ---------------------------------------------------------------------------
// Policy table

class PolicySnapshot {
 public:
  PolicySnapshot() = default;

  // All-zero logits, i.e. the uniform policy.
  PolicySnapshot(int num_contexts, int num_steps, std::vector<double> alphabet = default_alphabet())
      : alphabet_(std::move(alphabet)), num_contexts_(num_contexts), num_steps_(num_steps) {
    if (num_contexts < 1 || num_steps < 1) {
      fail(ErrorKind::kConfig, "policy needs at least one context and one step");
    }
    if (alphabet_.empty()) fail(ErrorKind::kConfig, "policy alphabet is empty");
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
      if (!(alphabet_[i] >= 0.0 && alphabet_[i] <= 100.0) ||
          (i > 0 && !(alphabet_[i] > alphabet_[i - 1]))) {
        fail(ErrorKind::kConfig, "alphabet must be strictly increasing within [0,100]");
      }
    }
    logits_.assign(static_cast<std::size_t>(num_contexts) * num_steps * alphabet_.size(), 0.0);
  }

  int num_contexts() const { return num_contexts_; }
  int num_steps() const { return num_steps_; }
  std::size_t alphabet_size() const { return alphabet_.size(); }
  const std::vector<double>& alphabet() const { return alphabet_; }

  std::span<double> row(int context, int step) {
    return {logits_.data() + offset(context, step), alphabet_.size()};
  }
  std::span<const double> row(int context, int step) const {
    return {logits_.data() + offset(context, step), alphabet_.size()};
  }

  std::vector<double>& logits() { return logits_; }
  const std::vector<double>& logits() const { return logits_; }

  std::size_t offset(int context, int step) const {
    return (static_cast<std::size_t>(context) * num_steps_ + step) * alphabet_.size();
  }

  bool operator==(const PolicySnapshot&) const = default;

 private:
  std::vector<double> alphabet_;
  int num_contexts_ = 0;
  int num_steps_ = 0;
  std::vector<double> logits_;
};

inline void check_finite(std::span<const double> logits) {
  for (double x : logits) {
    if (!std::isfinite(x)) fail(ErrorKind::kDivergence, "non-finite logit");
  }
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  const double log_z = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

// KL(p || q) for two categorical distributions given as logits.
inline double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits) {
  const auto lp = log_softmax(p_logits);
  const auto lq = log_softmax(q_logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return std::max(0.0, kl);
}

// Mean over all (context, step) cells of KL(policy || reference).
inline double mean_kl(const PolicySnapshot& policy, const PolicySnapshot& reference) {
  double total = 0.0;
  for (int c = 0; c < policy.num_contexts(); ++c) {
    for (int s = 0; s < policy.num_steps(); ++s) {
      total += kl_divergence(policy.row(c, s), reference.row(c, s));
    }
  }
  return total / (policy.num_contexts() * policy.num_steps());
}

inline double mean_abs_logit(const PolicySnapshot& policy) {
  double total = 0.0;
  for (double x : policy.logits()) total += std::abs(x);
  return policy.logits().empty() ? 0.0 : total / static_cast<double>(policy.logits().size());
}

// Value estimates V(context, step).
class ValueTable {
 public:
  ValueTable() = default;
  ValueTable(int num_contexts, int num_steps)
      : num_steps_(num_steps), values_(static_cast<std::size_t>(num_contexts) * num_steps, 0.0) {}

  double at(int context, int step) const {
    return values_.empty() ? 0.0 : values_[static_cast<std::size_t>(context) * num_steps_ + step];
  }
  double& at(int context, int step) {
    return values_[static_cast<std::size_t>(context) * num_steps_ + step];
  }
  bool empty() const { return values_.empty(); }

  bool operator==(const ValueTable&) const = default;

 private:
  int num_steps_ = 0;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Synthetic pair environment

struct EnvSample {
  int context = 0;
  corpus::PreferencePair pair;
};

// Latent qualities q_a, q_b ~ U[0,100] serve directly as human scores
// (rounded to integers by default, which makes ties possible; tied draws are
// resampled). The agent sees only the bucket of (q_a - q_b) + N(0, sigma)
// over [-100, 100]; bucket 0 favours B most, the top bucket favours A most.
class SyntheticPairEnv {
 public:
  SyntheticPairEnv(double noise_sigma, int num_context_buckets, std::uint64_t rng_seed,
                   bool integer_scores = true)
      : noise_sigma_(noise_sigma),
        num_buckets_(num_context_buckets),
        integer_scores_(integer_scores),
        rng_(rng_seed) {
    if (!(noise_sigma >= 0.0)) fail(ErrorKind::kConfig, "noise_sigma must be non-negative");
    if (num_context_buckets < 2) fail(ErrorKind::kConfig, "need at least two context buckets");
  }

  int num_buckets() const { return num_buckets_; }
  double noise_sigma() const { return noise_sigma_; }

  int bucket_for(double observation) const {
    const double width = 200.0 / num_buckets_;
    const int b = static_cast<int>(std::floor((observation + 100.0) / width));
    return std::clamp(b, 0, num_buckets_ - 1);
  }

  EnvSample sample() {
    std::uniform_real_distribution<double> quality(0.0, 100.0);
    double q_a = 0.0;
    double q_b = 0.0;
    do {
      q_a = quality(rng_);
      q_b = quality(rng_);
      if (integer_scores_) {
        q_a = std::round(q_a);
        q_b = std::round(q_b);
      }
    } while (q_a == q_b);

    double observation = q_a - q_b;
    if (noise_sigma_ > 0.0) observation += std::normal_distribution<double>(0.0, noise_sigma_)(rng_);

    EnvSample out;
    out.context = bucket_for(observation);
    out.pair.id = "toy-" + std::to_string(draws_++);
    out.pair.lang_pair = std::string(corpus::kUndeterminedLangPair);
    out.pair.g_a = q_a;
    out.pair.g_b = q_b;
    out.pair.label = q_a > q_b ? corpus::Label::kABetter : corpus::Label::kBBetter;
    return out;
  }

 private:
  double noise_sigma_;
  int num_buckets_;
  bool integer_scores_;
  std::mt19937_64 rng_;
  std::uint64_t draws_ = 0;
};

inline EnvSample env_sample(SyntheticPairEnv& env) { return env.sample(); }

// ---------------------------------------------------------------------------
// Rollouts

struct Trajectory {
  int context = 0;
  std::vector<int> tokens;           // alphabet indices, length T
  std::vector<double> logprobs_old;  // length T
  double terminal_reward = 0.0;
  int rank_reward = 0;
  std::vector<double> values;  // length T + 1, last entry is the terminal bootstrap 0

  std::size_t length() const { return tokens.size(); }

  // Per-step rewards: zero everywhere except the final step.
  std::vector<double> rewards() const {
    std::vector<double> r(tokens.size(), 0.0);
    if (!r.empty()) r.back() = terminal_reward;
    return r;
  }
};

inline int sample_index(std::span<const double> logits, std::mt19937_64& rng,
                        double& logprob_out) {
  const auto lp = log_softmax(logits);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int chosen = static_cast<int>(lp.size()) - 1;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    acc += std::exp(lp[i]);
    if (u < acc) {
      chosen = static_cast<int>(i);
      break;
    }
  }
  logprob_out = lp[chosen];
  return chosen;
}

// Scores an emitted (score_a, score_b) through render -> parse -> reward.
inline reward::ShapedReward score_emission(double score_a, double score_b,
                                           const corpus::PreferencePair& pair,
                                           const reward::RewardConfig& reward_config) {
  const auto parsed = verdict::parse_pairwise(verdict::render_scores(score_a, score_b));
  return reward::shaped_reward(parsed, pair, reward_config);
}

inline std::vector<Trajectory> rollout(const PolicySnapshot& policy, SyntheticPairEnv& env,
                                       int batch_size, int filler_len,
                                       const reward::RewardConfig& reward_config,
                                       std::mt19937_64& rng, const ValueTable& values = {}) {
  if (filler_len < 0) fail(ErrorKind::kConfig, "filler_len must be non-negative");
  const int steps = filler_len + 2;
  if (policy.num_steps() != steps) {
    fail(ErrorKind::kConfig, "policy has " + std::to_string(policy.num_steps()) +
                                 " steps, rollout needs " + std::to_string(steps));
  }
  if (policy.num_contexts() != env.num_buckets()) {
    fail(ErrorKind::kConfig, "policy context count does not match the environment");
  }

  std::vector<Trajectory> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const EnvSample sample = env.sample();
    Trajectory t;
    t.context = sample.context;
    t.tokens.resize(steps);
    t.logprobs_old.resize(steps);
    t.values.assign(steps + 1, 0.0);
    for (int s = 0; s < steps; ++s) {
      t.tokens[s] = sample_index(policy.row(sample.context, s), rng, t.logprobs_old[s]);
      t.values[s] = values.at(sample.context, s);
    }
    const double score_a = policy.alphabet()[t.tokens[steps - 2]];
    const double score_b = policy.alphabet()[t.tokens[steps - 1]];
    const auto shaped = score_emission(score_a, score_b, sample.pair, reward_config);
    t.terminal_reward = shaped.r;
    t.rank_reward = shaped.r_rank;
    batch.push_back(std::move(t));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// GAE

struct AdvantageEstimate {
  std::vector<double> deltas;
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma * V(t+1) - V(t);  A_t = sum_l (gamma * lambda)^l delta_{t+l}.
// `values` carries T + 1 entries; the last is the bootstrap value.
inline AdvantageEstimate gae(std::span<const double> rewards, std::span<const double> values,
                             double gamma, double lambda) {
  if (values.size() != rewards.size() + 1) {
    fail(ErrorKind::kConfig, "gae: values must have length T + 1");
  }
  const std::size_t n = rewards.size();
  AdvantageEstimate out;
  out.deltas.resize(n);
  out.advantages.resize(n);
  out.returns.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    out.deltas[t] = rewards[t] + gamma * values[t + 1] - values[t];
  }
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    running = out.deltas[t] + gamma * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
  }
  return out;
}

inline AdvantageEstimate gae(const Trajectory& t, double gamma, double lambda) {
  if (t.values.size() != t.tokens.size() + 1 || t.logprobs_old.size() != t.tokens.size()) {
    fail(ErrorKind::kConfig, "gae: trajectory field lengths disagree");
  }
  const auto r = t.rewards();
  return gae(r, t.values, gamma, lambda);
}

// ---------------------------------------------------------------------------
// PPO objective

// Per-token clipped surrogate min(ratio * A, clip(ratio, 1-eps, 1+eps) * A).
inline double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

struct PpoLoss {
  double loss = 0.0;       // -(surrogate - kl_coeff * kl); minimised
  double surrogate = 0.0;  // token mean of the clipped surrogate
  double kl = 0.0;         // token mean of KL(policy || reference) at visited cells
  double clip_fraction = 0.0;
  std::vector<double> gradient;  // d loss / d logits, same layout as PolicySnapshot::logits()
};

// Closed-form gradients of the token-averaged objective for softmax logits.
// `advantages[i]` aligns with `batch[i].tokens`.
inline PpoLoss ppo_loss(std::span<const Trajectory> batch,
                        std::span<const std::vector<double>> advantages,
                        const PolicySnapshot& policy, const PolicySnapshot& reference,
                        const RlConfig& config) {
  if (batch.empty()) fail(ErrorKind::kConfig, "ppo_loss: empty batch");
  if (advantages.size() != batch.size()) {
    fail(ErrorKind::kConfig, "ppo_loss: advantages do not align with the batch");
  }
  check_finite(policy.logits());
  check_finite(reference.logits());

  PpoLoss out;
  out.gradient.assign(policy.logits().size(), 0.0);
  std::size_t tokens = 0;
  std::size_t clipped = 0;
  const std::size_t k = policy.alphabet_size();

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& t = batch[i];
    if (advantages[i].size() != t.tokens.size() || t.logprobs_old.size() != t.tokens.size()) {
      fail(ErrorKind::kConfig, "ppo_loss: per-token lengths disagree");
    }
    for (std::size_t step = 0; step < t.tokens.size(); ++step) {
      const int s = static_cast<int>(step);
      const auto row = policy.row(t.context, s);
      const auto ref_row = reference.row(t.context, s);
      const auto lp = log_softmax(row);
      const auto lq = log_softmax(ref_row);
      const int tok = t.tokens[step];
      const double adv = advantages[i][step];
      const double ratio = std::exp(lp[tok] - t.logprobs_old[step]);

      const double unclipped_term = ratio * adv;
      const double term = clipped_surrogate(ratio, adv, config.clip_eps);
      out.surrogate += term;
      const bool gradient_flows = unclipped_term <= term;
      if (!gradient_flows) ++clipped;

      double kl = 0.0;
      for (std::size_t j = 0; j < k; ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
      out.kl += kl;

      double* g = out.gradient.data() + policy.offset(t.context, s);
      for (std::size_t j = 0; j < k; ++j) {
        const double pj = std::exp(lp[j]);
        double d_objective = 0.0;
        if (gradient_flows) {
          d_objective += adv * ratio * ((static_cast<int>(j) == tok ? 1.0 : 0.0) - pj);
        }
        d_objective -= config.kl_coeff * pj * ((lp[j] - lq[j]) - kl);
        g[j] -= d_objective;  // loss = -objective
      }
      ++tokens;
    }
  }

  const double inv = 1.0 / static_cast<double>(tokens);
  out.surrogate *= inv;
  out.kl = std::max(0.0, out.kl * inv);
  out.clip_fraction = static_cast<double>(clipped) * inv;
  for (double& g : out.gradient) g *= inv;
  out.loss = -(out.surrogate - config.kl_coeff * out.kl);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct UpdateRecord {
  int update = 0;
  double mean_reward = 0.0;
  double mean_rank_reward = 0.0;
  double kl = 0.0;
  double loss = 0.0;

  bool operator==(const UpdateRecord&) const = default;
};

inline void to_json(json& j, const UpdateRecord& u) {
  j = json{{"update", u.update},
           {"mean_reward", u.mean_reward},
           {"mean_rank_reward", u.mean_rank_reward},
           {"kl", u.kl},
           {"loss", u.loss}};
}

struct TrainingReport {
  std::vector<UpdateRecord> history;
  PolicySnapshot final_policy;
  PolicySnapshot reference_policy;
  ValueTable values;

  double final_mean_rank_reward() const {
    return history.empty() ? 0.0 : history.back().mean_rank_reward;
  }
  double final_kl() const { return history.empty() ? 0.0 : history.back().kl; }
};

// Rollout -> GAE -> PPO for `config.updates` iterations. The reference policy
// is the initial (uniform) snapshot. Deterministic given the environment seed
// and config.rng_seed. Each record describes the batch that was collected at
// the start of the update and the policy after the update.
inline TrainingReport train_toy(SyntheticPairEnv env, const RlConfig& config,
                                const reward::RewardConfig& reward_config) {
  config.validate();
  reward_config.validate();
  const int steps = config.filler_len + 2;

  TrainingReport report;
  report.reference_policy = PolicySnapshot(env.num_buckets(), steps);
  PolicySnapshot policy = report.reference_policy;
  ValueTable values(env.num_buckets(), steps);
  std::mt19937_64 rng(config.rng_seed);

  for (int u = 0; u < config.updates; ++u) {
    const auto batch = rollout(policy, env, config.batch_size, config.filler_len, reward_config,
                               rng, values);

    std::vector<std::vector<double>> advantages;
    std::vector<std::vector<double>> returns;
    advantages.reserve(batch.size());
    returns.reserve(batch.size());
    double reward_sum = 0.0;
    double rank_sum = 0.0;
    for (const auto& t : batch) {
      auto est = gae(t, config.gamma, config.lambda);
      advantages.push_back(std::move(est.advantages));
      returns.push_back(std::move(est.returns));
      reward_sum += t.terminal_reward;
      rank_sum += t.rank_reward;
    }

    if (config.normalize_advantages) {
      double sum = 0.0;
      double sum_sq = 0.0;
      std::size_t n = 0;
      for (const auto& a : advantages) {
        for (double x : a) {
          sum += x;
          sum_sq += x * x;
          ++n;
        }
      }
      const double mean = sum / static_cast<double>(n);
      const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
      const double scale = 1.0 / (std::sqrt(var) + 1e-8);
      for (auto& a : advantages) {
        for (double& x : a) x = (x - mean) * scale;
      }
    }

    double first_loss = 0.0;
    for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
      const auto result = ppo_loss(batch, advantages, policy, report.reference_policy, config);
      if (epoch == 0) first_loss = result.loss;
      auto& logits = policy.logits();
      for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] -= config.learning_rate * result.gradient[i];
      }
    }

    // Critic: move each visited cell toward its mean observed return.
    {
      std::vector<double> target_sum(static_cast<std::size_t>(env.num_buckets()) * steps, 0.0);
      std::vector<int> visits(target_sum.size(), 0);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        for (int s = 0; s < steps; ++s) {
          const std::size_t cell = static_cast<std::size_t>(batch[i].context) * steps + s;
          target_sum[cell] += returns[i][s];
          ++visits[cell];
        }
      }
      for (int c = 0; c < env.num_buckets(); ++c) {
        for (int s = 0; s < steps; ++s) {
          const std::size_t cell = static_cast<std::size_t>(c) * steps + s;
          if (visits[cell] == 0) continue;
          double& v = values.at(c, s);
          v += config.value_learning_rate * (target_sum[cell] / visits[cell] - v);
        }
      }
    }

    const double abs_logit = mean_abs_logit(policy);
    if (!std::isfinite(abs_logit) || abs_logit > config.max_mean_abs_logit) {
      fail(ErrorKind::kDivergence, "train_toy diverged at update " + std::to_string(u + 1) +
                                       ": mean |logit| = " + std::to_string(abs_logit));
    }

    UpdateRecord rec;
    rec.update = u + 1;
    rec.mean_reward = reward_sum / static_cast<double>(batch.size());
    rec.mean_rank_reward = rank_sum / static_cast<double>(batch.size());
    rec.kl = mean_kl(policy, report.reference_policy);
    rec.loss = first_loss;
    report.history.push_back(rec);
  }

  report.final_policy = std::move(policy);
  report.values = std::move(values);
  return report;
}

// Greedy (argmax) score pair per context for the final two steps.
inline std::vector<std::pair<double, double>> greedy_scores(const PolicySnapshot& policy) {
  std::vector<std::pair<double, double>> out;
  const int a_step = policy.num_steps() - 2;
  const int b_step = policy.num_steps() - 1;
  for (int c = 0; c < policy.num_contexts(); ++c) {
    const auto ra = policy.row(c, a_step);
    const auto rb = policy.row(c, b_step);
    const auto ia = std::max_element(ra.begin(), ra.end()) - ra.begin();
    const auto ib = std::max_element(rb.begin(), rb.end()) - rb.begin();
    out.emplace_back(policy.alphabet()[ia], policy.alphabet()[ib]);
  }
  return out;
}

}  // namespace remedy::rl
