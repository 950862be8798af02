#pragma once

// Verifiable shaped reward for pairwise score predictions.
//
//   r_rank = 1 iff the parsed scores order the pair like the human scores
//   rho_c(e) = e^2 / (2c)      if |e| <= c
//            = |e| - c / 2     otherwise
//   psi    = (rho_c(e_a) / c + rho_c(e_b) / c) / 2
//   r      = r_rank * (1 - beta * psi)     (factor clamped at 0 by default)

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "remedy/corpus.hpp"
#include "remedy/error.hpp"
#include "remedy/verdict.hpp"

namespace remedy::reward {

using json = nlohmann::json;

struct RewardConfig {
  double c = 5.0;
  double beta = 0.5;
  bool clamp_shaping = true;
  std::optional<double> genrm_coeff;

  void validate() const {
    if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorKind::kConfig, "reward: c must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) fail(ErrorKind::kConfig, "reward: beta must lie in [0,1]");
    if (genrm_coeff && !(*genrm_coeff >= 0.0)) {
      fail(ErrorKind::kConfig, "reward: genrm_coeff must be non-negative");
    }
  }
};

struct ShapedReward {
  int r_rank = 0;
  // Deviation terms are only meaningful when the verdict carried both scores.
  bool scored = false;
  double e_a = 0.0;
  double e_b = 0.0;
  double rho_a = 0.0;
  double rho_b = 0.0;
  double psi = 0.0;
  double r = 0.0;
};

inline int sign(double x) { return (x > 0.0) - (x < 0.0); }

inline int ranking_reward(const verdict::ParsedVerdict& v, const corpus::PreferencePair& pair) {
  if (v.status != verdict::Status::kOkPairwise || !v.score_a || !v.score_b) return 0;
  const double s_diff = *v.score_a - *v.score_b;
  if (s_diff == 0.0) return 0;
  return sign(s_diff) == sign(pair.g_a - pair.g_b) ? 1 : 0;
}

inline double huber_penalty(double e, double c) {
  if (!(c > 0.0)) fail(ErrorKind::kConfig, "huber_penalty: c must be positive");
  const double abs_e = std::abs(e);
  return abs_e <= c ? 0.5 * e * e / c : abs_e - 0.5 * c;
}

inline double calibration_term(double e_a, double e_b, double c) {
  return 0.5 * (huber_penalty(e_a, c) / c + huber_penalty(e_b, c) / c);
}

inline ShapedReward shaped_reward(const verdict::ParsedVerdict& v,
                                  const corpus::PreferencePair& pair, const RewardConfig& config) {
  config.validate();
  ShapedReward out;
  out.r_rank = ranking_reward(v, pair);
  if (v.status == verdict::Status::kOkPairwise && v.score_a && v.score_b) {
    out.scored = true;
    out.e_a = *v.score_a - pair.g_a;
    out.e_b = *v.score_b - pair.g_b;
    out.rho_a = huber_penalty(out.e_a, config.c);
    out.rho_b = huber_penalty(out.e_b, config.c);
    out.psi = 0.5 * (out.rho_a / config.c + out.rho_b / config.c);
  }
  if (out.r_rank == 0) {
    out.r = 0.0;
    return out;
  }
  const double factor = 1.0 - config.beta * out.psi;
  out.r = config.clamp_shaping ? std::max(0.0, factor) : factor;
  return out;
}

// Rationale-quality penalty: r - coeff * (1 - judge_score / 100). A no-op when
// the coefficient is unset.
inline double genrm_adjust(const ShapedReward& base, double judge_score,
                           const RewardConfig& config) {
  if (!(judge_score >= 0.0 && judge_score <= 100.0)) {
    fail(ErrorKind::kConfig, "genrm_adjust: judge score must lie in [0,100]");
  }
  if (!config.genrm_coeff) return base.r;
  return base.r - *config.genrm_coeff * (1.0 - judge_score / 100.0);
}

// Any scorer mapping a rationale to [0,100].
using RationaleJudge = std::function<double(std::string_view rationale)>;

inline double genrm_adjust(const ShapedReward& base, const verdict::ParsedVerdict& v,
                           const RationaleJudge& judge, const RewardConfig& config) {
  if (!config.genrm_coeff) return base.r;
  return genrm_adjust(base, judge(v.rationale), config);
}

// rewards.jsonl row.
inline json to_json_row(std::string_view pair_id, const ShapedReward& s) {
  json j{{"pair_id", pair_id}, {"r_rank", s.r_rank}};
  if (s.scored) {
    j["e_a"] = s.e_a;
    j["e_b"] = s.e_b;
    j["rho_a"] = s.rho_a;
    j["rho_b"] = s.rho_b;
    j["psi"] = s.psi;
  } else {
    j["e_a"] = nullptr;
    j["e_b"] = nullptr;
    j["rho_a"] = nullptr;
    j["rho_b"] = nullptr;
    j["psi"] = nullptr;
  }
  j["r"] = s.r;
  return j;
}

}  // namespace remedy::reward
