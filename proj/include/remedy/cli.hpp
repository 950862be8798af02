#pragma once

// Command-line front end. Every subcommand writes its outputs under --out-dir
// plus a manifest next to the primary output.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "remedy/agent.hpp"
#include "remedy/challenge.hpp"
#include "remedy/config.hpp"
#include "remedy/corpus.hpp"
#include "remedy/error.hpp"
#include "remedy/gateway.hpp"
#include "remedy/io.hpp"
#include "remedy/log.hpp"
#include "remedy/manifest.hpp"
#include "remedy/metaeval.hpp"
#include "remedy/reward.hpp"
#include "remedy/rlcore.hpp"
#include "remedy/verdict.hpp"

namespace remedy::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitUsage = 2;

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kInput: return 3;
    case ErrorKind::kParse: return 4;
    case ErrorKind::kAuth: return 5;
    case ErrorKind::kTransport: return 6;
    case ErrorKind::kDivergence: return 7;
  }
  return kExitUnexpected;
}

// Column key shared by every score grid derived from segments: segments with
// the same language pair and source text land in the same column.
inline std::string segment_key(const corpus::Segment& s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t h = metaeval::detail::fnv1a(s.src);
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) hex[i] = kHex[h & 0xF];
  return s.lang_pair + ":" + hex;
}

inline std::string system_name(const corpus::Segment& s) {
  return s.system.empty() ? "default" : s.system;
}

// System x segment grid from (segment, score) entries, in first-appearance order.
inline metaeval::ScoreMatrix build_grid(
    const std::vector<std::pair<const corpus::Segment*, std::optional<double>>>& entries,
    const std::string& label) {
  std::vector<std::string> systems;
  std::vector<std::string> keys;
  std::map<std::string, std::size_t> sys_index;
  std::map<std::string, std::size_t> key_index;
  for (const auto& [seg, score] : entries) {
    const auto name = system_name(*seg);
    if (sys_index.emplace(name, systems.size()).second) systems.push_back(name);
    const auto key = segment_key(*seg);
    if (key_index.emplace(key, keys.size()).second) keys.push_back(key);
  }
  metaeval::ScoreMatrix m(systems, keys, label);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [seg, score] : entries) {
    const std::size_t i = sys_index.at(system_name(*seg));
    const std::size_t k = key_index.at(segment_key(*seg));
    if (!seen.emplace(i, k).second) {
      fail(ErrorKind::kInput, "two segments share system '" + systems[i] + "' and source key " +
                                  keys[k] + " (segment " + seg->id + ")");
    }
    m.values[i][k] = score;
  }
  return m;
}

namespace detail {

inline corpus::InputFormat format_from_string(const std::string& s) {
  if (s == "jsonl") return corpus::InputFormat::kJsonl;
  if (s == "tsv") return corpus::InputFormat::kTsv;
  fail(ErrorKind::kConfig, "unknown input format '" + s + "' (expected jsonl or tsv)");
}

inline config::KeyValues load_config(manifest::Recorder& rec, const std::optional<std::string>& path) {
  if (!path) return {};
  rec.input(*path);
  return config::load(*path);
}

inline fs::path config_dir(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
void override_with(T& target, const std::optional<T>& flag) {
  if (flag) target = *flag;
}

inline std::vector<std::string> strip_out_dir(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out-dir") {
      ++i;
      continue;
    }
    if (args[i].rfind("--out-dir=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

inline void record_stub(manifest::Recorder& rec, const gateway::EndpointConfig& c) {
  if (c.stub_replies) rec.input(c.stub_replies->string());
}

inline challenge::AuxPool load_pool(manifest::Recorder& rec, const std::optional<std::string>& path) {
  challenge::AuxPool pool;
  if (!path) return pool;
  for (const auto& row : io::read_jsonl(rec.input(*path))) {
    if (!row.contains("text") || !row["text"].is_string()) {
      fail(ErrorKind::kInput, *path + ": pool rows need a string 'text' field");
    }
    const auto text = row["text"].get<std::string>();
    if (row.contains("segment_id")) {
      pool.by_segment[row["segment_id"].get<std::string>()] = text;
    } else {
      pool.texts.push_back(text);
    }
  }
  return pool;
}

// First positional token that is not a known top-level subcommand.
inline std::optional<std::string> unknown_subcommand(const CLI::App& app,
                                                     const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--seed" || a == "--log-level" || a == "--out-dir") {
      ++i;
      continue;
    }
    if (a.rfind("-", 0) == 0) continue;
    for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
      if (sub->check_name(a)) return std::nullopt;
    }
    return a;
  }
  return std::nullopt;
}

}  // namespace detail

struct Globals {
  std::uint64_t seed = 1;
  std::string log_level = "warn";
  std::string out_dir = ".";
};

// ---------------------------------------------------------------------------
// Subcommand bodies. Each receives the parsed flags and a recorder.

struct PairsBuildArgs {
  std::string in;
  std::string out;
  std::string format = "jsonl";
  std::optional<std::string> human_tsv;
};

inline void run_pairs_build(const PairsBuildArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  rec.set_config({{"format", a.format}});
  const auto set = corpus::load_segments(rec.input(a.in), detail::format_from_string(a.format));
  for (const auto& d : set.rejected) {
    log::warn(a.in + ":" + std::to_string(d.line) + ": rejected: " + d.reason);
  }
  const auto pairs = corpus::build_preference_pairs(set.segments, g.seed);
  for (const auto& d : pairs.diagnostics) log::warn(d);
  rec.output(a.out, io::to_jsonl(pairs.pairs));
  if (a.human_tsv) {
    std::vector<std::pair<const corpus::Segment*, std::optional<double>>> entries;
    for (const auto& s : set.segments) entries.emplace_back(&s, s.human_score);
    rec.output(*a.human_tsv, metaeval::to_tsv(build_grid(entries, "human")));
  }
  std::cout << "pairs: " << pairs.pairs.size() << " from " << set.segments.size()
            << " segments (" << set.rejected.size() << " rows rejected)\n";
}

struct RewardArgs {
  std::string pairs;
  std::string verdicts;
  std::string out;
  std::optional<std::string> config;
  std::optional<double> c;
  std::optional<double> beta;
  std::optional<bool> clamp;
  std::optional<double> genrm_coeff;
  std::optional<std::string> judge_scores;
};

inline void run_reward_score(const RewardArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  const auto kv = detail::load_config(rec, a.config);
  config::require_known(kv, std::vector<std::string>{"c", "beta", "clamp_shaping", "genrm_coeff"},
                        "reward");
  reward::RewardConfig rc;
  config::get(kv, "c", rc.c);
  config::get(kv, "beta", rc.beta);
  config::get(kv, "clamp_shaping", rc.clamp_shaping);
  config::get(kv, "genrm_coeff", rc.genrm_coeff);
  detail::override_with(rc.c, a.c);
  detail::override_with(rc.beta, a.beta);
  detail::override_with(rc.clamp_shaping, a.clamp);
  if (a.genrm_coeff) rc.genrm_coeff = a.genrm_coeff;
  rc.validate();
  if (rc.genrm_coeff && !a.judge_scores) {
    fail(ErrorKind::kConfig, "reward: genrm_coeff requires --judge-scores");
  }
  json cfg{{"c", rc.c}, {"beta", rc.beta}, {"clamp_shaping", rc.clamp_shaping}};
  cfg["genrm_coeff"] = rc.genrm_coeff ? json(*rc.genrm_coeff) : json(nullptr);
  rec.set_config(cfg);

  const auto pairs = corpus::read_pairs(rec.input(a.pairs));
  std::unordered_map<std::string, verdict::ParsedVerdict> verdicts;
  for (const auto& row : io::read_jsonl(rec.input(a.verdicts))) {
    const auto id = row.value("item_id", "");
    if (!verdicts.emplace(id, verdict::from_json_row(row)).second) {
      fail(ErrorKind::kInput, a.verdicts + ": duplicate verdict for '" + id + "'");
    }
  }
  std::unordered_map<std::string, double> judge;
  if (a.judge_scores) {
    for (const auto& row : io::read_jsonl(rec.input(*a.judge_scores))) {
      if (row.contains("faithfulness_score") && row["faithfulness_score"].is_number()) {
        judge[row.at("id").get<std::string>()] = row["faithfulness_score"].get<double>();
      }
    }
  }

  std::string out;
  double sum_r = 0.0;
  double sum_rank = 0.0;
  for (const auto& p : pairs) {
    const auto it = verdicts.find(p.id);
    if (it == verdicts.end()) fail(ErrorKind::kInput, "no verdict for pair '" + p.id + "'");
    const auto s = reward::shaped_reward(it->second, p, rc);
    json row = reward::to_json_row(p.id, s);
    if (rc.genrm_coeff) {
      const auto j = judge.find(p.id);
      if (j == judge.end()) fail(ErrorKind::kInput, "no judge score for pair '" + p.id + "'");
      row["r_genrm"] = reward::genrm_adjust(s, j->second, rc);
    }
    out += io::dump_line(row) + "\n";
    sum_r += s.r;
    sum_rank += s.r_rank;
  }
  rec.output(a.out, out);
  const double n = std::max<double>(1.0, static_cast<double>(pairs.size()));
  std::cout << "rewards: " << pairs.size() << " pairs, mean r = " << sum_r / n
            << ", mean r_rank = " << sum_rank / n << "\n";
}

struct TrainArgs {
  std::string out;
  std::optional<std::string> policy_out;
  std::optional<std::string> config;
  std::optional<int> updates;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> noise_sigma;
  std::optional<int> buckets;
  std::optional<double> c;
  std::optional<double> beta;
};

inline void run_train_toy(const TrainArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  const auto kv = detail::load_config(rec, a.config);
  config::require_known(
      kv,
      std::vector<std::string>{"gamma", "lambda", "clip_eps", "kl_coeff", "learning_rate",
                               "updates", "batch_size", "ppo_epochs", "value_learning_rate",
                               "normalize_advantages", "filler_len", "max_mean_abs_logit",
                               "noise_sigma", "buckets", "c", "beta"},
      "train-toy");
  rl::RlConfig rc;
  reward::RewardConfig wc;
  double noise_sigma = 0.0;
  int buckets = 10;
  config::get(kv, "gamma", rc.gamma);
  config::get(kv, "lambda", rc.lambda);
  config::get(kv, "clip_eps", rc.clip_eps);
  config::get(kv, "kl_coeff", rc.kl_coeff);
  config::get(kv, "learning_rate", rc.learning_rate);
  config::get(kv, "updates", rc.updates);
  config::get(kv, "batch_size", rc.batch_size);
  config::get(kv, "ppo_epochs", rc.ppo_epochs);
  config::get(kv, "value_learning_rate", rc.value_learning_rate);
  config::get(kv, "normalize_advantages", rc.normalize_advantages);
  config::get(kv, "filler_len", rc.filler_len);
  config::get(kv, "max_mean_abs_logit", rc.max_mean_abs_logit);
  config::get(kv, "noise_sigma", noise_sigma);
  config::get(kv, "buckets", buckets);
  config::get(kv, "c", wc.c);
  config::get(kv, "beta", wc.beta);
  detail::override_with(rc.updates, a.updates);
  detail::override_with(rc.batch_size, a.batch_size);
  detail::override_with(rc.learning_rate, a.learning_rate);
  detail::override_with(noise_sigma, a.noise_sigma);
  detail::override_with(buckets, a.buckets);
  detail::override_with(wc.c, a.c);
  detail::override_with(wc.beta, a.beta);
  rc.rng_seed = g.seed;
  rc.validate();
  wc.validate();
  rec.set_config({{"gamma", rc.gamma},
                  {"lambda", rc.lambda},
                  {"clip_eps", rc.clip_eps},
                  {"kl_coeff", rc.kl_coeff},
                  {"learning_rate", rc.learning_rate},
                  {"updates", rc.updates},
                  {"batch_size", rc.batch_size},
                  {"ppo_epochs", rc.ppo_epochs},
                  {"value_learning_rate", rc.value_learning_rate},
                  {"normalize_advantages", rc.normalize_advantages},
                  {"filler_len", rc.filler_len},
                  {"max_mean_abs_logit", rc.max_mean_abs_logit},
                  {"noise_sigma", noise_sigma},
                  {"buckets", buckets},
                  {"c", wc.c},
                  {"beta", wc.beta}});

  rl::SyntheticPairEnv env(noise_sigma, buckets, g.seed);
  const auto report = rl::train_toy(env, rc, wc);
  rec.output(a.out, io::to_jsonl(report.history));
  if (a.policy_out) {
    json greedy = json::array();
    for (const auto& [sa, sb] : rl::greedy_scores(report.final_policy)) {
      greedy.push_back({sa, sb});
    }
    json policy{{"alphabet", report.final_policy.alphabet()},
                {"contexts", report.final_policy.num_contexts()},
                {"steps", report.final_policy.num_steps()},
                {"logits", report.final_policy.logits()},
                {"greedy_scores", greedy}};
    rec.output(*a.policy_out, policy.dump(2) + "\n");
  }
  std::cout << "train-toy: " << rc.updates << " updates, final mean r_rank = "
            << report.final_mean_rank_reward() << ", final KL = " << report.final_kl() << "\n";
}

struct MetaevalArgs {
  std::string human;
  std::vector<std::string> metrics;
  std::string out;
  std::optional<std::string> config;
  std::optional<int> spa_resamples;
  std::optional<int> perm_resamples;
  std::optional<double> alpha;
};

inline void run_metaeval(const MetaevalArgs& a, const Globals& g, manifest::Recorder& rec) {
  const auto kv = detail::load_config(rec, a.config);
  config::require_known(kv, std::vector<std::string>{"spa_resamples", "perm_resamples", "alpha"},
                        "metaeval");
  metaeval::MetaEvalOptions o;
  config::get(kv, "spa_resamples", o.spa_resamples);
  config::get(kv, "perm_resamples", o.perm_resamples);
  config::get(kv, "alpha", o.alpha);
  detail::override_with(o.spa_resamples, a.spa_resamples);
  detail::override_with(o.perm_resamples, a.perm_resamples);
  detail::override_with(o.alpha, a.alpha);
  o.rng_seed = g.seed;
  rec.set_seed(g.seed);
  rec.set_config({{"spa_resamples", o.spa_resamples},
                  {"perm_resamples", o.perm_resamples},
                  {"alpha", o.alpha}});
  const auto human = metaeval::load_scores_tsv(rec.input(a.human));
  std::vector<metaeval::ScoreMatrix> metrics;
  for (const auto& m : a.metrics) metrics.push_back(metaeval::load_scores_tsv(rec.input(m)));
  const auto report = metaeval::run_metaeval(human, metrics, o);
  rec.output(a.out, metaeval::to_json(report, o).dump(2) + "\n");
  for (const auto& m : report.metrics) {
    std::cout << m.name << ": system_acc = " << m.system_acc << ", seg_acc_eq = " << m.seg_acc_eq
              << " (eps* = " << m.epsilon_star << "), spa = " << m.spa << "\n";
  }
}

struct ChallengeGenArgs {
  std::string in;
  std::string cats;
  std::string out;
  std::string format = "jsonl";
  std::optional<std::string> wrong_lang_pool;
  std::optional<std::string> mix_lang_pool;
  std::optional<std::string> unrelated_pool;
};

inline void run_challenge_gen(const ChallengeGenArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  std::vector<challenge::Category> cats;
  json cat_names = json::array();
  for (const auto& name : detail::split_csv(a.cats)) {
    cats.push_back(challenge::category_from_string(name));
    cat_names.push_back(name);
  }
  if (cats.empty()) fail(ErrorKind::kConfig, "challenge gen: --cats is empty");
  rec.set_config({{"categories", cat_names}, {"format", a.format}});
  const auto set = corpus::load_segments(rec.input(a.in), detail::format_from_string(a.format));
  challenge::AuxPools pools;
  pools.wrong_lang = detail::load_pool(rec, a.wrong_lang_pool);
  pools.mix_lang = detail::load_pool(rec, a.mix_lang_pool);
  pools.unrelated = detail::load_pool(rec, a.unrelated_pool);
  const auto items = challenge::generate(set.segments, cats, pools, g.seed);
  for (const auto& d : items.diagnostics) log::warn(d);
  rec.output(a.out, io::to_jsonl(items.items));
  std::cout << "challenge: " << items.items.size() << " items from " << set.segments.size()
            << " segments\n";
}

struct ChallengeReportArgs {
  std::string items;
  std::string scores;
  std::string out;
  std::optional<std::string> config;
};

inline void run_challenge_report(const ChallengeReportArgs& a, const Globals& g,
                                 manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  const auto kv = detail::load_config(rec, a.config);
  config::require_known(kv,
                        std::vector<std::string>{"near_zero_max_mean", "moderate_min_mean",
                                                 "moderate_max_mean", "low_score_threshold"},
                        "challenge report");
  challenge::Bands bands;
  config::get(kv, "near_zero_max_mean", bands.near_zero_max_mean);
  config::get(kv, "moderate_min_mean", bands.moderate_min_mean);
  config::get(kv, "moderate_max_mean", bands.moderate_max_mean);
  config::get(kv, "low_score_threshold", bands.low_score_threshold);
  rec.set_config({{"near_zero_max_mean", bands.near_zero_max_mean},
                  {"moderate_min_mean", bands.moderate_min_mean},
                  {"moderate_max_mean", bands.moderate_max_mean},
                  {"low_score_threshold", bands.low_score_threshold}});

  std::vector<challenge::ChallengeItem> items;
  for (const auto& row : io::read_jsonl(rec.input(a.items))) {
    items.push_back(row.get<challenge::ChallengeItem>());
  }
  // Accepts {"id"|"item_id", "score"|"aggregate"} rows; null scores are skipped.
  std::unordered_map<std::string, double> scores;
  for (const auto& row : io::read_jsonl(rec.input(a.scores))) {
    const std::string id = row.contains("id") ? row["id"].get<std::string>()
                                              : row.value("item_id", "");
    const json& v = row.contains("score") ? row["score"] : row.value("aggregate", json());
    if (v.is_number()) scores[id] = v.get<double>();
  }
  const auto summary = challenge::robustness_report(items, scores, bands);
  rec.output(a.out, challenge::to_json(summary).dump(2) + "\n");
  for (const auto& s : summary) {
    std::cout << challenge::to_string(s.category) << " (" << challenge::to_string(s.expectation)
              << "): mean = " << s.mean << ", median = " << s.median
              << ", below = " << s.fraction_below << " -> " << (s.pass ? "pass" : "FAIL") << "\n";
  }
}

struct EvalArgs {
  std::string endpoint;
  std::optional<std::string> in;
  std::optional<std::string> pairs;
  std::string out;
  std::string format = "jsonl";
  int tts = 1;
  bool include_ref = false;
  std::optional<std::string> scores_tsv;
};

inline void run_eval(const EvalArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  const auto ep = gateway::endpoint_from_kv(detail::load_config(rec, a.endpoint),
                                            detail::config_dir(a.endpoint));
  detail::record_stub(rec, ep);
  if (a.tts < 1) fail(ErrorKind::kConfig, "eval run: --tts must be >= 1");
  rec.set_config({{"endpoint", gateway::to_json(ep)},
                  {"tts", a.tts},
                  {"include_ref", a.include_ref},
                  {"mode", a.pairs ? "pairwise" : "single"}});
  const gateway::ChatClient client(ep);

  if (a.pairs) {
    const auto pairs = corpus::read_pairs(rec.input(*a.pairs));
    const auto verdicts = gateway::map_bounded(pairs.size(), ep.max_concurrency, [&](std::size_t i) {
      return gateway::evaluate_pair(client, pairs[i], a.include_ref);
    });
    std::string out;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      out += io::dump_line(verdict::to_json_row(pairs[i].id, verdicts[i])) + "\n";
      failures += !verdicts[i].ok();
    }
    rec.output(a.out, out);
    std::cout << "eval: " << pairs.size() << " pairs, " << failures << " parse failures\n";
    return;
  }

  const auto set = corpus::load_segments(rec.input(*a.in), detail::format_from_string(a.format));
  for (const auto& d : set.rejected) {
    log::warn(*a.in + ":" + std::to_string(d.line) + ": rejected: " + d.reason);
  }
  const auto evals =
      gateway::map_bounded(set.segments.size(), ep.max_concurrency, [&](std::size_t i) {
        return gateway::evaluate_segment(client, set.segments[i], a.include_ref, a.tts);
      });
  std::string out;
  std::size_t missing = 0;
  for (const auto& e : evals) {
    out += io::dump_line(gateway::to_json_row(e)) + "\n";
    missing += !e.aggregate;
  }
  rec.output(a.out, out);
  if (a.scores_tsv) {
    std::vector<std::pair<const corpus::Segment*, std::optional<double>>> entries;
    for (std::size_t i = 0; i < evals.size(); ++i) {
      entries.emplace_back(&set.segments[i], evals[i].aggregate);
    }
    rec.output(*a.scores_tsv, metaeval::to_tsv(build_grid(entries, ep.model_name)));
  }
  std::cout << "eval: " << evals.size() << " segments, " << missing << " without a score\n";
}

struct JudgeArgs {
  std::string endpoint;
  std::string in;
  std::string out;
  std::size_t per_pair = 300;
  std::optional<std::string> summary;
};

inline void run_judge(const JudgeArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  const auto ep = gateway::endpoint_from_kv(detail::load_config(rec, a.endpoint),
                                            detail::config_dir(a.endpoint));
  detail::record_stub(rec, ep);
  if (a.per_pair < 1) fail(ErrorKind::kConfig, "judge: --per-pair must be >= 1");
  rec.set_config({{"endpoint", gateway::to_json(ep)}, {"per_pair", a.per_pair}});
  std::vector<gateway::ExplanationItem> items;
  for (const auto& row : io::read_jsonl(rec.input(a.in))) {
    items.push_back(gateway::explanation_from_json(row));
  }
  const gateway::ChatClient client(ep);
  const auto batch = gateway::judge_faithfulness_batch(client, items, a.per_pair, g.seed);
  std::string out;
  for (const auto& row : batch.rows) out += io::dump_line(gateway::to_json_row(row)) + "\n";
  rec.output(a.out, out);
  const json means = gateway::to_json(batch.means);
  if (a.summary) rec.output(*a.summary, means.dump(2) + "\n");
  for (const auto& m : batch.means) {
    std::cout << m.lang_pair << ": " << m.judged << "/" << m.sampled << " judged, mean = "
              << (m.mean ? std::to_string(*m.mean) : "n/a") << "\n";
  }
}

struct AgentArgs {
  std::string cfg;
  std::string in;
  std::string out;
  std::string format = "jsonl";
  bool no_feedback = false;
  std::optional<int> max_iterations;
  std::optional<std::string> selection;
};

inline void run_agent(const AgentArgs& a, const Globals& g, manifest::Recorder& rec) {
  rec.set_seed(g.seed);
  auto ac = agent::agent_config_from_kv(detail::load_config(rec, a.cfg), detail::config_dir(a.cfg));
  detail::override_with(ac.max_iterations, a.max_iterations);
  if (a.selection) ac.selection = agent::selection_from_string(*a.selection);
  ac.validate();
  detail::record_stub(rec, ac.feedback_endpoint);
  if (ac.refinement_endpoint.stub_replies != ac.feedback_endpoint.stub_replies) {
    detail::record_stub(rec, ac.refinement_endpoint);
  }
  json cfg = agent::to_json(ac);
  cfg["feedback_in_prompt"] = !a.no_feedback;
  rec.set_config(cfg);

  const auto set = corpus::load_segments(rec.input(a.in), detail::format_from_string(a.format));
  const gateway::ChatClient evaluator(ac.feedback_endpoint);
  const gateway::ChatClient reviser(ac.refinement_endpoint);
  const auto transcripts = agent::run_batch(ac, evaluator, reviser, set.segments, !a.no_feedback);
  std::string out;
  std::size_t errors = 0;
  for (const auto& t : transcripts) {
    out += io::dump_line(agent::to_json(t)) + "\n";
    errors += t.error.has_value();
  }
  rec.output(a.out, out);
  std::cout << "agent: " << transcripts.size() << " transcripts, " << errors << " with errors\n";
}

inline int dispatch(const std::vector<std::string>& args);

// Re-executes a manifest's command line into another output directory after
// checking that the inputs are unchanged, then compares output digests.
inline void run_rerun(const std::string& manifest_path, const Globals& g) {
  const json m = json::parse(io::read_file(manifest_path), nullptr, false);
  if (m.is_discarded() || m.value("format", "") != manifest::kFormat) {
    fail(ErrorKind::kInput, manifest_path + " is not a run manifest");
  }
  for (const auto& in : m.at("inputs")) {
    const auto path = in.at("path").get<std::string>();
    if (manifest::file_sha256(path) != in.at("sha256").get<std::string>()) {
      fail(ErrorKind::kInput, "input " + path + " changed since the recorded run");
    }
  }
  std::vector<std::string> args{"--out-dir", g.out_dir};
  for (const auto& a : m.at("argv")) args.push_back(a.get<std::string>());
  const int code = dispatch(args);
  if (code != kExitOk) fail(ErrorKind::kInput, "rerun exited with code " + std::to_string(code));
  std::size_t mismatches = 0;
  for (const auto& out : m.at("outputs")) {
    const auto path = out.at("path").get<std::string>();
    const fs::path p = fs::path(path).is_absolute() ? fs::path(path) : fs::path(g.out_dir) / path;
    const bool same = manifest::file_sha256(p) == out.at("sha256").get<std::string>();
    std::cout << (same ? "identical " : "DIFFERS   ") << path << "\n";
    mismatches += !same;
  }
  if (mismatches > 0) {
    fail(ErrorKind::kInput, std::to_string(mismatches) + " output(s) differ from the manifest");
  }
}

// ---------------------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Reasoning-based translation evaluation toolkit", "remedy"};
  app.set_version_flag("--version", REMEDY_VERSION);
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Global RNG seed")->capture_default_str();
  app.add_option("--log-level", g.log_level, "debug, info, warn, error or off")
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths")
      ->capture_default_str();

  std::string subcommand;
  std::string primary_output;

  auto group = [&](const std::string& name, const std::string& description) {
    auto* sub = app.add_subcommand(name, description);
    sub->require_subcommand(1);
    sub->fallthrough();
    return sub;
  };
  auto leaf = [&](CLI::App* sub, std::string name) {
    sub->fallthrough();
    sub->callback([&subcommand, name] { subcommand = name; });
    return sub;
  };

  // pairs build
  PairsBuildArgs pairs_args;
  auto* pairs = group("pairs", "Preference pair construction");
  auto* pairs_build = leaf(pairs->add_subcommand("build", "Build preference pairs from segments"),
                           "pairs build");
  pairs_build->add_option("--in", pairs_args.in, "Segments file")->required();
  pairs_build->add_option("--out", pairs_args.out, "Output pairs.jsonl")->required();
  pairs_build->add_option("--format", pairs_args.format, "jsonl or tsv")->capture_default_str();
  pairs_build->add_option("--human-tsv", pairs_args.human_tsv,
                          "Also write the human system x segment score grid");

  // reward score
  RewardArgs reward_args;
  auto* reward = group("reward", "Verifiable reward computation");
  auto* reward_score =
      leaf(reward->add_subcommand("score", "Score verdicts against pairs"), "reward score");
  reward_score->add_option("--pairs", reward_args.pairs, "pairs.jsonl")->required();
  reward_score->add_option("--verdicts", reward_args.verdicts, "verdicts.jsonl")->required();
  reward_score->add_option("--out", reward_args.out, "Output rewards.jsonl")->required();
  reward_score->add_option("--config", reward_args.config, "Reward config file");
  reward_score->add_option("--c", reward_args.c, "Huber threshold");
  reward_score->add_option("--beta", reward_args.beta, "Shaping weight");
  reward_score->add_option("--clamp", reward_args.clamp, "Clamp the shaping factor at 0");
  reward_score->add_option("--genrm-coeff", reward_args.genrm_coeff, "Rationale penalty weight");
  reward_score->add_option("--judge-scores", reward_args.judge_scores,
                           "Faithfulness rows keyed by pair id");

  // train-toy
  TrainArgs train_args;
  auto* train = leaf(app.add_subcommand("train-toy", "Train the tabular toy policy"), "train-toy");
  train->add_option("--out,--report", train_args.out, "Output per-update history (JSONL)")->required();
  train->add_option("--policy-out", train_args.policy_out, "Write the final policy as JSON");
  train->add_option("--config", train_args.config, "Training config file");
  train->add_option("--updates", train_args.updates);
  train->add_option("--batch-size", train_args.batch_size);
  train->add_option("--lr", train_args.learning_rate, "Policy learning rate");
  train->add_option("--noise-sigma,--noise", train_args.noise_sigma);
  train->add_option("--c", train_args.c, "Huber threshold");
  train->add_option("--beta", train_args.beta, "Shaping weight");
  train->add_option("--buckets", train_args.buckets);

  // metaeval run
  MetaevalArgs meta_args;
  auto* meta = group("metaeval", "Metric meta-evaluation");
  auto* meta_run = leaf(meta->add_subcommand("run", "Score metric grids against human grids"),
                        "metaeval run");
  meta_run->add_option("--human", meta_args.human, "Human score TSV")->required();
  meta_run->add_option("--metric", meta_args.metrics, "Metric score TSV (repeatable)")->required();
  meta_run->add_option("--out,--report", meta_args.out, "Output report.json")->required();
  meta_run->add_option("--config", meta_args.config, "Meta-evaluation config file");
  meta_run->add_option("--spa-resamples", meta_args.spa_resamples);
  meta_run->add_option("--perm-resamples", meta_args.perm_resamples);
  meta_run->add_option("--alpha", meta_args.alpha);

  // challenge gen | report
  ChallengeGenArgs gen_args;
  ChallengeReportArgs rep_args;
  auto* chal = group("challenge", "Challenge-set robustness");
  auto* gen = leaf(chal->add_subcommand("gen", "Generate challenge items"), "challenge gen");
  gen->add_option("--in", gen_args.in, "Segments file")->required();
  gen->add_option("--cats", gen_args.cats, "Comma-separated categories")->required();
  gen->add_option("--out", gen_args.out, "Output challenge.jsonl")->required();
  gen->add_option("--format", gen_args.format, "jsonl or tsv")->capture_default_str();
  gen->add_option("--wrong-lang-pool", gen_args.wrong_lang_pool, "JSONL pool of {text[, segment_id]}");
  gen->add_option("--mix-lang-pool", gen_args.mix_lang_pool, "JSONL pool of {text[, segment_id]}");
  gen->add_option("--unrelated-pool", gen_args.unrelated_pool, "JSONL pool of {text}");
  auto* rep = leaf(chal->add_subcommand("report", "Summarize metric scores per category"),
                   "challenge report");
  rep->add_option("--items", rep_args.items, "challenge.jsonl")->required();
  rep->add_option("--scores", rep_args.scores, "Scores keyed by item id")->required();
  rep->add_option("--out", rep_args.out, "Output report.json")->required();
  rep->add_option("--config", rep_args.config, "Band config file");

  // eval run
  EvalArgs eval_args;
  auto* eval = group("eval", "Model-based evaluation");
  auto* eval_run = leaf(eval->add_subcommand("run", "Evaluate segments or pairs"), "eval run");
  eval_run->add_option("--endpoint", eval_args.endpoint, "Endpoint config file")->required();
  auto* eval_in = eval_run->add_option("--in", eval_args.in, "Segments file (single mode)");
  auto* eval_pairs = eval_run->add_option("--pairs", eval_args.pairs, "pairs.jsonl (pairwise mode)");
  eval_in->excludes(eval_pairs);
  eval_run->add_option("--out", eval_args.out, "Output verdicts.jsonl")->required();
  eval_run->add_option("--format", eval_args.format, "jsonl or tsv")->capture_default_str();
  auto* eval_tts = eval_run->add_option("--tts", eval_args.tts, "Passes per segment")
                       ->capture_default_str();
  eval_tts->excludes(eval_pairs);
  eval_run->add_flag("--include-ref", eval_args.include_ref, "Show the reference to the model");
  eval_run->add_option("--scores-tsv", eval_args.scores_tsv, "Also write a system x segment grid")
      ->excludes(eval_pairs);

  // judge faithfulness
  JudgeArgs judge_args;
  auto* judge = group("judge", "Rationale judging");
  auto* faith = leaf(judge->add_subcommand("faithfulness", "Judge explanation faithfulness"),
                     "judge faithfulness");
  faith->add_option("--endpoint", judge_args.endpoint, "Endpoint config file")->required();
  faith->add_option("--in", judge_args.in, "explanations.jsonl")->required();
  faith->add_option("--out", judge_args.out, "Output faith.jsonl")->required();
  faith->add_option("--per-pair", judge_args.per_pair, "Items sampled per language pair")
      ->capture_default_str();
  faith->add_option("--summary", judge_args.summary, "Write per-language-pair means as JSON");

  // agent run
  AgentArgs agent_args;
  auto* agent_cmd = group("agent", "Evaluate-revise agent");
  auto* agent_run = leaf(agent_cmd->add_subcommand("run", "Run the loop over segments"), "agent run");
  agent_run->add_option("--cfg", agent_args.cfg, "Agent config file")->required();
  agent_run->add_option("--in", agent_args.in, "Segments file")->required();
  agent_run->add_option("--out", agent_args.out, "Output transcripts.jsonl")->required();
  agent_run->add_option("--format", agent_args.format, "jsonl or tsv")->capture_default_str();
  agent_run->add_flag("--no-feedback", agent_args.no_feedback, "Self-refinement control arm");
  agent_run->add_option("--max-iterations", agent_args.max_iterations);
  agent_run->add_option("--selection", agent_args.selection, "LAST or BEST_SCORE");

  // rerun
  std::string rerun_path;
  auto* rerun = leaf(app.add_subcommand("rerun", "Reproduce a run from its manifest"), "rerun");
  rerun->add_option("--manifest", rerun_path, "Manifest file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    std::cout << REMEDY_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (const auto unknown = detail::unknown_subcommand(app, args)) {
      std::cerr << "error: unknown subcommand '" << *unknown << "'\n\n" << app.help();
      return kExitUsage;
    }
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    log::set_level(log::level_from_string(g.log_level));
    if (subcommand == "rerun") {
      run_rerun(rerun_path, g);
      return kExitOk;
    }
    manifest::Recorder rec(subcommand, detail::strip_out_dir(args), g.out_dir);
    if (subcommand == "pairs build") {
      run_pairs_build(pairs_args, g, rec);
      primary_output = pairs_args.out;
    } else if (subcommand == "reward score") {
      run_reward_score(reward_args, g, rec);
      primary_output = reward_args.out;
    } else if (subcommand == "train-toy") {
      run_train_toy(train_args, g, rec);
      primary_output = train_args.out;
    } else if (subcommand == "metaeval run") {
      run_metaeval(meta_args, g, rec);
      primary_output = meta_args.out;
    } else if (subcommand == "challenge gen") {
      run_challenge_gen(gen_args, g, rec);
      primary_output = gen_args.out;
    } else if (subcommand == "challenge report") {
      run_challenge_report(rep_args, g, rec);
      primary_output = rep_args.out;
    } else if (subcommand == "eval run") {
      if (!eval_args.in && !eval_args.pairs) {
        fail(ErrorKind::kConfig, "eval run: one of --in or --pairs is required");
      }
      run_eval(eval_args, g, rec);
      primary_output = eval_args.out;
    } else if (subcommand == "judge faithfulness") {
      run_judge(judge_args, g, rec);
      primary_output = judge_args.out;
    } else if (subcommand == "agent run") {
      run_agent(agent_args, g, rec);
      primary_output = agent_args.out;
    } else {
      std::cerr << "error: no subcommand selected\n\n" << app.help();
      return kExitUsage;
    }
    rec.write(primary_output);
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error [unexpected]: " << e.what() << "\n";
    return kExitUnexpected;
  }
}

inline int dispatch(int argc, const char* const* argv) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace remedy::cli
