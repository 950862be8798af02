#pragma once

// Evaluate-revise loop: an evaluator scores the current translation with a
// rationale, a reviser rewrites it using that rationale, and the revision is
// re-scored.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/config.hpp"
#include "remedy/corpus.hpp"
#include "remedy/error.hpp"
#include "remedy/gateway.hpp"

namespace remedy::agent {

using json = nlohmann::json;

enum class Selection { kLast, kBestScore };

inline std::string_view to_string(Selection s) {
  return s == Selection::kLast ? "LAST" : "BEST_SCORE";
}

inline Selection selection_from_string(std::string_view s) {
  if (s == "LAST" || s == "last") return Selection::kLast;
  if (s == "BEST_SCORE" || s == "best_score") return Selection::kBestScore;
  fail(ErrorKind::kConfig, "unknown selection rule '" + std::string(s) + "'");
}

struct AgentConfig {
  gateway::EndpointConfig feedback_endpoint;
  gateway::EndpointConfig refinement_endpoint;
  int max_iterations = 4;
  Selection selection = Selection::kBestScore;
  bool stop_on_no_gain = true;
  bool include_ref_in_feedback = false;
  int tts_n = 1;

  void validate() const {
    if (max_iterations < 1) fail(ErrorKind::kConfig, "agent: max_iterations must be >= 1");
    if (tts_n < 1) fail(ErrorKind::kConfig, "agent: tts_n must be >= 1");
    feedback_endpoint.validate();
    refinement_endpoint.validate();
  }
};

inline AgentConfig agent_config_from_kv(const config::KeyValues& kv,
                                        const std::filesystem::path& base_dir = {}) {
  AgentConfig c;
  for (const auto& [k, v] : kv) {
    const bool known = k == "max_iterations" || k == "selection" || k == "stop_on_no_gain" ||
                       k == "include_ref_in_feedback" || k == "tts_n" ||
                       k.rfind("feedback.", 0) == 0 || k.rfind("refinement.", 0) == 0;
    if (!known) fail(ErrorKind::kConfig, "agent: unknown key '" + k + "'");
  }
  c.feedback_endpoint = gateway::endpoint_from_kv(config::subsection(kv, "feedback"), base_dir);
  c.refinement_endpoint = gateway::endpoint_from_kv(config::subsection(kv, "refinement"), base_dir);
  config::get(kv, "max_iterations", c.max_iterations);
  if (auto it = kv.find("selection"); it != kv.end()) c.selection = selection_from_string(it->second);
  config::get(kv, "stop_on_no_gain", c.stop_on_no_gain);
  config::get(kv, "include_ref_in_feedback", c.include_ref_in_feedback);
  config::get(kv, "tts_n", c.tts_n);
  c.validate();
  return c;
}

inline json to_json(const AgentConfig& c) {
  return json{{"feedback", gateway::to_json(c.feedback_endpoint)},
              {"refinement", gateway::to_json(c.refinement_endpoint)},
              {"max_iterations", c.max_iterations},
              {"selection", to_string(c.selection)},
              {"stop_on_no_gain", c.stop_on_no_gain},
              {"include_ref_in_feedback", c.include_ref_in_feedback},
              {"tts_n", c.tts_n}};
}

struct Iteration {
  std::string feedback_rationale;
  double feedback_score = 0.0;
  std::string revised_mt;
  std::optional<double> revised_score;  // missing when the re-score was unparseable
};

struct AgentTranscript {
  std::string id;
  std::string lang_pair;
  std::string src;
  std::string initial_mt;
  std::optional<double> initial_score;
  bool feedback_in_prompt = true;
  std::vector<Iteration> iterations;
  std::string selected_mt;
  std::optional<double> selected_score;
  std::optional<std::string> error;
};

inline json to_json(const AgentTranscript& t) {
  json iterations = json::array();
  for (const auto& it : t.iterations) {
    iterations.push_back({{"feedback_rationale", it.feedback_rationale},
                          {"feedback_score", it.feedback_score},
                          {"revised_mt", it.revised_mt},
                          {"revised_score", it.revised_score ? json(*it.revised_score) : json(nullptr)}});
  }
  json j{{"id", t.id},
         {"lang_pair", t.lang_pair},
         {"src", t.src},
         {"initial_mt", t.initial_mt},
         {"initial_score", t.initial_score ? json(*t.initial_score) : json(nullptr)},
         {"feedback_in_prompt", t.feedback_in_prompt},
         {"iterations", iterations},
         {"selected_mt", t.selected_mt},
         {"selected_score", t.selected_score ? json(*t.selected_score) : json(nullptr)}};
  if (t.error) j["error"] = *t.error;
  return j;
}

inline AgentTranscript transcript_from_json(const json& j) {
  auto opt_num = [](const json& v) -> std::optional<double> {
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  };
  try {
    AgentTranscript t;
    t.id = j.at("id").get<std::string>();
    t.lang_pair = j.at("lang_pair").get<std::string>();
    t.src = j.at("src").get<std::string>();
    t.initial_mt = j.at("initial_mt").get<std::string>();
    t.initial_score = opt_num(j.at("initial_score"));
    t.feedback_in_prompt = j.at("feedback_in_prompt").get<bool>();
    for (const auto& it : j.at("iterations")) {
      t.iterations.push_back(Iteration{it.at("feedback_rationale").get<std::string>(),
                                       it.at("feedback_score").get<double>(),
                                       it.at("revised_mt").get<std::string>(),
                                       opt_num(it.at("revised_score"))});
    }
    t.selected_mt = j.at("selected_mt").get<std::string>();
    t.selected_score = opt_num(j.at("selected_score"));
    if (j.contains("error")) t.error = j["error"].get<std::string>();
    return t;
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed transcript: ") + e.what());
  }
}

inline std::string trim_reply(std::string_view s) {
  while (!s.empty() && std::string_view(" \t\r\n").find(s.front()) != std::string_view::npos) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::string_view(" \t\r\n").find(s.back()) != std::string_view::npos) {
    s.remove_suffix(1);
  }
  return std::string(s);
}

// Applies the selection rule over the initial translation and completed
// iterations. BEST_SCORE keeps the earliest candidate with the highest score.
inline void select(AgentTranscript& t, Selection rule) {
  t.selected_mt = t.initial_mt;
  t.selected_score = t.initial_score;
  if (rule == Selection::kLast) {
    if (!t.iterations.empty()) {
      t.selected_mt = t.iterations.back().revised_mt;
      t.selected_score = t.iterations.back().revised_score;
    }
    return;
  }
  for (const auto& it : t.iterations) {
    if (it.revised_score && (!t.selected_score || *it.revised_score > *t.selected_score)) {
      t.selected_mt = it.revised_mt;
      t.selected_score = it.revised_score;
    }
  }
}

namespace detail {

inline AgentTranscript loop(const AgentConfig& config, const gateway::ChatClient& evaluator,
                            const gateway::ChatClient& reviser, const corpus::Segment& segment,
                            bool with_feedback) {
  config.validate();
  AgentTranscript t;
  t.id = segment.id;
  t.lang_pair = segment.lang_pair;
  t.src = segment.src;
  t.initial_mt = segment.mt;
  t.feedback_in_prompt = with_feedback;

  try {
    corpus::Segment current = segment;
    gateway::SegmentEvaluation eval =
        gateway::evaluate_segment(evaluator, current, config.include_ref_in_feedback, config.tts_n);
    t.initial_score = eval.aggregate;
    std::optional<double> incumbent = eval.aggregate;

    for (int k = 0; k < config.max_iterations; ++k) {
      if (!eval.aggregate) {
        t.error = "iteration " + std::to_string(k + 1) + ": evaluation produced no score";
        break;
      }
      Iteration step;
      step.feedback_rationale = eval.first_rationale().value_or("");
      step.feedback_score = *eval.aggregate;

      const auto prompt = corpus::render_refine(
          segment.src, current.mt, segment.lang_pair,
          with_feedback ? std::optional<std::string>(step.feedback_rationale) : std::nullopt);
      step.revised_mt = trim_reply(reviser.complete({{"user", prompt.rendered}}).content);

      current.mt = step.revised_mt;
      eval = gateway::evaluate_segment(evaluator, current, config.include_ref_in_feedback,
                                       config.tts_n);
      step.revised_score = eval.aggregate;
      t.iterations.push_back(step);

      const bool gained =
          step.revised_score && (!incumbent || *step.revised_score > *incumbent);
      if (gained) incumbent = step.revised_score;
      if (config.stop_on_no_gain && !gained) break;
    }
  } catch (const Error& e) {
    t.error = std::string(to_string(e.kind())) + ": " + e.what();
  }
  select(t, config.selection);
  return t;
}

}  // namespace detail

inline AgentTranscript run_loop(const AgentConfig& config, const gateway::ChatClient& evaluator,
                                const gateway::ChatClient& reviser,
                                const corpus::Segment& segment) {
  return detail::loop(config, evaluator, reviser, segment, true);
}

// Control arm: the reviser never sees the rationale. Revisions are still
// scored by the evaluator so both arms report comparable numbers.
inline AgentTranscript self_refine_baseline(const AgentConfig& config,
                                            const gateway::ChatClient& evaluator,
                                            const gateway::ChatClient& reviser,
                                            const corpus::Segment& segment) {
  return detail::loop(config, evaluator, reviser, segment, false);
}

// Items run concurrently up to the smaller endpoint bound; each loop is sequential.
inline std::vector<AgentTranscript> run_batch(const AgentConfig& config,
                                              const gateway::ChatClient& evaluator,
                                              const gateway::ChatClient& reviser,
                                              const std::vector<corpus::Segment>& segments,
                                              bool with_feedback) {
  const int bound = std::min(config.feedback_endpoint.max_concurrency,
                             config.refinement_endpoint.max_concurrency);
  return gateway::map_bounded(segments.size(), bound, [&](std::size_t i) {
    return detail::loop(config, evaluator, reviser, segments[i], with_feedback);
  });
}

}  // namespace remedy::agent
