#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "remedy/agent.hpp"
#include "remedy/templates.hpp"

namespace remedy::agent {
namespace {

using gateway::ChatClient;
using gateway::EndpointConfig;
using gateway::FunctionTransport;
using gateway::HttpRequest;
using gateway::HttpResponse;

std::string user_prompt(const HttpRequest& r) {
  const auto body = gateway::json::parse(r.body);
  std::string out;
  for (const auto& m : body["messages"]) {
    if (m["role"] == "user") out = m["content"];
  }
  return out;
}

// Evaluator answering with the verdict scripted for whichever candidate
// appears in the prompt.
class ScriptedEvaluator {
 public:
  explicit ScriptedEvaluator(std::map<std::string, std::string> replies)
      : replies_(std::move(replies)) {}

  ChatClient client() {
    return ChatClient(EndpointConfig{}, std::make_shared<FunctionTransport>([this](const HttpRequest& r) {
      const std::string prompt = user_prompt(r);
      for (const auto& [mt, reply] : replies_) {
        if (prompt.find(mt) != std::string::npos) {
          return HttpResponse{200, gateway::completion_body(reply), {}};
        }
      }
      return HttpResponse{404, "{}", {}};
    }));
  }

 private:
  std::map<std::string, std::string> replies_;
};

// Reviser answering "cand-1", "cand-2", ... and recording its prompts.
class ScriptedReviser {
 public:
  ChatClient client(int fail_at = 0) {
    fail_at_ = fail_at;
    return ChatClient(EndpointConfig{}, std::make_shared<FunctionTransport>([this](const HttpRequest& r) {
      std::lock_guard<std::mutex> lock(mu_);
      prompts.push_back(user_prompt(r));
      const int n = static_cast<int>(prompts.size());
      if (n == fail_at_) return HttpResponse{400, R"({"error":"refused"})", {}};
      return HttpResponse{200, gateway::completion_body("  cand-" + std::to_string(n) + "\n"), {}};
    }));
  }

  std::vector<std::string> prompts;

 private:
  std::mutex mu_;
  int fail_at_ = 0;
};

corpus::Segment item() {
  corpus::Segment s;
  s.id = "doc1-3";
  s.lang_pair = "en-de";
  s.src = "The committee postponed the vote.";
  s.mt = "cand-0";
  return s;
}

std::string scored(const std::string& why, double score) {
  return why + "\n#### Score: " + verdict::format_score(score);
}

AgentConfig config(int iterations, Selection rule = Selection::kBestScore, bool stop = true) {
  AgentConfig c;
  c.max_iterations = iterations;
  c.selection = rule;
  c.stop_on_no_gain = stop;
  return c;
}

TEST(Loop, SingleImprovingStep) {
  ScriptedEvaluator eval({{"cand-0", scored("weak verb", 80)}, {"cand-1", scored("fine", 85)}});
  ScriptedReviser rev;
  const auto t = run_loop(config(1), eval.client(), rev.client(), item());
  EXPECT_EQ(t.initial_score, 80.0);
  ASSERT_EQ(t.iterations.size(), 1u);
  EXPECT_EQ(t.iterations[0].feedback_score, 80.0);
  EXPECT_EQ(t.iterations[0].feedback_rationale, "weak verb");
  EXPECT_EQ(t.iterations[0].revised_mt, "cand-1");
  EXPECT_EQ(t.selected_score, 85.0);
  EXPECT_EQ(t.selected_mt, "cand-1");
  EXPECT_FALSE(t.error.has_value());
  ASSERT_EQ(rev.prompts.size(), 1u);
  EXPECT_NE(rev.prompts[0].find("weak verb"), std::string::npos);
}

TEST(Loop, KeepsIncumbentWhenRevisionIsWorse) {
  ScriptedEvaluator eval({{"cand-0", scored("good", 80)}, {"cand-1", scored("worse", 70)}});
  ScriptedReviser rev;
  const auto t = run_loop(config(4), eval.client(), rev.client(), item());
  ASSERT_EQ(t.iterations.size(), 1u);  // stopped: no gain
  EXPECT_EQ(t.selected_mt, "cand-0");
  EXPECT_EQ(t.selected_score, 80.0);

  ScriptedReviser rev_last;
  const auto last = run_loop(config(1, Selection::kLast), eval.client(), rev_last.client(), item());
  EXPECT_EQ(last.selected_mt, "cand-1");
  EXPECT_EQ(last.selected_score, 70.0);
}

TEST(Loop, ScriptedFourIterations) {
  ScriptedEvaluator eval({{"cand-0", scored("r0", 50)},
                          {"cand-1", scored("r1", 60)},
                          {"cand-2", scored("r2", 70)},
                          {"cand-3", scored("r3", 68)},
                          {"cand-4", scored("r4", 72)}});
  ScriptedReviser rev;
  const auto t = run_loop(config(4, Selection::kBestScore, false), eval.client(), rev.client(), item());
  ASSERT_EQ(t.iterations.size(), 4u);
  std::vector<double> scores;
  for (const auto& it : t.iterations) scores.push_back(*it.revised_score);
  EXPECT_EQ(scores, (std::vector<double>{60, 70, 68, 72}));
  EXPECT_EQ(t.selected_score, 72.0);
  EXPECT_EQ(t.selected_mt, "cand-4");
  // Each iteration's feedback is the evaluation of the translation it revises.
  EXPECT_EQ(t.iterations[3].feedback_rationale, "r3");
  EXPECT_EQ(t.iterations[3].feedback_score, 68.0);

  ScriptedReviser stopping;
  const auto s = run_loop(config(4), eval.client(), stopping.client(), item());
  EXPECT_EQ(s.iterations.size(), 3u);  // 68 does not beat 70
  EXPECT_EQ(s.selected_score, 70.0);
}

TEST(Loop, BestScoreIsMaximumOverTranscript) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(0, 100);
  for (int trial = 0; trial < 30; ++trial) {
    std::map<std::string, std::string> replies;
    for (int k = 0; k <= 5; ++k) replies["cand-" + std::to_string(k)] = scored("r", u(rng));
    ScriptedEvaluator eval(replies);
    ScriptedReviser rev;
    const auto t = run_loop(config(5, Selection::kBestScore, false), eval.client(), rev.client(), item());
    double best = *t.initial_score;
    std::vector<std::string> candidates{t.initial_mt};
    for (const auto& it : t.iterations) {
      best = std::max(best, *it.revised_score);
      candidates.push_back(it.revised_mt);
    }
    EXPECT_EQ(t.selected_score, best);
    EXPECT_NE(std::find(candidates.begin(), candidates.end(), t.selected_mt), candidates.end());
    EXPECT_LE(t.iterations.size(), 5u);
  }
}

TEST(Loop, SourceIsNeverMutated) {
  ScriptedEvaluator eval({{"cand-0", scored("a", 10)}, {"cand-1", scored("b", 20)},
                          {"cand-2", scored("c", 30)}, {"cand-3", scored("d", 40)}});
  ScriptedReviser rev;
  const auto t = run_loop(config(3), eval.client(), rev.client(), item());
  EXPECT_EQ(t.src, item().src);
  ASSERT_EQ(rev.prompts.size(), 3u);
  for (const auto& p : rev.prompts) EXPECT_NE(p.find(item().src), std::string::npos);
  EXPECT_NE(rev.prompts[2].find("cand-2"), std::string::npos);
}

TEST(Loop, EndpointFailureTruncatesTranscript) {
  ScriptedEvaluator eval({{"cand-0", scored("a", 50)}, {"cand-1", scored("b", 60)}});
  ScriptedReviser rev;
  const auto t = run_loop(config(4, Selection::kBestScore, false), eval.client(), rev.client(2), item());
  ASSERT_TRUE(t.error.has_value());
  EXPECT_NE(t.error->find("transport"), std::string::npos);
  ASSERT_EQ(t.iterations.size(), 1u);
  EXPECT_EQ(t.selected_mt, "cand-1");
  EXPECT_EQ(t.selected_score, 60.0);
}

TEST(Loop, UnscoredInitialTranslation) {
  ScriptedEvaluator eval(std::map<std::string, std::string>{{"cand-0", "no verdict here"}});
  ScriptedReviser rev;
  const auto t = run_loop(config(2), eval.client(), rev.client(), item());
  EXPECT_TRUE(t.error.has_value());
  EXPECT_TRUE(t.iterations.empty());
  EXPECT_EQ(t.selected_mt, "cand-0");
  EXPECT_FALSE(t.selected_score.has_value());
  EXPECT_TRUE(rev.prompts.empty());
}

TEST(SelfRefine, PromptsCarryNoFeedback) {
  ScriptedEvaluator eval({{"cand-0", scored("weak verb", 40)}, {"cand-1", scored("x", 50)}});
  ScriptedReviser rev;
  const auto t = self_refine_baseline(config(1), eval.client(), rev.client(), item());
  EXPECT_FALSE(t.feedback_in_prompt);
  ASSERT_EQ(t.iterations.size(), 1u);
  ASSERT_EQ(rev.prompts.size(), 1u);
  EXPECT_EQ(rev.prompts[0].find("Feedback"), std::string::npos);
  EXPECT_EQ(rev.prompts[0].find("weak verb"), std::string::npos);
}

TEST(SelfRefine, ArmsDifferOnlyInFeedbackBlock) {
  ScriptedEvaluator eval({{"cand-0", scored("the verb is wrong", 40)}, {"cand-1", scored("x", 50)}});
  ScriptedReviser with;
  ScriptedReviser without;
  run_loop(config(1), eval.client(), with.client(), item());
  self_refine_baseline(config(1), eval.client(), without.client(), item());
  ASSERT_EQ(with.prompts.size(), 1u);
  ASSERT_EQ(without.prompts.size(), 1u);

  std::string block(templates::kRefineFeedbackBlock);
  block.replace(block.find("{{feedback}}"), 12, "the verb is wrong");
  std::string stripped = with.prompts[0];
  const auto pos = stripped.find(block);
  ASSERT_NE(pos, std::string::npos);
  stripped.erase(pos, block.size());
  EXPECT_EQ(stripped, without.prompts[0]);
}

TEST(Transcript, SerializesAndReplays) {
  const std::map<std::string, std::string> script{{"cand-0", scored("r0", 55)},
                                                  {"cand-1", scored("r1", 65)},
                                                  {"cand-2", "unparseable"}};
  ScriptedEvaluator eval(script);
  ScriptedReviser rev;
  const auto t = run_loop(config(3, Selection::kBestScore, false), eval.client(), rev.client(), item());
  const json j = to_json(t);
  EXPECT_EQ(to_json(transcript_from_json(j)), j);
  EXPECT_TRUE(j["iterations"][1]["revised_score"].is_null());

  // Replaying against the same recorded responses reproduces the transcript.
  ScriptedEvaluator eval2(script);
  ScriptedReviser rev2;
  const auto replay = run_loop(config(3, Selection::kBestScore, false), eval2.client(), rev2.client(), item());
  EXPECT_EQ(to_json(replay).dump(), j.dump());
  EXPECT_THROW(transcript_from_json(json{{"id", "x"}}), Error);
}

TEST(Batch, KeepsInputOrder) {
  std::vector<corpus::Segment> segments;
  std::map<std::string, std::string> script;
  for (int i = 0; i < 12; ++i) {
    auto s = item();
    s.id = "s" + std::to_string(i);
    s.mt = "draft-" + std::to_string(i) + "-end";
    script[s.mt] = scored("r", 10 + i);
    segments.push_back(s);
  }
  script["cand-"] = scored("r", 99);
  ScriptedEvaluator eval(script);
  ScriptedReviser rev;
  const auto out = run_batch(config(1), eval.client(), rev.client(), segments, true);
  ASSERT_EQ(out.size(), segments.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].id, segments[i].id);
    EXPECT_EQ(out[i].initial_score, 10.0 + i);
    EXPECT_EQ(out[i].selected_score, 99.0);
  }
}

TEST(Config, FromKeyValues) {
  const auto kv = config::parse(
      "max_iterations = 2\nselection = LAST\nstop_on_no_gain = false\n"
      "[feedback]\nmodel_name = judge\n[refinement]\nmodel_name = writer\nmax_concurrency = 2\n",
      "agent.toml");
  const auto c = agent_config_from_kv(kv);
  EXPECT_EQ(c.max_iterations, 2);
  EXPECT_EQ(c.selection, Selection::kLast);
  EXPECT_FALSE(c.stop_on_no_gain);
  EXPECT_EQ(c.feedback_endpoint.model_name, "judge");
  EXPECT_EQ(c.refinement_endpoint.model_name, "writer");
  EXPECT_EQ(c.refinement_endpoint.max_concurrency, 2);
  EXPECT_THROW(agent_config_from_kv(config::parse("max_iterations = 0\n")), Error);
  EXPECT_THROW(agent_config_from_kv(config::parse("selection = FIRST\n")), Error);
  EXPECT_THROW(agent_config_from_kv(config::parse("unknown = 1\n")), Error);
  EXPECT_EQ(to_json(c)["selection"], "LAST");
}

}  // namespace
}  // namespace remedy::agent
