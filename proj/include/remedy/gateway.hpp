#pragma once

// Chat-completion client, multi-pass segment evaluation and the faithfulness
// judge.
//
// Wire shape: POST {base_url}/chat/completions with
//   {"model": ..., "messages": [{"role": ..., "content": ...}], "temperature": ..., "max_tokens": ...}
// and the reply read from choices[0].message.content.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "remedy/config.hpp"
#include "remedy/corpus.hpp"
#include "remedy/error.hpp"
#include "remedy/io.hpp"
#include "remedy/log.hpp"
#include "remedy/metaeval.hpp"
#include "remedy/verdict.hpp"

namespace remedy::gateway {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct Message {
  std::string role;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "remedy-r";
  std::string api_key_env = "REMEDY_API_KEY";
  double temperature = 0.0;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  int max_concurrency = 4;
  std::chrono::milliseconds backoff_initial{500};
  // Sampling temperature for multi-pass evaluation when `temperature` is 0.
  double tts_temperature = 0.7;
  // When set, replies come from this rules file instead of the network.
  std::optional<std::filesystem::path> stub_replies;

  void validate() const {
    if (base_url.empty()) fail(ErrorKind::kConfig, "endpoint: base_url is empty");
    if (model_name.empty()) fail(ErrorKind::kConfig, "endpoint: model_name is empty");
    if (!(temperature >= 0.0) || !(tts_temperature >= 0.0)) {
      fail(ErrorKind::kConfig, "endpoint: temperature must be non-negative");
    }
    if (max_tokens < 1) fail(ErrorKind::kConfig, "endpoint: max_tokens must be positive");
    if (timeout.count() <= 0) fail(ErrorKind::kConfig, "endpoint: timeout must be positive");
    if (max_retries < 0 || max_retries > 10) {
      fail(ErrorKind::kConfig, "endpoint: max_retries must lie in [0,10]");
    }
    if (max_concurrency < 1) fail(ErrorKind::kConfig, "endpoint: max_concurrency must be >= 1");
    if (backoff_initial.count() < 0) fail(ErrorKind::kConfig, "endpoint: backoff must be >= 0");
  }
};

inline constexpr const char* kEndpointKeys[] = {
    "base_url",    "model_name",         "api_key_env",     "temperature",
    "max_tokens",  "timeout_ms",         "max_retries",     "max_concurrency",
    "backoff_ms",  "tts_temperature",    "stub_replies"};

// Relative stub paths resolve against `base_dir` (the config file's directory).
inline EndpointConfig endpoint_from_kv(const config::KeyValues& kv,
                                       const std::filesystem::path& base_dir = {}) {
  config::require_known(kv, kEndpointKeys, "endpoint");
  EndpointConfig c;
  config::get(kv, "base_url", c.base_url);
  config::get(kv, "model_name", c.model_name);
  config::get(kv, "api_key_env", c.api_key_env);
  config::get(kv, "temperature", c.temperature);
  config::get(kv, "max_tokens", c.max_tokens);
  std::int64_t ms = c.timeout.count();
  config::get(kv, "timeout_ms", ms);
  c.timeout = std::chrono::milliseconds(ms);
  config::get(kv, "max_retries", c.max_retries);
  config::get(kv, "max_concurrency", c.max_concurrency);
  std::int64_t backoff = c.backoff_initial.count();
  config::get(kv, "backoff_ms", backoff);
  c.backoff_initial = std::chrono::milliseconds(backoff);
  config::get(kv, "tts_temperature", c.tts_temperature);
  if (auto it = kv.find("stub_replies"); it != kv.end()) {
    std::filesystem::path p = it->second;
    c.stub_replies = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  c.validate();
  return c;
}

// Configuration as recorded in manifests. The credential itself is never read here.
inline json to_json(const EndpointConfig& c) {
  json j{{"base_url", c.base_url},
         {"model_name", c.model_name},
         {"api_key_env", c.api_key_env},
         {"temperature", c.temperature},
         {"max_tokens", c.max_tokens},
         {"timeout_ms", c.timeout.count()},
         {"max_retries", c.max_retries},
         {"max_concurrency", c.max_concurrency},
         {"backoff_ms", c.backoff_initial.count()},
         {"tts_temperature", c.tts_temperature}};
  if (c.stub_replies) j["stub_replies"] = c.stub_replies->generic_string();
  return j;
}

// Request body with fields in wire order.
inline ordered_json request_body(const EndpointConfig& config, const std::vector<Message>& messages,
                                 std::optional<double> temperature = std::nullopt) {
  ordered_json body;
  body["model"] = config.model_name;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : messages) {
    ordered_json one;
    one["role"] = m.role;
    one["content"] = m.content;
    msgs.push_back(std::move(one));
  }
  body["messages"] = std::move(msgs);
  body["temperature"] = temperature.value_or(config.temperature);
  body["max_tokens"] = config.max_tokens;
  return body;
}

inline std::string request_body_text(const EndpointConfig& config,
                                     const std::vector<Message>& messages,
                                     std::optional<double> temperature = std::nullopt) {
  return request_body(config, messages, temperature).dump(-1, ' ', false,
                                                          ordered_json::error_handler_t::replace);
}

// Replaces every occurrence of `secret` in `text`.
inline std::string redact(std::string text, std::string_view secret) {
  if (secret.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(secret, pos)) != std::string::npos) {
    text.replace(pos, secret.size(), "[REDACTED]");
    pos += 10;
  }
  return text;
}

// ---------------------------------------------------------------------------
// Transports

struct HttpRequest {
  std::string url;  // full endpoint URL
  std::string body;
  std::string api_key;
  std::chrono::milliseconds timeout{0};
};

struct HttpResponse {
  int status = 0;  // 0 when the request never completed
  std::string body;
  std::string transport_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
  virtual bool needs_credentials() const { return true; }
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline ParsedUrl parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    fail(ErrorKind::kConfig, "endpoint: base_url must start with http:// or https://");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    fail(ErrorKind::kConfig, "endpoint: unsupported URL scheme '" + std::string(scheme) + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) out.path_prefix = std::string(url.substr(path_start));
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

inline std::string completions_url(const EndpointConfig& config) {
  std::string base = config.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + "/chat/completions";
}

class HttpTransport final : public Transport {
 public:
  HttpResponse send(const HttpRequest& request) override {
    const ParsedUrl url = parse_url(request.url);
    httplib::Client client(url.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!request.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + request.api_key);
    }
    auto res = client.Post(url.path_prefix.empty() ? "/" : url.path_prefix, headers, request.body,
                           "application/json");
    HttpResponse out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }
};

// Wraps a callable; used to script transports in tests.
class FunctionTransport final : public Transport {
 public:
  explicit FunctionTransport(std::function<HttpResponse(const HttpRequest&)> fn,
                             bool needs_credentials = false)
      : fn_(std::move(fn)), needs_credentials_(needs_credentials) {}
  HttpResponse send(const HttpRequest& request) override { return fn_(request); }
  bool needs_credentials() const override { return needs_credentials_; }

 private:
  std::function<HttpResponse(const HttpRequest&)> fn_;
  bool needs_credentials_;
};

inline std::string completion_body(std::string_view content) {
  json body{{"object", "chat.completion"},
            {"choices", json::array({json{{"index", 0},
                                          {"message", {{"role", "assistant"}, {"content", content}}},
                                          {"finish_reason", "stop"}}})}};
  return body.dump();
}

// One rule of a stub rules file:
//   {"match": "substring of the last user message", "reply": "text"}
//   {"match": "...", "replies": ["first", "second", ...]}
// The first matching rule answers; an empty match always matches. With
// "replies", successive identical prompts get successive entries and the last
// one repeats.
struct StubRule {
  std::string match;
  std::vector<std::string> replies;
};

inline std::vector<StubRule> parse_stub_rules(const std::vector<json>& rows) {
  std::vector<StubRule> rules;
  for (const auto& row : rows) {
    StubRule rule;
    try {
      rule.match = row.value("match", "");
      if (row.contains("reply")) {
        rule.replies.push_back(row.at("reply").get<std::string>());
      } else {
        rule.replies = row.at("replies").get<std::vector<std::string>>();
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfig, std::string("stub rule: ") + e.what());
    }
    if (rule.replies.empty()) fail(ErrorKind::kConfig, "stub rule has no replies");
    rules.push_back(std::move(rule));
  }
  return rules;
}

// Offline transport answering from stub rules. Deterministic as long as the
// passes for any one prompt are issued sequentially.
class StubTransport final : public Transport {
 public:
  explicit StubTransport(std::vector<StubRule> rules) : rules_(std::move(rules)) {}

  static std::shared_ptr<StubTransport> from_file(const std::filesystem::path& path) {
    return std::make_shared<StubTransport>(parse_stub_rules(io::read_jsonl(path)));
  }

  HttpResponse send(const HttpRequest& request) override {
    const json body = json::parse(request.body, nullptr, false);
    std::string prompt;
    if (body.is_object() && body.contains("messages")) {
      for (const auto& m : body["messages"]) {
        if (m.value("role", "") == "user") prompt = m.value("content", "");
      }
    }
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& rule = rules_[i];
      if (prompt.find(rule.match) == std::string::npos) continue;
      std::size_t k = 0;
      {
        std::lock_guard<std::mutex> lock(mu_);
        k = counters_[{i, prompt}]++;
      }
      const auto& reply = rule.replies[std::min(k, rule.replies.size() - 1)];
      return HttpResponse{200, completion_body(reply), {}};
    }
    return HttpResponse{404, R"({"error":"no stub rule matches the prompt"})", {}};
  }

  bool needs_credentials() const override { return false; }

 private:
  std::vector<StubRule> rules_;
  std::mutex mu_;
  std::map<std::pair<std::size_t, std::string>, std::size_t> counters_;
};

// ---------------------------------------------------------------------------
// Client

struct ChatReply {
  std::string content;
  int attempts = 0;
};

inline std::string extract_content(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorKind::kParse, "chat completion: response body is not a JSON object");
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) fail(ErrorKind::kParse, "chat completion: content is not a string");
    return content.get<std::string>();
  } catch (const json::exception&) {
    fail(ErrorKind::kParse, "chat completion: response lacks choices[0].message.content");
  }
}

inline bool is_transient(const HttpResponse& r) {
  return r.status == 0 || r.status == 429 || r.status >= 500;
}

class ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ChatClient(EndpointConfig config, std::shared_ptr<Transport> transport)
      : config_(std::move(config)), transport_(std::move(transport)) {
    config_.validate();
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  // Network transport, or the stub transport when the config names a rules file.
  explicit ChatClient(EndpointConfig config)
      : ChatClient(config, config.stub_replies
                               ? std::shared_ptr<Transport>(StubTransport::from_file(*config.stub_replies))
                               : std::shared_ptr<Transport>(std::make_shared<HttpTransport>())) {}

  const EndpointConfig& config() const { return config_; }
  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

  ChatReply complete(const std::vector<Message>& messages,
                     std::optional<double> temperature = std::nullopt) const {
    HttpRequest request;
    request.url = completions_url(config_);
    request.body = request_body_text(config_, messages, temperature);
    request.timeout = config_.timeout;
    if (transport_->needs_credentials()) {
      const char* key = std::getenv(config_.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        fail(ErrorKind::kAuth,
             "credential missing: environment variable " + config_.api_key_env + " is not set");
      }
      request.api_key = key;
    }
    const std::string& secret = request.api_key;

    const int attempts = 1 + config_.max_retries;
    std::string last_problem;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      const HttpResponse r = transport_->send(request);
      if (r.status == 200) return ChatReply{extract_content(r.body), attempt};
      if (r.status == 401 || r.status == 403) {
        fail(ErrorKind::kAuth,
             "chat completion rejected the credential (HTTP " + std::to_string(r.status) + ")");
      }
      last_problem = r.status == 0 ? "transport error: " + redact(r.transport_error, secret)
                                   : "HTTP " + std::to_string(r.status);
      if (!is_transient(r)) {
        fail(ErrorKind::kTransport,
             "chat completion failed: " + last_problem + ": " + redact(r.body.substr(0, 200), secret));
      }
      if (attempt < attempts) {
        const auto delay = std::min<std::chrono::milliseconds>(
            config_.backoff_initial * (1LL << (attempt - 1)), std::chrono::milliseconds(30000));
        log::info("chat completion attempt " + std::to_string(attempt) + " failed (" +
                  last_problem + "), retrying in " + std::to_string(delay.count()) + " ms");
        sleeper_(delay);
      }
    }
    fail(ErrorKind::kTransport, "chat completion gave up after " + std::to_string(attempts) +
                                    " attempts: " + last_problem);
  }

 private:
  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
};

// ---------------------------------------------------------------------------
// Bounded fan-out

// Runs fn(0..n-1) on at most `max_concurrency` threads. Results keep input
// order; the lowest-index exception, if any, is rethrown after all work ends.
template <typename Fn>
auto map_bounded(std::size_t n, int max_concurrency, Fn fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using T = decltype(fn(std::size_t{}));
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, max_concurrency)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SegmentEvaluation {
  std::string item_id;
  std::vector<verdict::ParsedVerdict> passes;
  std::optional<double> aggregate;
  std::size_t passes_used = 0;
  std::vector<std::string> diagnostics;

  // Rationale of the first pass that produced a score.
  std::optional<std::string> first_rationale() const {
    for (const auto& p : passes) {
      if (p.ok()) return p.rationale;
    }
    return std::nullopt;
  }
};

inline double pass_temperature(const EndpointConfig& config, int tts_n) {
  return tts_n > 1 && config.temperature == 0.0 ? config.tts_temperature : config.temperature;
}

inline SegmentEvaluation evaluate_segment(const ChatClient& client, const corpus::Segment& segment,
                                          bool include_ref, int tts_n) {
  if (tts_n < 1) fail(ErrorKind::kConfig, "evaluate_segment: tts_n must be >= 1");
  const auto prompt = corpus::render_prompt(segment, corpus::TemplateId::kSingleEval, include_ref);
  const std::vector<Message> messages{{"user", prompt.rendered}};
  const double temperature = pass_temperature(client.config(), tts_n);

  SegmentEvaluation out;
  out.item_id = segment.id;
  std::vector<std::vector<metaeval::Cell>> cells;
  for (int k = 0; k < tts_n; ++k) {
    const ChatReply reply = client.complete(messages, temperature);
    verdict::ParsedVerdict v = verdict::parse_single(reply.content);
    if (!v.ok()) {
      out.diagnostics.push_back("pass " + std::to_string(k + 1) + ": " +
                                std::string(verdict::to_string(*v.failure_reason)));
    }
    cells.push_back({v.score_single});
    out.passes.push_back(std::move(v));
  }
  const auto agg = metaeval::tts_aggregate(cells).front();
  out.aggregate = agg.score;
  out.passes_used = agg.passes_used;
  if (!out.aggregate) out.diagnostics.push_back("no pass produced a parseable score");
  return out;
}

inline verdict::ParsedVerdict evaluate_pair(const ChatClient& client,
                                            const corpus::PreferencePair& pair, bool include_ref) {
  const auto prompt = corpus::render_prompt(pair, corpus::TemplateId::kPairwiseTrain, include_ref);
  return verdict::parse_pairwise(client.complete({{"user", prompt.rendered}}).content);
}

inline json to_json_row(const SegmentEvaluation& e) {
  json passes = json::array();
  for (const auto& p : e.passes) passes.push_back(verdict::to_json_row(e.item_id, p));
  json j{{"item_id", e.item_id}, {"passes", passes}, {"passes_used", e.passes_used}};
  j["aggregate"] = e.aggregate ? json(*e.aggregate) : json(nullptr);
  if (!e.diagnostics.empty()) j["diagnostics"] = e.diagnostics;
  return j;
}

// ---------------------------------------------------------------------------
// Faithfulness judge

struct FaithfulnessVerdict {
  int faithfulness_score = 0;
  std::string brief_reason;
};

// Accepts a bare object, optionally wrapped in a code fence or surrounded by
// stray text; comments inside the object are tolerated.
inline FaithfulnessVerdict parse_faithfulness(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    fail(ErrorKind::kParse, "faithfulness reply contains no JSON object");
  }
  const json j = json::parse(reply.substr(open, close - open + 1), nullptr, false, true);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorKind::kParse, "faithfulness reply is not a valid JSON object");
  }
  if (!j.contains("faithfulness_score") || !j.contains("brief_reason")) {
    fail(ErrorKind::kParse, "faithfulness reply lacks faithfulness_score or brief_reason");
  }
  const auto& score = j["faithfulness_score"];
  if (!score.is_number_integer()) {
    fail(ErrorKind::kParse, "faithfulness_score must be an integer");
  }
  const auto value = score.get<std::int64_t>();
  if (value < 0 || value > 100) fail(ErrorKind::kParse, "faithfulness_score outside [0,100]");
  const auto& reason = j["brief_reason"];
  if (!reason.is_string() || reason.get<std::string>().empty()) {
    fail(ErrorKind::kParse, "brief_reason must be a non-empty string");
  }
  return FaithfulnessVerdict{static_cast<int>(value), reason.get<std::string>()};
}

inline std::vector<Message> faithfulness_messages(std::string_view src, std::string_view mt,
                                                  std::string_view explanation,
                                                  std::string_view lang_pair) {
  const auto prompt = corpus::render_faithfulness(src, mt, explanation, lang_pair);
  return {{"system", *prompt.system}, {"user", prompt.rendered}};
}

inline FaithfulnessVerdict judge_faithfulness(const ChatClient& client, std::string_view src,
                                              std::string_view mt, std::string_view explanation,
                                              std::string_view lang_pair) {
  return parse_faithfulness(
      client.complete(faithfulness_messages(src, mt, explanation, lang_pair)).content);
}

struct ExplanationItem {
  std::string id;
  std::string lang_pair;
  std::string src;
  std::string mt;
  std::string explanation;
};

inline ExplanationItem explanation_from_json(const json& j) {
  try {
    ExplanationItem e;
    e.id = j.at("id").get<std::string>();
    e.lang_pair = j.value("lang_pair", std::string(corpus::kUndeterminedLangPair));
    e.src = j.at("src").get<std::string>();
    e.mt = j.at("mt").get<std::string>();
    e.explanation = j.at("explanation").get<std::string>();
    return e;
  } catch (const json::exception& ex) {
    fail(ErrorKind::kInput, std::string("malformed explanation row: ") + ex.what());
  }
}

struct FaithfulnessRow {
  std::string id;
  std::string lang_pair;
  std::optional<FaithfulnessVerdict> verdict;
  std::optional<std::string> error;
};

struct LangPairMean {
  std::string lang_pair;
  std::size_t sampled = 0;
  std::size_t judged = 0;
  std::optional<double> mean;
};

struct FaithfulnessBatch {
  std::vector<FaithfulnessRow> rows;
  std::vector<LangPairMean> means;
};

// Draws up to `per_pair` items per language pair (seeded, without
// replacement), keeping input order within the sample.
inline std::vector<std::size_t> sample_per_lang_pair(const std::vector<ExplanationItem>& items,
                                                     std::size_t per_pair, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < items.size(); ++i) groups[items[i].lang_pair].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [lp, idx] : groups) {
    if (idx.size() > per_pair) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_pair);
      std::sort(idx.begin(), idx.end());
    }
    chosen.insert(chosen.end(), idx.begin(), idx.end());
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// Unparseable replies are recorded per row and excluded from the means;
// transport and credential failures abort the batch.
inline FaithfulnessBatch judge_faithfulness_batch(const ChatClient& client,
                                                  const std::vector<ExplanationItem>& items,
                                                  std::size_t per_pair, std::uint64_t seed) {
  const auto chosen = sample_per_lang_pair(items, per_pair, seed);
  FaithfulnessBatch out;
  out.rows = map_bounded(chosen.size(), client.config().max_concurrency, [&](std::size_t k) {
    const auto& item = items[chosen[k]];
    FaithfulnessRow row{item.id, item.lang_pair, std::nullopt, std::nullopt};
    try {
      row.verdict = judge_faithfulness(client, item.src, item.mt, item.explanation, item.lang_pair);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kParse) throw;
      row.error = e.what();
    }
    return row;
  });

  std::map<std::string, LangPairMean> by_pair;
  std::map<std::string, double> sums;
  for (const auto& row : out.rows) {
    auto& m = by_pair[row.lang_pair];
    m.lang_pair = row.lang_pair;
    ++m.sampled;
    if (row.verdict) {
      ++m.judged;
      sums[row.lang_pair] += row.verdict->faithfulness_score;
    }
  }
  for (auto& [lp, m] : by_pair) {
    if (m.judged > 0) m.mean = sums[lp] / static_cast<double>(m.judged);
    out.means.push_back(m);
  }
  return out;
}

inline json to_json_row(const FaithfulnessRow& row) {
  json j{{"id", row.id}, {"lang_pair", row.lang_pair}};
  if (row.verdict) {
    j["faithfulness_score"] = row.verdict->faithfulness_score;
    j["brief_reason"] = row.verdict->brief_reason;
  } else {
    j["faithfulness_score"] = nullptr;
    j["error"] = row.error.value_or("");
  }
  return j;
}

inline json to_json(const std::vector<LangPairMean>& means) {
  json out = json::array();
  for (const auto& m : means) {
    out.push_back({{"lang_pair", m.lang_pair},
                   {"sampled", m.sampled},
                   {"judged", m.judged},
                   {"mean", m.mean ? json(*m.mean) : json(nullptr)}});
  }
  return out;
}

}  // namespace remedy::gateway
