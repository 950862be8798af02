#pragma once

// Reason-then-score reply parsing.
//
// Pairwise replies end with
//   ####
//   A: <score>
//   B: <score>
// and single-segment replies with "#### Score: <score>". Only the last block
// counts; everything before it is the rationale. Parsing never throws.

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/error.hpp"

namespace remedy::verdict {

using json = nlohmann::json;

enum class Status { kOkPairwise, kOkSingle, kParseFailure };
enum class FailureReason { kNoMarker, kNonNumeric, kOutOfRange, kDuplicateBlock };

struct ParsedVerdict {
  std::string rationale;
  std::optional<double> score_a;
  std::optional<double> score_b;
  std::optional<double> score_single;
  Status status = Status::kParseFailure;
  std::optional<FailureReason> failure_reason;
  // Set when the B line precedes the A line; the scores are still accepted.
  bool order_reversed = false;

  bool ok() const { return status != Status::kParseFailure; }
};

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::kOkPairwise: return "OK_PAIRWISE";
    case Status::kOkSingle: return "OK_SINGLE";
    case Status::kParseFailure: return "PARSE_FAILURE";
  }
  return "PARSE_FAILURE";
}

inline std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::kNoMarker: return "NO_MARKER";
    case FailureReason::kNonNumeric: return "NON_NUMERIC";
    case FailureReason::kOutOfRange: return "OUT_OF_RANGE";
    case FailureReason::kDuplicateBlock: return "DUPLICATE_BLOCK";
  }
  return "NO_MARKER";
}

namespace detail {

inline constexpr std::string_view kMarker = "####";

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

inline std::string rstrip(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

inline ParsedVerdict failure(std::string rationale, FailureReason reason) {
  ParsedVerdict v;
  v.rationale = std::move(rationale);
  v.status = Status::kParseFailure;
  v.failure_reason = reason;
  return v;
}

// Start of the '#' run containing position `pos`.
inline std::size_t hash_run_start(std::string_view text, std::size_t pos) {
  while (pos > 0 && text[pos - 1] == '#') --pos;
  return pos;
}

// Reads a leading decimal number, skipping spaces and markdown emphasis.
// Anything after the number (punctuation, "(0-100)", ...) is ignored.
inline std::optional<double> leading_number(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '*')) ++i;
  const std::size_t start = i;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  const std::size_t digits_start = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  bool any_digit = i > digits_start;
  if (i + 1 < s.size() && s[i] == '.' && s[i + 1] >= '0' && s[i + 1] <= '9') {
    ++i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    any_digit = true;
  }
  if (!any_digit) return std::nullopt;
  std::size_t from = start;
  if (s[from] == '+') ++from;  // from_chars rejects a leading '+'
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data() + from, s.data() + i, value);
  if (ec != std::errc() || ptr != s.data() + i) return std::nullopt;
  return value;
}

inline bool in_range(double v) { return std::isfinite(v) && v >= 0.0 && v <= 100.0; }

// Returns the remainder of `line` after "<label>:" (whitespace and emphasis
// allowed around the label), or nullopt if the line is not labelled.
inline std::optional<std::string_view> after_label(std::string_view line, char label) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '*')) ++i;
  if (i >= line.size() || line[i] != label) return std::nullopt;
  ++i;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '*')) ++i;
  if (i >= line.size() || line[i] != ':') return std::nullopt;
  return line.substr(i + 1);
}

}  // namespace detail

inline ParsedVerdict parse_pairwise(std::string_view text) {
  const auto marker = text.rfind(detail::kMarker);
  if (marker == std::string_view::npos) {
    return detail::failure(detail::rstrip(text), FailureReason::kNoMarker);
  }
  const auto run_start = detail::hash_run_start(text, marker);
  std::string rationale = detail::rstrip(text.substr(0, run_start));

  std::size_t pos = marker + detail::kMarker.size();
  while (pos < text.size() && text[pos] == '#') ++pos;
  const std::string_view block = text.substr(pos);

  std::vector<std::string_view> a_values;
  std::vector<std::string_view> b_values;
  bool b_first = false;
  std::size_t line_start = 0;
  while (line_start <= block.size()) {
    auto line_end = block.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = block.size();
    const std::string_view line = block.substr(line_start, line_end - line_start);
    if (auto rest = detail::after_label(line, 'A')) {
      a_values.push_back(*rest);
    } else if (auto rest_b = detail::after_label(line, 'B')) {
      if (a_values.empty()) b_first = true;
      b_values.push_back(*rest_b);
    }
    if (line_end == block.size()) break;
    line_start = line_end + 1;
  }

  if (a_values.size() > 1 || b_values.size() > 1) {
    return detail::failure(std::move(rationale), FailureReason::kDuplicateBlock);
  }
  if (a_values.empty() || b_values.empty()) {
    return detail::failure(std::move(rationale), FailureReason::kNonNumeric);
  }
  const auto a = detail::leading_number(a_values.front());
  const auto b = detail::leading_number(b_values.front());
  if (!a || !b) return detail::failure(std::move(rationale), FailureReason::kNonNumeric);
  if (!detail::in_range(*a) || !detail::in_range(*b)) {
    return detail::failure(std::move(rationale), FailureReason::kOutOfRange);
  }

  ParsedVerdict v;
  v.rationale = std::move(rationale);
  v.score_a = *a;
  v.score_b = *b;
  v.status = Status::kOkPairwise;
  v.order_reversed = b_first;
  return v;
}

inline ParsedVerdict parse_single(std::string_view text) {
  // Walk "####" occurrences from the end; the last one followed by "Score:" wins.
  std::size_t search_end = text.size();
  while (search_end > 0) {
    const auto marker = text.rfind(detail::kMarker, search_end - 1);
    if (marker == std::string_view::npos) break;
    const auto run_start = detail::hash_run_start(text, marker);
    std::size_t pos = marker + detail::kMarker.size();
    while (pos < text.size() && text[pos] == '#') ++pos;
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '*')) ++pos;
    constexpr std::string_view kScore = "score";
    bool matches = text.size() - pos >= kScore.size();
    for (std::size_t k = 0; matches && k < kScore.size(); ++k) {
      const char c = text[pos + k];
      matches = (c | 0x20) == kScore[k];
    }
    if (matches) {
      pos += kScore.size();
      while (pos < text.size() && (text[pos] == ' ' || text[pos] == '*')) ++pos;
      if (pos < text.size() && text[pos] == ':') {
        std::string rationale = detail::rstrip(text.substr(0, run_start));
        const auto line_end = text.find('\n', pos + 1);
        const auto value = detail::leading_number(
            text.substr(pos + 1, line_end == std::string_view::npos ? std::string_view::npos
                                                                    : line_end - pos - 1));
        if (!value) return detail::failure(std::move(rationale), FailureReason::kNonNumeric);
        if (!detail::in_range(*value)) {
          return detail::failure(std::move(rationale), FailureReason::kOutOfRange);
        }
        ParsedVerdict v;
        v.rationale = std::move(rationale);
        v.score_single = *value;
        v.status = Status::kOkSingle;
        return v;
      }
    }
    if (run_start == 0) break;
    search_end = run_start;
  }
  return detail::failure(detail::rstrip(text), FailureReason::kNoMarker);
}

// Shortest round-trippable decimal; integral values print without a fraction.
inline std::string format_score(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string render_scores(double score_a, double score_b) {
  if (!detail::in_range(score_a) || !detail::in_range(score_b)) {
    fail(ErrorKind::kConfig, "render_scores: scores must lie in [0,100]");
  }
  return "####\nA: " + format_score(score_a) + "\nB: " + format_score(score_b);
}

// verdicts.jsonl row.
inline json to_json_row(std::string_view item_id, const ParsedVerdict& v) {
  json j{{"item_id", item_id}, {"rationale", v.rationale}};
  if (v.score_a) j["score_a"] = *v.score_a;
  if (v.score_b) j["score_b"] = *v.score_b;
  if (v.score_single) j["score"] = *v.score_single;
  j["status"] = to_string(v.status);
  if (v.failure_reason) j["failure_reason"] = to_string(*v.failure_reason);
  if (v.order_reversed) j["order_reversed"] = true;
  return j;
}

inline ParsedVerdict from_json_row(const json& j) {
  ParsedVerdict v;
  try {
    v.rationale = j.value("rationale", "");
    if (j.contains("score_a") && !j["score_a"].is_null()) v.score_a = j["score_a"].get<double>();
    if (j.contains("score_b") && !j["score_b"].is_null()) v.score_b = j["score_b"].get<double>();
    if (j.contains("score") && !j["score"].is_null()) v.score_single = j["score"].get<double>();
    const std::string status = j.at("status").get<std::string>();
    if (status == "OK_PAIRWISE") {
      v.status = Status::kOkPairwise;
    } else if (status == "OK_SINGLE") {
      v.status = Status::kOkSingle;
    } else if (status == "PARSE_FAILURE") {
      v.status = Status::kParseFailure;
      const std::string reason = j.value("failure_reason", "NO_MARKER");
      for (auto r : {FailureReason::kNoMarker, FailureReason::kNonNumeric,
                     FailureReason::kOutOfRange, FailureReason::kDuplicateBlock}) {
        if (reason == to_string(r)) v.failure_reason = r;
      }
      if (!v.failure_reason) fail(ErrorKind::kInput, "unknown failure_reason '" + reason + "'");
      v.score_a.reset();
      v.score_b.reset();
      v.score_single.reset();
    } else {
      fail(ErrorKind::kInput, "unknown verdict status '" + status + "'");
    }
    v.order_reversed = j.value("order_reversed", false);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed verdict row: ") + e.what());
  }
  const bool consistent =
      (v.status == Status::kOkPairwise && v.score_a && v.score_b && detail::in_range(*v.score_a) &&
       detail::in_range(*v.score_b)) ||
      (v.status == Status::kOkSingle && v.score_single && detail::in_range(*v.score_single)) ||
      v.status == Status::kParseFailure;
  if (!consistent) fail(ErrorKind::kInput, "verdict row scores disagree with its status");
  return v;
}

}  // namespace remedy::verdict
