#pragma once

// Scored segment ingestion, preference-pair construction and prompt rendering.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/error.hpp"
#include "remedy/io.hpp"
#include "remedy/templates.hpp"

namespace remedy::corpus {

using json = nlohmann::json;

inline constexpr std::string_view kUndeterminedLangPair = "und-und";

struct Segment {
  std::string id;
  std::string lang_pair;
  std::string src;
  std::string mt;
  std::optional<std::string> ref;
  std::string system;
  std::optional<double> human_score;
  std::optional<std::string> domain_tag;
};

struct RowDiagnostic {
  std::size_t line = 0;  // 1-based line in the input file
  std::string reason;
};

struct SegmentSet {
  std::vector<Segment> segments;
  std::vector<RowDiagnostic> rejected;
};

enum class Label { kABetter, kBBetter };

struct PreferencePair {
  std::string id;
  std::string lang_pair;
  std::string src;
  std::optional<std::string> ref;
  std::string mt_a;
  std::string mt_b;
  double g_a = 0.0;
  double g_b = 0.0;
  Label label = Label::kABetter;
  bool swapped = false;
};

struct PairSet {
  std::vector<PreferencePair> pairs;
  std::vector<std::string> diagnostics;
};

enum class TemplateId { kPairwiseTrain, kSingleEval, kRefine, kFaithfulness };

struct PromptText {
  std::string rendered;
  TemplateId template_id = TemplateId::kSingleEval;
  std::map<std::string, std::string> variables;
  std::optional<std::string> system;  // only the faithfulness judge has one
};

enum class InputFormat { kJsonl, kTsv };

// ---------------------------------------------------------------------------
// Validation helpers

inline bool is_valid_lang_pair(std::string_view lang_pair) {
  static const std::regex kPattern("^[a-z]{2,3}(_[A-Za-z]{2,4})?-[a-z]{2,3}(_[A-Za-z]{2,4})?$");
  return std::regex_match(lang_pair.begin(), lang_pair.end(), kPattern);
}

inline std::pair<std::string, std::string> split_lang_pair(std::string_view lang_pair) {
  if (!is_valid_lang_pair(lang_pair)) {
    fail(ErrorKind::kInput, "malformed lang_pair '" + std::string(lang_pair) + "'");
  }
  const auto dash = lang_pair.find('-');
  return {std::string(lang_pair.substr(0, dash)), std::string(lang_pair.substr(dash + 1))};
}

inline bool in_score_range(double v) { return std::isfinite(v) && v >= 0.0 && v <= 100.0; }

inline std::string_view to_string(Label label) {
  return label == Label::kABetter ? "A_BETTER" : "B_BETTER";
}

inline Label label_from_string(std::string_view s) {
  if (s == "A_BETTER") return Label::kABetter;
  if (s == "B_BETTER") return Label::kBBetter;
  fail(ErrorKind::kInput, "unknown label '" + std::string(s) + "'");
}

inline std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::kPairwiseTrain: return "PAIRWISE_TRAIN";
    case TemplateId::kSingleEval: return "SINGLE_EVAL";
    case TemplateId::kRefine: return "REFINE";
    case TemplateId::kFaithfulness: return "FAITHFULNESS";
  }
  fail(ErrorKind::kConfig, "unknown template id");
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(json& j, const Segment& s) {
  j = json{{"id", s.id}, {"lang_pair", s.lang_pair}, {"src", s.src}, {"mt", s.mt}};
  if (s.ref) j["ref"] = *s.ref;
  j["system"] = s.system;
  if (s.human_score) j["human_score"] = *s.human_score;
  if (s.domain_tag) j["domain_tag"] = *s.domain_tag;
}

inline void to_json(json& j, const PreferencePair& p) {
  j = json{{"id", p.id}, {"lang_pair", p.lang_pair}, {"src", p.src}};
  if (p.ref) j["ref"] = *p.ref;
  j["mt_a"] = p.mt_a;
  j["mt_b"] = p.mt_b;
  j["g_a"] = p.g_a;
  j["g_b"] = p.g_b;
  j["label"] = to_string(p.label);
  j["swapped"] = p.swapped;
}

inline void validate(const PreferencePair& p) {
  if (!in_score_range(p.g_a) || !in_score_range(p.g_b)) {
    fail(ErrorKind::kInput, "pair " + p.id + ": human score outside [0,100]");
  }
  if (p.g_a == p.g_b) fail(ErrorKind::kInput, "pair " + p.id + ": tied human scores");
  if ((p.label == Label::kABetter) != (p.g_a > p.g_b)) {
    fail(ErrorKind::kInput, "pair " + p.id + ": label disagrees with g_a/g_b");
  }
}

inline void from_json(const json& j, PreferencePair& p) {
  try {
    p.id = j.at("id").get<std::string>();
    p.lang_pair = j.at("lang_pair").get<std::string>();
    p.src = j.at("src").get<std::string>();
    p.ref = j.contains("ref") && !j["ref"].is_null()
                ? std::optional<std::string>(j["ref"].get<std::string>())
                : std::nullopt;
    p.mt_a = j.at("mt_a").get<std::string>();
    p.mt_b = j.at("mt_b").get<std::string>();
    p.g_a = j.at("g_a").get<double>();
    p.g_b = j.at("g_b").get<double>();
    p.label = label_from_string(j.at("label").get<std::string>());
    p.swapped = j.value("swapped", false);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed pair row: ") + e.what());
  }
  validate(p);
}

inline std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> pairs;
  for (const auto& row : io::read_jsonl(path)) pairs.push_back(row.get<PreferencePair>());
  return pairs;
}

// ---------------------------------------------------------------------------
// load_segments

namespace detail {

// Field lookup shared by the JSONL and TSV readers. A row is a flat map of
// string keys to JSON values; TSV cells are strings or absent.
inline std::optional<std::string> text_field(const json& row, const char* key,
                                             std::string& error) {
  if (!row.contains(key) || row[key].is_null()) return std::nullopt;
  if (!row[key].is_string()) {
    error = std::string("field '") + key + "' is not a string";
    return std::nullopt;
  }
  return row[key].get<std::string>();
}

inline std::optional<double> score_field(const json& row, std::string& error) {
  const char* key = row.contains("human_score") ? "human_score" : "score";
  if (!row.contains(key) || row[key].is_null()) return std::nullopt;
  const json& v = row[key];
  double value = 0.0;
  if (v.is_number()) {
    value = v.get<double>();
  } else if (v.is_string()) {
    const std::string& s = v.get_ref<const std::string&>();
    std::size_t used = 0;
    try {
      value = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) {
      error = "non-numeric human_score '" + s + "'";
      return std::nullopt;
    }
  } else {
    error = "non-numeric human_score";
    return std::nullopt;
  }
  if (!in_score_range(value)) {
    error = "human_score " + v.dump() + " outside [0,100]";
    return std::nullopt;
  }
  return value;
}

inline std::optional<Segment> segment_from_row(const json& row, std::size_t line,
                                               std::string& error) {
  Segment s;
  auto src = text_field(row, "src", error);
  if (!error.empty()) return std::nullopt;
  auto mt = text_field(row, "mt", error);
  if (!error.empty()) return std::nullopt;
  if (!src) {
    error = "missing src";
    return std::nullopt;
  }
  if (!mt) {
    error = "missing mt";
    return std::nullopt;
  }
  s.src = std::move(*src);
  s.mt = std::move(*mt);

  if (row.contains("id") && row["id"].is_number_integer()) {
    s.id = std::to_string(row["id"].get<long long>());
  } else {
    auto id = text_field(row, "id", error);
    if (!error.empty()) return std::nullopt;
    s.id = id.value_or("line-" + std::to_string(line));
  }

  auto lp = text_field(row, "lang_pair", error);
  if (!error.empty()) return std::nullopt;
  s.lang_pair = lp.value_or(std::string(kUndeterminedLangPair));
  if (!is_valid_lang_pair(s.lang_pair)) {
    error = "malformed lang_pair '" + s.lang_pair + "'";
    return std::nullopt;
  }

  s.ref = text_field(row, "ref", error);
  if (!error.empty()) return std::nullopt;
  s.system = text_field(row, "system", error).value_or("");
  if (!error.empty()) return std::nullopt;
  s.domain_tag = text_field(row, "domain_tag", error);
  if (!error.empty()) return std::nullopt;
  s.human_score = score_field(row, error);
  if (!error.empty()) return std::nullopt;
  return s;
}

inline std::string tsv_unescape(std::string_view cell) {
  std::string out;
  out.reserve(cell.size());
  for (std::size_t i = 0; i < cell.size(); ++i) {
    if (cell[i] == '\\' && i + 1 < cell.size()) {
      const char next = cell[i + 1];
      if (next == 't') { out += '\t'; ++i; continue; }
      if (next == 'n') { out += '\n'; ++i; continue; }
      if (next == '\\') { out += '\\'; ++i; continue; }
    }
    out += cell[i];
  }
  return out;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cells;
}

}  // namespace detail

// Reads segments from JSONL (one object per line) or TSV (header row naming
// the same keys; empty cell = absent). Malformed rows are reported, not fatal.
inline SegmentSet load_segments(const std::filesystem::path& path, InputFormat format) {
  const auto lines = io::split_lines(io::read_file(path));
  SegmentSet out;
  std::unordered_map<std::string, std::size_t> seen_ids;

  std::vector<std::string> header;
  std::size_t first = 0;
  if (format == InputFormat::kTsv) {
    while (first < lines.size() && io::is_blank(lines[first])) ++first;
    if (first == lines.size()) return out;
    header = detail::split_tabs(lines[first]);
    ++first;
  }

  for (std::size_t i = first; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (io::is_blank(lines[i])) continue;

    json row;
    if (format == InputFormat::kJsonl) {
      row = json::parse(lines[i], nullptr, false);
      if (row.is_discarded() || !row.is_object()) {
        out.rejected.push_back({line_no, "not a JSON object"});
        continue;
      }
    } else {
      const auto cells = detail::split_tabs(lines[i]);
      if (cells.size() > header.size()) {
        out.rejected.push_back({line_no, "more cells than header columns"});
        continue;
      }
      row = json::object();
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (!cells[c].empty()) row[header[c]] = detail::tsv_unescape(cells[c]);
      }
    }

    std::string error;
    auto segment = detail::segment_from_row(row, line_no, error);
    if (!segment) {
      out.rejected.push_back({line_no, error});
      continue;
    }
    if (auto [it, inserted] = seen_ids.emplace(segment->id, line_no); !inserted) {
      out.rejected.push_back(
          {line_no, "duplicate id '" + segment->id + "' (first at line " +
                        std::to_string(it->second) + ")"});
      continue;
    }
    out.segments.push_back(std::move(*segment));
  }
  return out;
}

// ---------------------------------------------------------------------------
// build_preference_pairs

// Groups segments by exact (lang_pair, src) and emits every unordered
// candidate pair with distinct human scores. Each pair's A/B order is flipped
// by one fair coin from a seeded mt19937_64.
inline PairSet build_preference_pairs(const std::vector<Segment>& segments, std::uint64_t rng_seed) {
  PairSet out;
  std::vector<std::pair<std::string, std::string>> group_keys;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto key = std::make_pair(segments[i].lang_pair, segments[i].src);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) group_keys.push_back(key);
    it->second.push_back(i);
  }

  std::mt19937_64 rng(rng_seed);
  for (const auto& key : group_keys) {
    const auto& members = groups[key];
    bool complete = true;
    for (std::size_t idx : members) {
      if (!segments[idx].human_score) {
        out.diagnostics.push_back("group (" + key.first + ") skipped: segment '" +
                                  segments[idx].id + "' has no human_score");
        complete = false;
        break;
      }
    }
    if (!complete) continue;

    for (std::size_t x = 0; x < members.size(); ++x) {
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        const Segment& first = segments[members[x]];
        const Segment& second = segments[members[y]];
        if (*first.human_score == *second.human_score) continue;

        PreferencePair p;
        p.id = first.id + "|" + second.id;
        p.lang_pair = first.lang_pair;
        p.src = first.src;
        p.ref = first.ref ? first.ref : second.ref;
        p.mt_a = first.mt;
        p.mt_b = second.mt;
        p.g_a = *first.human_score;
        p.g_b = *second.human_score;
        p.swapped = (rng() >> 63) != 0;
        if (p.swapped) {
          std::swap(p.mt_a, p.mt_b);
          std::swap(p.g_a, p.g_b);
        }
        p.label = p.g_a > p.g_b ? Label::kABetter : Label::kBBetter;
        out.pairs.push_back(std::move(p));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt rendering

// Substitutes every {{name}} in `tmpl` from `variables` in a single pass.
// Substituted values are not rescanned. Throws on an unbound placeholder.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& variables) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      fail(ErrorKind::kConfig, "unterminated placeholder in template");
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    const auto it = variables.find(name);
    if (it == variables.end()) fail(ErrorKind::kConfig, "unbound template variable '" + name + "'");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

namespace detail {

inline void bind_langs(std::map<std::string, std::string>& vars, std::string_view lang_pair) {
  auto [src_lang, tgt_lang] = split_lang_pair(lang_pair);
  vars["src_lang"] = std::move(src_lang);
  vars["tgt_lang"] = std::move(tgt_lang);
}

inline PromptText finish(TemplateId id, std::string_view tmpl,
                         std::map<std::string, std::string> vars) {
  PromptText p;
  p.template_id = id;
  p.rendered = render_template(tmpl, vars);
  p.variables = std::move(vars);
  return p;
}

}  // namespace detail

inline PromptText render_prompt(const PreferencePair& pair, TemplateId template_id,
                                bool include_ref) {
  if (template_id != TemplateId::kPairwiseTrain) {
    fail(ErrorKind::kConfig,
         std::string("template ") + std::string(to_string(template_id)) +
             " cannot be rendered from a preference pair");
  }
  std::map<std::string, std::string> vars;
  detail::bind_langs(vars, pair.lang_pair);
  vars["source"] = pair.src;
  vars["translation_a"] = pair.mt_a;
  vars["translation_b"] = pair.mt_b;
  if (include_ref) {
    if (!pair.ref) fail(ErrorKind::kConfig, "pair " + pair.id + " has no reference");
    vars["reference"] = *pair.ref;
    return detail::finish(template_id, templates::kPairwiseTrainWithRef, std::move(vars));
  }
  return detail::finish(template_id, templates::kPairwiseTrainNoRef, std::move(vars));
}

inline PromptText render_prompt(const Segment& segment, TemplateId template_id, bool include_ref) {
  if (template_id != TemplateId::kSingleEval) {
    fail(ErrorKind::kConfig,
         std::string("template ") + std::string(to_string(template_id)) +
             " cannot be rendered from a single segment");
  }
  std::map<std::string, std::string> vars;
  detail::bind_langs(vars, segment.lang_pair);
  vars["source"] = segment.src;
  vars["translation"] = segment.mt;
  if (include_ref) {
    if (!segment.ref) fail(ErrorKind::kConfig, "segment " + segment.id + " has no reference");
    vars["reference"] = *segment.ref;
    return detail::finish(template_id, templates::kSingleEvalWithRef, std::move(vars));
  }
  return detail::finish(template_id, templates::kSingleEvalNoRef, std::move(vars));
}

// Refinement request; omitting `feedback` yields the no-feedback control arm.
inline PromptText render_refine(std::string_view src, std::string_view mt,
                                std::string_view lang_pair,
                                const std::optional<std::string>& feedback) {
  std::map<std::string, std::string> vars;
  detail::bind_langs(vars, lang_pair);
  vars["source"] = std::string(src);
  vars["translation"] = std::string(mt);
  if (feedback) {
    vars["feedback_block"] =
        render_template(templates::kRefineFeedbackBlock, {{"feedback", *feedback}});
    vars["feedback"] = *feedback;
  } else {
    vars["feedback_block"] = "";
  }
  return detail::finish(TemplateId::kRefine, templates::kRefine, std::move(vars));
}

inline PromptText render_faithfulness(std::string_view src, std::string_view mt,
                                      std::string_view explanation, std::string_view lang_pair) {
  std::map<std::string, std::string> vars;
  detail::bind_langs(vars, lang_pair);
  vars["src"] = std::string(src);
  vars["tgt"] = std::string(mt);
  vars["explanation"] = std::string(explanation);
  PromptText p = detail::finish(TemplateId::kFaithfulness, templates::kFaithfulnessUser,
                                std::move(vars));
  p.system = std::string(templates::kFaithfulnessSystem);
  return p;
}

}  // namespace remedy::corpus
