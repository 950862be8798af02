#pragma once

// Out-of-distribution challenge items built from clean segments, plus a
// per-category robustness summary of metric scores on them.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/corpus.hpp"
#include "remedy/error.hpp"

namespace remedy::challenge {

using json = nlohmann::json;

enum class Category { kEmptyMt, kEmptySrcRef, kSrcCopy, kWrongLang, kMixLang, kUnrelatedMt };
enum class Expectation { kNearZero, kModerate };

inline constexpr Category kAllCategories[] = {Category::kEmptyMt,   Category::kEmptySrcRef,
                                              Category::kSrcCopy,   Category::kWrongLang,
                                              Category::kMixLang,   Category::kUnrelatedMt};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::kEmptyMt: return "empty_mt";
    case Category::kEmptySrcRef: return "empty_src_ref";
    case Category::kSrcCopy: return "src_copy";
    case Category::kWrongLang: return "wrong_lang";
    case Category::kMixLang: return "mix_lang";
    case Category::kUnrelatedMt: return "unrelated_mt";
  }
  return "empty_mt";
}

inline Category category_from_string(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  fail(ErrorKind::kConfig, "unknown challenge category '" + std::string(s) + "'");
}

inline std::string_view to_string(Expectation e) {
  return e == Expectation::kNearZero ? "NEAR_ZERO" : "MODERATE";
}

inline Expectation expectation_for(Category c) {
  return c == Category::kMixLang ? Expectation::kModerate : Expectation::kNearZero;
}

inline bool needs_pool(Category c) {
  return c == Category::kWrongLang || c == Category::kMixLang || c == Category::kUnrelatedMt;
}

struct ChallengeItem {
  std::string id;
  std::string base_segment_id;
  std::string lang_pair;
  Category category = Category::kEmptyMt;
  std::string src;
  std::string mt;
  std::optional<std::string> ref;
  Expectation expectation = Expectation::kNearZero;
};

// User-supplied text for the categories that cannot be derived from the
// segment itself. `by_segment` entries take precedence over random draws
// from `texts`.
struct AuxPool {
  std::unordered_map<std::string, std::string> by_segment;
  std::vector<std::string> texts;

  bool empty() const { return by_segment.empty() && texts.empty(); }
};

struct AuxPools {
  AuxPool wrong_lang;
  AuxPool mix_lang;
  AuxPool unrelated;

  const AuxPool& for_category(Category c) const {
    switch (c) {
      case Category::kWrongLang: return wrong_lang;
      case Category::kMixLang: return mix_lang;
      default: return unrelated;
    }
  }
};

struct ChallengeSet {
  std::vector<ChallengeItem> items;
  std::vector<std::string> diagnostics;
};

inline void to_json(json& j, const ChallengeItem& item) {
  j = json{{"id", item.id},
           {"base_segment_id", item.base_segment_id},
           {"lang_pair", item.lang_pair},
           {"category", to_string(item.category)},
           {"src", item.src},
           {"mt", item.mt}};
  if (item.ref) j["ref"] = *item.ref;
  j["expectation"] = to_string(item.expectation);
}

inline void from_json(const json& j, ChallengeItem& item) {
  try {
    item.id = j.at("id").get<std::string>();
    item.base_segment_id = j.at("base_segment_id").get<std::string>();
    item.lang_pair = j.value("lang_pair", std::string(corpus::kUndeterminedLangPair));
    item.category = category_from_string(j.at("category").get<std::string>());
    item.src = j.at("src").get<std::string>();
    item.mt = j.at("mt").get<std::string>();
    item.ref = j.contains("ref") && !j["ref"].is_null()
                   ? std::optional<std::string>(j["ref"].get<std::string>())
                   : std::nullopt;
    item.expectation = expectation_for(item.category);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed challenge row: ") + e.what());
  }
}

// Checks the structural contract of an item's category.
inline bool satisfies_contract(const ChallengeItem& item, const corpus::Segment& base) {
  if (item.expectation != expectation_for(item.category)) return false;
  switch (item.category) {
    case Category::kEmptyMt: return item.mt.empty();
    case Category::kSrcCopy: return item.mt == item.src && item.src == base.src;
    case Category::kEmptySrcRef:
      return item.src.empty() && item.ref && item.ref->empty() && !item.mt.empty() &&
             item.mt == base.mt;
    case Category::kUnrelatedMt:
      return !item.mt.empty() && item.mt != base.mt && (!base.ref || item.mt != *base.ref);
    case Category::kWrongLang:
    case Category::kMixLang: return !item.mt.empty() && item.src == base.src;
  }
  return false;
}

// One item per (segment, requested category), in segment order then category
// order. Pool draws come from one mt19937_64 seeded with `rng_seed`.
inline ChallengeSet generate(const std::vector<corpus::Segment>& segments,
                             const std::vector<Category>& categories, const AuxPools& aux,
                             std::uint64_t rng_seed) {
  for (Category c : categories) {
    if (needs_pool(c) && aux.for_category(c).empty()) {
      fail(ErrorKind::kConfig,
           "category " + std::string(to_string(c)) + " requires an auxiliary text pool");
    }
  }

  ChallengeSet out;
  std::mt19937_64 rng(rng_seed);
  auto draw = [&rng](const std::vector<std::string>& texts) -> std::size_t {
    return std::uniform_int_distribution<std::size_t>(0, texts.size() - 1)(rng);
  };

  for (const auto& seg : segments) {
    for (Category c : categories) {
      ChallengeItem item;
      item.id = seg.id + ":" + std::string(to_string(c));
      item.base_segment_id = seg.id;
      item.lang_pair = seg.lang_pair;
      item.category = c;
      item.expectation = expectation_for(c);
      item.src = seg.src;
      item.ref = seg.ref;

      switch (c) {
        case Category::kEmptyMt:
          item.mt = "";
          break;
        case Category::kEmptySrcRef:
          if (seg.mt.empty()) {
            out.diagnostics.push_back(item.id + ": skipped, base translation is empty");
            continue;
          }
          item.src = "";
          item.ref = "";
          item.mt = seg.mt;
          break;
        case Category::kSrcCopy:
          item.mt = seg.src;
          break;
        case Category::kWrongLang:
        case Category::kMixLang: {
          const AuxPool& pool = aux.for_category(c);
          if (auto it = pool.by_segment.find(seg.id); it != pool.by_segment.end()) {
            item.mt = it->second;
          } else if (!pool.texts.empty()) {
            item.mt = pool.texts[draw(pool.texts)];
          } else {
            out.diagnostics.push_back(item.id + ": skipped, no pool text for this segment");
            continue;
          }
          break;
        }
        case Category::kUnrelatedMt: {
          const AuxPool& pool = aux.unrelated;
          std::vector<std::string> eligible;
          for (const auto& t : pool.texts) {
            if (!t.empty() && t != seg.mt && (!seg.ref || t != *seg.ref)) eligible.push_back(t);
          }
          if (eligible.empty()) {
            out.diagnostics.push_back(item.id + ": skipped, pool has no unrelated text");
            continue;
          }
          item.mt = eligible[draw(eligible)];
          break;
        }
      }
      out.items.push_back(std::move(item));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Robustness report

struct Bands {
  double near_zero_max_mean = 15.0;
  double moderate_min_mean = 20.0;
  double moderate_max_mean = 80.0;
  double low_score_threshold = 15.0;  // for fraction_below
};

struct CategorySummary {
  Category category = Category::kEmptyMt;
  Expectation expectation = Expectation::kNearZero;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double fraction_below = 0.0;
  bool pass = false;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<CategorySummary> robustness_report(
    const std::vector<ChallengeItem>& items, const std::unordered_map<std::string, double>& scores,
    const Bands& bands = {}) {
  std::map<Category, std::vector<double>> by_category;
  for (const auto& item : items) {
    const auto it = scores.find(item.id);
    if (it == scores.end()) fail(ErrorKind::kInput, "challenge item '" + item.id + "' is unscored");
    by_category[item.category].push_back(it->second);
  }

  std::vector<CategorySummary> out;
  for (const auto& [category, values] : by_category) {
    CategorySummary s;
    s.category = category;
    s.expectation = expectation_for(category);
    s.count = values.size();
    double sum = 0.0;
    std::size_t below = 0;
    for (double v : values) {
      sum += v;
      below += v < bands.low_score_threshold;
    }
    s.mean = sum / static_cast<double>(values.size());
    s.median = median_of(values);
    s.fraction_below = static_cast<double>(below) / static_cast<double>(values.size());
    s.pass = s.expectation == Expectation::kNearZero
                 ? s.mean <= bands.near_zero_max_mean
                 : s.mean >= bands.moderate_min_mean && s.mean <= bands.moderate_max_mean;
    out.push_back(s);
  }
  return out;
}

inline json to_json(const std::vector<CategorySummary>& summaries) {
  json out = json::array();
  for (const auto& s : summaries) {
    out.push_back({{"category", to_string(s.category)},
                   {"expectation", to_string(s.expectation)},
                   {"count", s.count},
                   {"mean", s.mean},
                   {"median", s.median},
                   {"fraction_below", s.fraction_below},
                   {"pass", s.pass}});
  }
  return out;
}

}  // namespace remedy::challenge
