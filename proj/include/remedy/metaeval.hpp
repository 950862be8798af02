#pragma once

// Metric meta-evaluation over systems x segments score grids:
// system-level pairwise accuracy, tie-calibrated segment accuracy (acc_eq),
// soft pairwise accuracy, the Perm-Both significance test, and test-time
// score averaging.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/error.hpp"
#include "remedy/io.hpp"

namespace remedy::metaeval {

using json = nlohmann::json;
using Cell = std::optional<double>;

struct ScoreMatrix {
  std::vector<std::string> systems;
  std::vector<std::string> segments;
  std::vector<std::vector<Cell>> values;  // values[system][segment]
  std::string source_label;

  ScoreMatrix() = default;
  ScoreMatrix(std::vector<std::string> system_ids, std::vector<std::string> segment_ids,
              std::string label = {})
      : systems(std::move(system_ids)),
        segments(std::move(segment_ids)),
        values(systems.size(), std::vector<Cell>(segments.size())),
        source_label(std::move(label)) {}

  std::size_t num_systems() const { return systems.size(); }
  std::size_t num_segments() const { return segments.size(); }

  void validate() const {
    if (values.size() != systems.size()) {
      fail(ErrorKind::kInput, "score matrix row count does not match its system list");
    }
    for (const auto& row : values) {
      if (row.size() != segments.size()) {
        fail(ErrorKind::kInput, "score matrix row length does not match its segment list");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// TSV I/O: header "<label>\t<seg id>...", then "<system>\t<score or empty>...".

inline ScoreMatrix parse_scores_tsv(const std::string& text, std::string label = {}) {
  const auto lines = io::split_lines(text);
  std::size_t i = 0;
  while (i < lines.size() && io::is_blank(lines[i])) ++i;
  if (i == lines.size()) fail(ErrorKind::kInput, "scores tsv is empty");

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return cells;
  };

  const auto header = split(lines[i]);
  if (header.size() < 2) fail(ErrorKind::kInput, "scores tsv header has no segment columns");
  ScoreMatrix m;
  m.source_label = std::move(label);
  m.segments.assign(header.begin() + 1, header.end());
  for (++i; i < lines.size(); ++i) {
    if (io::is_blank(lines[i])) continue;
    const auto cells = split(lines[i]);
    if (cells.size() > header.size()) {
      fail(ErrorKind::kInput, "scores tsv line " + std::to_string(i + 1) + ": too many cells");
    }
    m.systems.push_back(cells[0]);
    std::vector<Cell> row(m.segments.size());
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) continue;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size() || !std::isfinite(v)) {
        fail(ErrorKind::kInput, "scores tsv line " + std::to_string(i + 1) +
                                    ": non-numeric cell '" + cells[c] + "'");
      }
      row[c - 1] = v;
    }
    m.values.push_back(std::move(row));
  }
  return m;
}

inline ScoreMatrix load_scores_tsv(const std::filesystem::path& path, std::string label = {}) {
  if (label.empty()) label = path.stem().string();
  return parse_scores_tsv(io::read_file(path), std::move(label));
}

inline std::string to_tsv(const ScoreMatrix& m) {
  std::string out = m.source_label.empty() ? "system" : m.source_label;
  for (const auto& seg : m.segments) out += "\t" + seg;
  out += "\n";
  for (std::size_t s = 0; s < m.systems.size(); ++s) {
    out += m.systems[s];
    for (const auto& cell : m.values[s]) {
      out += "\t";
      if (cell) {
        json j = *cell;
        out += j.dump();
      }
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignment

// Restricts `b` to the systems and segments it shares with `a`, in `a`'s order.
// Returns the restricted copies of both.
inline std::pair<ScoreMatrix, ScoreMatrix> align(const ScoreMatrix& a, const ScoreMatrix& b) {
  a.validate();
  b.validate();
  std::unordered_map<std::string, std::size_t> b_sys;
  std::unordered_map<std::string, std::size_t> b_seg;
  for (std::size_t i = 0; i < b.systems.size(); ++i) b_sys.emplace(b.systems[i], i);
  for (std::size_t j = 0; j < b.segments.size(); ++j) b_seg.emplace(b.segments[j], j);

  std::vector<std::pair<std::size_t, std::size_t>> sys_map;
  std::vector<std::pair<std::size_t, std::size_t>> seg_map;
  for (std::size_t i = 0; i < a.systems.size(); ++i) {
    if (auto it = b_sys.find(a.systems[i]); it != b_sys.end()) sys_map.emplace_back(i, it->second);
  }
  for (std::size_t j = 0; j < a.segments.size(); ++j) {
    if (auto it = b_seg.find(a.segments[j]); it != b_seg.end()) seg_map.emplace_back(j, it->second);
  }

  std::vector<std::string> systems;
  std::vector<std::string> segments;
  for (auto [ia, ib] : sys_map) systems.push_back(a.systems[ia]);
  for (auto [ja, jb] : seg_map) segments.push_back(a.segments[ja]);
  ScoreMatrix ra(systems, segments, a.source_label);
  ScoreMatrix rb(systems, segments, b.source_label);
  for (std::size_t s = 0; s < sys_map.size(); ++s) {
    for (std::size_t g = 0; g < seg_map.size(); ++g) {
      ra.values[s][g] = a.values[sys_map[s].first][seg_map[g].first];
      rb.values[s][g] = b.values[sys_map[s].second][seg_map[g].second];
    }
  }
  return {std::move(ra), std::move(rb)};
}

inline int sign(double x) { return (x > 0.0) - (x < 0.0); }

// ---------------------------------------------------------------------------
// System-level pairwise accuracy

// Per-system means over segments scored in both grids; nullopt when none.
inline std::vector<std::optional<std::pair<double, double>>> paired_system_means(
    const ScoreMatrix& metric, const ScoreMatrix& human) {
  std::vector<std::optional<std::pair<double, double>>> out(metric.num_systems());
  for (std::size_t s = 0; s < metric.num_systems(); ++s) {
    double m_sum = 0.0;
    double h_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < metric.num_segments(); ++g) {
      if (metric.values[s][g] && human.values[s][g]) {
        m_sum += *metric.values[s][g];
        h_sum += *human.values[s][g];
        ++n;
      }
    }
    if (n > 0) out[s] = std::make_pair(m_sum / n, h_sum / n);
  }
  return out;
}

// Requires `metric` and `human` to be aligned (same ids, same order).
inline double system_accuracy_aligned(const ScoreMatrix& metric, const ScoreMatrix& human) {
  const auto means = paired_system_means(metric, human);
  std::size_t comparable = 0;
  for (const auto& m : means) comparable += m.has_value();
  if (comparable < 2) fail(ErrorKind::kInput, "system accuracy needs at least 2 comparable systems");

  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (!means[i]) continue;
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      if (!means[j]) continue;
      const double dh = means[i]->second - means[j]->second;
      if (dh == 0.0) continue;
      ++total;
      const double dm = means[i]->first - means[j]->first;
      if (dm != 0.0 && sign(dm) == sign(dh)) ++correct;
    }
  }
  if (total == 0) fail(ErrorKind::kInput, "system accuracy: every human system mean is tied");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline double system_pairwise_accuracy(const ScoreMatrix& metric, const ScoreMatrix& human) {
  const auto [m, h] = align(metric, human);
  return system_accuracy_aligned(m, h);
}

// ---------------------------------------------------------------------------
// Tie-calibrated segment-level accuracy

struct SegmentComparison {
  double metric_gap = 0.0;  // |m_i - m_j|
  bool human_tie = false;
  bool ordered_correctly = false;  // metric sign matches a non-tied human sign
};

// Every system pair on every segment where both grids score both systems.
inline std::vector<SegmentComparison> segment_comparisons(const ScoreMatrix& metric,
                                                          const ScoreMatrix& human) {
  std::vector<SegmentComparison> out;
  for (std::size_t g = 0; g < metric.num_segments(); ++g) {
    for (std::size_t i = 0; i < metric.num_systems(); ++i) {
      const Cell& mi = metric.values[i][g];
      const Cell& hi = human.values[i][g];
      if (!mi || !hi) continue;
      for (std::size_t j = i + 1; j < metric.num_systems(); ++j) {
        const Cell& mj = metric.values[j][g];
        const Cell& hj = human.values[j][g];
        if (!mj || !hj) continue;
        SegmentComparison c;
        const double dm = *mi - *mj;
        const double dh = *hi - *hj;
        c.metric_gap = std::abs(dm);
        c.human_tie = dh == 0.0;
        c.ordered_correctly = !c.human_tie && dm != 0.0 && sign(dm) == sign(dh);
        out.push_back(c);
      }
    }
  }
  return out;
}

struct TieCalibratedResult {
  double acc_eq = 0.0;
  double epsilon_star = 0.0;
};

// acc_eq(eps): a pair counts as predicted-tied when |m_i - m_j| <= eps; it is
// correct when the tie prediction matches an exact human tie, or when neither
// is tied and the orderings agree. acc_eq is piecewise constant in eps, so it
// suffices to test eps = 0, the midpoints between consecutive distinct gaps,
// and the largest gap (everything tied). Ties in acc_eq go to the smaller eps.
inline TieCalibratedResult tie_calibrate(std::vector<SegmentComparison> pairs) {
  if (pairs.empty()) fail(ErrorKind::kInput, "tie calibration: empty comparison set");
  std::sort(pairs.begin(), pairs.end(),
            [](const SegmentComparison& a, const SegmentComparison& b) {
              return a.metric_gap < b.metric_gap;
            });
  const double total = static_cast<double>(pairs.size());

  // Start with nothing predicted tied, then admit gap groups in order.
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += p.ordered_correctly;

  std::size_t idx = 0;
  auto admit_group = [&](double gap) {
    while (idx < pairs.size() && pairs[idx].metric_gap <= gap) {
      correct -= pairs[idx].ordered_correctly;
      correct += pairs[idx].human_tie;
      ++idx;
    }
  };

  admit_group(0.0);
  TieCalibratedResult best{static_cast<double>(correct) / total, 0.0};

  while (idx < pairs.size()) {
    const double gap = pairs[idx].metric_gap;
    admit_group(gap);
    const double eps = idx < pairs.size() ? 0.5 * (gap + pairs[idx].metric_gap) : gap;
    const double acc = static_cast<double>(correct) / total;
    if (acc > best.acc_eq) best = {acc, eps};
  }
  return best;
}

// Accuracy of a fixed eps, used to re-check calibration results.
inline double acc_eq_at(const std::vector<SegmentComparison>& pairs, double epsilon) {
  if (pairs.empty()) fail(ErrorKind::kInput, "acc_eq: empty comparison set");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    const bool predicted_tie = p.metric_gap <= epsilon;
    correct += predicted_tie ? p.human_tie : p.ordered_correctly;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

inline TieCalibratedResult tie_calibrated_accuracy(const ScoreMatrix& metric_seg,
                                                   const ScoreMatrix& human_seg) {
  const auto [m, h] = align(metric_seg, human_seg);
  return tie_calibrate(segment_comparisons(m, h));
}

// ---------------------------------------------------------------------------
// Soft pairwise accuracy

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Seed for an unordered system pair, independent of enumeration order.
inline std::uint64_t pair_seed(std::uint64_t seed, const std::string& a, const std::string& b) {
  const auto& lo = a < b ? a : b;
  const auto& hi = a < b ? b : a;
  std::uint64_t h = fnv1a(lo);
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(hi, h);
  return h ^ (seed * 0x9e3779b97f4a7c15ULL);
}

}  // namespace detail

// Sign patterns for n paired differences: exhaustive when 2^n <= resamples,
// otherwise `resamples` random patterns.
inline std::vector<std::vector<bool>> sign_flip_patterns(std::size_t n, int resamples,
                                                         std::mt19937_64& rng) {
  std::vector<std::vector<bool>> out;
  if (n < 63 && (1ULL << n) <= static_cast<std::uint64_t>(resamples)) {
    const std::uint64_t count = 1ULL << n;
    out.reserve(count);
    for (std::uint64_t p = 0; p < count; ++p) {
      std::vector<bool> flips(n);
      for (std::size_t k = 0; k < n; ++k) flips[k] = ((p >> k) & 1ULL) != 0;
      out.push_back(std::move(flips));
    }
    return out;
  }
  out.reserve(resamples);
  for (int r = 0; r < resamples; ++r) {
    std::vector<bool> flips(n);
    for (std::size_t k = 0; k < n; ++k) flips[k] = (rng() >> 63) != 0;
    out.push_back(std::move(flips));
  }
  return out;
}

// Mid-p value P(T* > T) + P(T* = T) / 2 of the paired sign-flip statistic.
inline double sign_flip_p_value(const std::vector<double>& d,
                                const std::vector<std::vector<bool>>& patterns) {
  double observed = 0.0;
  double scale = 1.0;
  for (double x : d) {
    observed += x;
    scale += std::abs(x);
  }
  const double tol = 1e-9 * scale;
  double above = 0.0;
  double equal = 0.0;
  for (const auto& flips : patterns) {
    double t = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) t += flips[k] ? -d[k] : d[k];
    if (t > observed + tol) {
      above += 1.0;
    } else if (t >= observed - tol) {
      equal += 1.0;
    }
  }
  return (above + 0.5 * equal) / static_cast<double>(patterns.size());
}

// SPA = mean over system pairs of 1 - |p_h - p_m|, where p is the one-sided
// paired sign-flip p-value that system i beats system j. Human and metric
// p-values for a pair share the same sign patterns.
inline double soft_pairwise_accuracy(const ScoreMatrix& metric_seg, const ScoreMatrix& human_seg,
                                     int resamples, std::uint64_t rng_seed) {
  if (resamples < 100) fail(ErrorKind::kConfig, "SPA needs at least 100 resamples");
  const auto [m, h] = align(metric_seg, human_seg);
  if (m.num_systems() < 2) fail(ErrorKind::kInput, "SPA needs at least 2 systems");

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m.num_systems(); ++i) {
    for (std::size_t j = i + 1; j < m.num_systems(); ++j) {
      std::vector<double> dh;
      std::vector<double> dm;
      for (std::size_t g = 0; g < m.num_segments(); ++g) {
        if (m.values[i][g] && m.values[j][g] && h.values[i][g] && h.values[j][g]) {
          dh.push_back(*h.values[i][g] - *h.values[j][g]);
          dm.push_back(*m.values[i][g] - *m.values[j][g]);
        }
      }
      if (dh.empty()) continue;
      std::mt19937_64 rng(detail::pair_seed(rng_seed, m.systems[i], m.systems[j]));
      const auto patterns = sign_flip_patterns(dh.size(), resamples, rng);
      const double p_h = sign_flip_p_value(dh, patterns);
      const double p_m = sign_flip_p_value(dm, patterns);
      total += 1.0 - std::abs(p_h - p_m);
      ++pairs;
    }
  }
  if (pairs == 0) fail(ErrorKind::kInput, "SPA: no system pair shares a scored segment");
  return total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Perm-Both significance test

enum class Statistic { kSystemAccuracy, kSegmentAccEq };

inline std::string_view to_string(Statistic s) {
  return s == Statistic::kSystemAccuracy ? "SYS_ACC" : "SEG_ACC_EQ";
}

inline double evaluate_statistic(Statistic stat, const ScoreMatrix& metric,
                                 const ScoreMatrix& human) {
  if (stat == Statistic::kSystemAccuracy) return system_accuracy_aligned(metric, human);
  return tie_calibrate(segment_comparisons(metric, human)).acc_eq;
}

struct PermBothResult {
  double observed_delta = 0.0;  // stat(x) - stat(y)
  double p_value = 1.0;
  bool significant = false;
};

// Null distribution: per resample, each (system, segment) cell of x and y is
// swapped with probability 1/2. p = share of |null delta| >= |observed delta|.
inline PermBothResult perm_both_test(const ScoreMatrix& metric_x, const ScoreMatrix& metric_y,
                                     const ScoreMatrix& human, Statistic stat, int resamples,
                                     double alpha, std::uint64_t rng_seed) {
  if (resamples < 1) fail(ErrorKind::kConfig, "perm-both needs at least one resample");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::kConfig, "alpha must lie in (0,1)");
  metric_x.validate();
  metric_y.validate();
  const auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  if (sorted(metric_x.systems) != sorted(metric_y.systems) ||
      sorted(metric_x.segments) != sorted(metric_y.segments)) {
    fail(ErrorKind::kInput, "perm-both: metric grids cover different systems or segments");
  }
  auto [x, h] = align(metric_x, human);
  const ScoreMatrix y = align(x, metric_y).second;
  if (x.num_systems() != metric_x.num_systems() || x.num_segments() != metric_x.num_segments()) {
    fail(ErrorKind::kInput, "perm-both: human grid does not cover the metric grid");
  }

  PermBothResult out;
  out.observed_delta = evaluate_statistic(stat, x, h) - evaluate_statistic(stat, y, h);
  const double observed = std::abs(out.observed_delta);
  const double tol = 1e-12;

  std::mt19937_64 rng(rng_seed);
  ScoreMatrix xs = x;
  ScoreMatrix ys = y;
  int at_least = 0;
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t s = 0; s < x.num_systems(); ++s) {
      for (std::size_t g = 0; g < x.num_segments(); ++g) {
        const bool swap = (rng() >> 63) != 0;
        xs.values[s][g] = swap ? y.values[s][g] : x.values[s][g];
        ys.values[s][g] = swap ? x.values[s][g] : y.values[s][g];
      }
    }
    const double delta = evaluate_statistic(stat, xs, h) - evaluate_statistic(stat, ys, h);
    if (std::abs(delta) >= observed - tol) ++at_least;
  }
  out.p_value = static_cast<double>(at_least) / static_cast<double>(resamples);
  out.significant = out.p_value < alpha;
  return out;
}

// ---------------------------------------------------------------------------
// Test-time scaling

struct AggregatedScore {
  std::optional<double> score;  // missing when no pass produced a score
  std::size_t passes_used = 0;
};

// Elementwise mean over passes, skipping missing entries. Values are summed in
// sorted order so the result does not depend on pass order.
inline std::vector<AggregatedScore> tts_aggregate(const std::vector<std::vector<Cell>>& passes) {
  if (passes.empty()) fail(ErrorKind::kConfig, "tts_aggregate: no passes");
  const std::size_t n = passes.front().size();
  for (const auto& p : passes) {
    if (p.size() != n) fail(ErrorKind::kConfig, "tts_aggregate: passes differ in length");
  }
  std::vector<AggregatedScore> out(n);
  std::vector<double> vals;
  for (std::size_t k = 0; k < n; ++k) {
    vals.clear();
    for (const auto& p : passes) {
      if (p[k]) vals.push_back(*p[k]);
    }
    out[k].passes_used = vals.size();
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    for (double v : vals) sum += v;
    out[k].score = std::clamp(sum / static_cast<double>(vals.size()), vals.front(), vals.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct MetricReport {
  std::string name;
  double system_acc = 0.0;
  double seg_acc_eq = 0.0;
  double epsilon_star = 0.0;
  double spa = 0.0;
};

struct MetaEvalOptions {
  int spa_resamples = 1000;
  int perm_resamples = 1000;
  double alpha = 0.05;
  std::uint64_t rng_seed = 7;
};

struct MetaEvalReport {
  std::vector<MetricReport> metrics;
  // significance[stat][i][j]: Perm-Both p-value for metric i vs metric j.
  std::vector<std::vector<double>> sys_acc_p;
  std::vector<std::vector<double>> seg_acc_eq_p;
};

inline MetaEvalReport run_metaeval(const ScoreMatrix& human, const std::vector<ScoreMatrix>& metrics,
                                   const MetaEvalOptions& options) {
  if (metrics.empty()) fail(ErrorKind::kConfig, "metaeval: no metric grids");
  MetaEvalReport report;
  for (const auto& m : metrics) {
    MetricReport r;
    r.name = m.source_label;
    r.system_acc = system_pairwise_accuracy(m, human);
    const auto tie = tie_calibrated_accuracy(m, human);
    r.seg_acc_eq = tie.acc_eq;
    r.epsilon_star = tie.epsilon_star;
    r.spa = soft_pairwise_accuracy(m, human, options.spa_resamples, options.rng_seed);
    report.metrics.push_back(std::move(r));
  }
  if (metrics.size() >= 2) {
    const std::size_t k = metrics.size();
    report.sys_acc_p.assign(k, std::vector<double>(k, 1.0));
    report.seg_acc_eq_p.assign(k, std::vector<double>(k, 1.0));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        const auto sys = perm_both_test(metrics[i], metrics[j], human, Statistic::kSystemAccuracy,
                                        options.perm_resamples, options.alpha, options.rng_seed);
        const auto seg = perm_both_test(metrics[i], metrics[j], human, Statistic::kSegmentAccEq,
                                        options.perm_resamples, options.alpha, options.rng_seed);
        report.sys_acc_p[i][j] = report.sys_acc_p[j][i] = sys.p_value;
        report.seg_acc_eq_p[i][j] = report.seg_acc_eq_p[j][i] = seg.p_value;
      }
    }
  }
  return report;
}

inline json to_json(const MetaEvalReport& r, const MetaEvalOptions& options) {
  json metrics = json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back({{"name", m.name},
                       {"system_acc", m.system_acc},
                       {"seg_acc_eq", m.seg_acc_eq},
                       {"epsilon_star", m.epsilon_star},
                       {"spa", m.spa}});
  }
  json out{{"metrics", metrics},
           {"options",
            {{"spa_resamples", options.spa_resamples},
             {"perm_resamples", options.perm_resamples},
             {"alpha", options.alpha},
             {"seed", options.rng_seed}}}};
  if (!r.sys_acc_p.empty()) {
    json names = json::array();
    for (const auto& m : r.metrics) names.push_back(m.name);
    out["significance"] = {{"metrics", names},
                           {"SYS_ACC", r.sys_acc_p},
                           {"SEG_ACC_EQ", r.seg_acc_eq_p}};
  }
  return out;
}

}  // namespace remedy::metaeval
