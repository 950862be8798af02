#pragma once

// Flat key-value config files.
//
//   # comment
//   key = value
//   name = "quoted value"
//   [section]
//   key = value        -> "section.key"
//
// Values are kept as strings; typed getters convert on read.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>

#include "remedy/error.hpp"
#include "remedy/io.hpp"

namespace remedy::config {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::string unquote(std::string_view v, const std::string& where) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return std::string(v.substr(1, v.size() - 2));
  }
  if (!v.empty() && (v.front() == '"' || v.front() == '\'')) {
    fail(ErrorKind::kConfig, where + ": unterminated quoted value");
  }
  // Unquoted values may carry a trailing comment.
  const auto hash = v.find(" #");
  return std::string(trim(v.substr(0, hash)));
}

}  // namespace detail

inline KeyValues parse(std::string_view text, const std::string& origin = "<config>") {
  KeyValues out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = detail::trim(text.substr(start, end - start));
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!line.empty() && line.front() != '#') {
      if (line.front() == '[') {
        if (line.back() != ']') fail(ErrorKind::kConfig, where + ": malformed section header");
        section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      } else {
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(ErrorKind::kConfig, where + ": expected key = value");
        const auto key = detail::trim(line.substr(0, eq));
        if (key.empty()) fail(ErrorKind::kConfig, where + ": empty key");
        const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
        if (out.count(full)) fail(ErrorKind::kConfig, where + ": duplicate key '" + full + "'");
        out[full] = detail::unquote(detail::trim(line.substr(eq + 1)), where);
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

inline KeyValues load(const std::filesystem::path& path) {
  return parse(io::read_file(path), path.string());
}

// Keys under `prefix.` with the prefix stripped.
inline KeyValues subsection(const KeyValues& kv, std::string_view prefix) {
  KeyValues out;
  const std::string p = std::string(prefix) + ".";
  for (const auto& [k, v] : kv) {
    if (k.rfind(p, 0) == 0) out[k.substr(p.size())] = v;
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorKind::kConfig, key + ": expected a number, got '" + v + "'");
  }
  return out;
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorKind::kConfig, key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::kConfig, key + ": expected a boolean, got '" + v + "'");
}

// Assigns kv[key] into `target` when present.
inline void get(const KeyValues& kv, const std::string& key, std::string& target) {
  if (auto it = kv.find(key); it != kv.end()) target = it->second;
}
inline void get(const KeyValues& kv, const std::string& key, double& target) {
  if (auto it = kv.find(key); it != kv.end()) target = to_double(key, it->second);
}
inline void get(const KeyValues& kv, const std::string& key, bool& target) {
  if (auto it = kv.find(key); it != kv.end()) target = to_bool(key, it->second);
}
template <typename Int>
  requires std::is_integral_v<Int>
inline void get(const KeyValues& kv, const std::string& key, Int& target) {
  if (auto it = kv.find(key); it != kv.end()) {
    const auto v = to_int(key, it->second);
    if (std::is_unsigned_v<Int> && v < 0) fail(ErrorKind::kConfig, key + ": must be non-negative");
    target = static_cast<Int>(v);
  }
}
inline void get(const KeyValues& kv, const std::string& key, std::optional<double>& target) {
  if (auto it = kv.find(key); it != kv.end()) target = to_double(key, it->second);
}

// Rejects keys outside `known`, so typos fail loudly.
template <typename Keys>
void require_known(const KeyValues& kv, const Keys& known, std::string_view what) {
  for (const auto& [k, v] : kv) {
    bool found = false;
    for (const auto& name : known) found = found || k == name;
    if (!found) fail(ErrorKind::kConfig, std::string(what) + ": unknown key '" + k + "'");
  }
}

}  // namespace remedy::config
