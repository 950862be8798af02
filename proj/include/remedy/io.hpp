#pragma once

// Small file helpers shared by the loaders and the CLI.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedy/error.hpp"

namespace remedy::io {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kInput, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::kInput, "write failed for " + path.string());
}

// Splits on '\n' and drops a trailing '\r' from each line.
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (end == text.size() && line.empty()) break;
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

inline bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// Reads a JSONL file where every non-blank line must be an object.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> rows;
  const auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    json row = json::parse(lines[i], nullptr, false);
    if (row.is_discarded() || !row.is_object()) {
      fail(ErrorKind::kInput,
           path.string() + ":" + std::to_string(i + 1) + ": not a JSON object");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Compact single-line dump; invalid UTF-8 in model output is replaced, not fatal.
inline std::string dump_line(const json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::replace);
}

template <typename Range>
std::string to_jsonl(const Range& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += dump_line(json(row));
    out += '\n';
  }
  return out;
}

}  // namespace remedy::io
