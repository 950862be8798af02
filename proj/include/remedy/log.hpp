#pragma once

// Minimal leveled logging to stderr.

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

#include "remedy/error.hpp"

namespace remedy::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::kWarn};
  return level;
}

inline void set_level(Level level) { threshold().store(level); }

inline Level level_from_string(std::string_view s) {
  if (s == "debug") return Level::kDebug;
  if (s == "info") return Level::kInfo;
  if (s == "warn") return Level::kWarn;
  if (s == "error") return Level::kError;
  if (s == "off") return Level::kOff;
  fail(ErrorKind::kConfig, "unknown log level '" + std::string(s) + "'");
}

inline std::string_view to_string(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    case Level::kOff: return "off";
  }
  return "off";
}

inline void write(Level level, std::string_view message) {
  if (level < threshold().load()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << to_string(level) << "] " << message << '\n';
}

inline void debug(std::string_view m) { write(Level::kDebug, m); }
inline void info(std::string_view m) { write(Level::kInfo, m); }
inline void warn(std::string_view m) { write(Level::kWarn, m); }
inline void error(std::string_view m) { write(Level::kError, m); }

}  // namespace remedy::log
