#pragma once

#include <iostream>
#include <string_view>

namespace pmkg {

enum class LogLevel { quiet, warn, info };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::warn;
  return level;
}

inline void log_warn(std::string_view message) {
  if (log_level() >= LogLevel::warn) std::cerr << "[warn] " << message << '\n';
}

inline void log_info(std::string_view message) {
  if (log_level() >= LogLevel::info) std::cerr << "[info] " << message << '\n';
}

}  // namespace pmkg
