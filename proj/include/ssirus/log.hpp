#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace ssirus {

enum class LogLevel { quiet = 0, warning = 1, info = 2, debug = 3 };

inline std::atomic<int>& log_threshold() {
  static std::atomic<int> level{static_cast<int>(LogLevel::warning)};
  return level;
}

inline void set_log_level(LogLevel level) { log_threshold().store(static_cast<int>(level)); }

inline void log_message(LogLevel level, const std::string& text) {
  if (static_cast<int>(level) > log_threshold().load()) return;
  static std::mutex m;
  std::lock_guard<std::mutex> lock(m);
  static const char* tags[] = {"", "warning", "info", "debug"};
  std::cerr << "[ssirus " << tags[static_cast<int>(level)] << "] " << text << '\n';
}

inline void log_warning(const std::string& text) { log_message(LogLevel::warning, text); }
inline void log_info(const std::string& text) { log_message(LogLevel::info, text); }
inline void log_debug(const std::string& text) { log_message(LogLevel::debug, text); }

}  // namespace ssirus
