#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace layoutgraph::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Threshold comes from LAYOUTGRAPH_LOG (debug|info|warn|error|off), default info.
inline Level threshold() {
  static Level level = [] {
    const char* env = std::getenv("LAYOUTGRAPH_LOG");
    if (env == nullptr) return Level::info;
    const std::string v(env);
    if (v == "debug") return Level::debug;
    if (v == "warn") return Level::warn;
    if (v == "error") return Level::error;
    if (v == "off") return Level::off;
    return Level::info;
  }();
  return level;
}

inline void emit(Level level, const char* tag, const std::string& message) {
  if (level < threshold()) return;
  std::fprintf(stderr, "[%s] %s\n", tag, message.c_str());
}

inline void debug(const std::string& m) { emit(Level::debug, "debug", m); }
inline void info(const std::string& m) { emit(Level::info, "info", m); }
inline void warn(const std::string& m) { emit(Level::warn, "warn", m); }
inline void error(const std::string& m) { emit(Level::error, "error", m); }

}  // namespace layoutgraph::log
