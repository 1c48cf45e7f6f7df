#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace optree::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Reads OPTREE_LOG once; unknown values fall back to info.
Level level();
void set_level(Level level);

inline bool enabled(Level at) { return static_cast<int>(level()) >= static_cast<int>(at); }

template <typename... Args>
void write(Level at, const Args&... args) {
  if (!enabled(at)) return;
  std::ostringstream line;
  (line << ... << args);
  std::cerr << line.str() << '\n';
}

template <typename... Args>
void info(const Args&... args) {
  write(Level::info, args...);
}

template <typename... Args>
void debug(const Args&... args) {
  write(Level::debug, args...);
}

}  // namespace optree::log
