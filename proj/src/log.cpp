#include "optree/log.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace optree::log {
namespace {

Level from_env() {
  const char* raw = std::getenv("OPTREE_LOG");
  if (raw == nullptr) return Level::info;
  const std::string value(raw);
  if (value == "quiet") return Level::quiet;
  if (value == "debug") return Level::debug;
  return Level::info;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(from_env())};
  return lvl;
}

}  // namespace

Level level() { return static_cast<Level>(current().load(std::memory_order_relaxed)); }

void set_level(Level lvl) { current().store(static_cast<int>(lvl), std::memory_order_relaxed); }

}  // namespace optree::log
