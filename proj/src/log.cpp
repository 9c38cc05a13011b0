#include "haloscope/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string>

namespace haloscope::log {

namespace {

Level parse_env() {
  const char* raw = std::getenv("HALOSCOPE_VERBOSITY");
  if (raw == nullptr) return Level::kWarn;
  const std::string v(raw);
  if (v == "quiet" || v == "0") return Level::kQuiet;
  if (v == "info" || v == "2") return Level::kInfo;
  if (v == "debug" || v == "3") return Level::kDebug;
  return Level::kWarn;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(parse_env())};
  return lvl;
}

}  // namespace

Level level() { return static_cast<Level>(current().load()); }

void set_level(Level lvl) { current().store(static_cast<int>(lvl)); }

void warn(std::string_view msg) {
  if (level() >= Level::kWarn) std::cerr << "warning: " << msg << '\n';
}

void info(std::string_view msg) {
  if (level() >= Level::kInfo) std::cerr << msg << '\n';
}

}  // namespace haloscope::log
