#pragma once

#include <string_view>

namespace haloscope::log {

enum class Level { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Current verbosity. Initialised from HALOSCOPE_VERBOSITY (quiet|warn|info|debug
/// or 0..3) on first use; defaults to warn.
Level level();
void set_level(Level lvl);

void warn(std::string_view msg);
void info(std::string_view msg);

}  // namespace haloscope::log
