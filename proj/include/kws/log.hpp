#pragma once

#include <string_view>

namespace kws::log {

enum class Level { kDebug = 0, kInfo = 1, kWarning = 2, kSilent = 3 };

void set_level(Level level);
Level level();

void info(std::string_view msg);
void warn(std::string_view msg);
void debug(std::string_view msg);

}  // namespace kws::log
