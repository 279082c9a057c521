#include "kws/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace kws::log {
namespace {

std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, std::string_view msg) {
  if (lvl < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << tag << msg << '\n';
}

}  // namespace

void set_level(Level lvl) { g_level.store(lvl); }
Level level() { return g_level.load(); }

void info(std::string_view msg) { emit(Level::kInfo, "LOG: ", msg); }
void warn(std::string_view msg) { emit(Level::kWarning, "WARNING: ", msg); }
void debug(std::string_view msg) { emit(Level::kDebug, "DEBUG: ", msg); }

}  // namespace kws::log
