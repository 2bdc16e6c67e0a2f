#include "mi/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

namespace mi {

namespace {
LogLevel g_level = LogLevel::warn;

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    default: return "off";
  }
}
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }

LogLevel log_level() { return g_level; }

LogLevel log_level_from_env() {
  const char* raw = std::getenv("MI_DECODE_LOG");
  if (raw == nullptr) return LogLevel::warn;
  const std::string v(raw);
  if (v == "debug") return LogLevel::debug;
  if (v == "info") return LogLevel::info;
  if (v == "warn") return LogLevel::warn;
  if (v == "error") return LogLevel::error;
  if (v == "off" || v == "quiet") return LogLevel::off;
  return LogLevel::warn;
}

void log_message(LogLevel level, const std::string& msg) {
  if (level < g_level || g_level == LogLevel::off) return;
  std::fprintf(stderr, "[mi_decode %s] %s\n", level_tag(level), msg.c_str());
}

}  // namespace mi
