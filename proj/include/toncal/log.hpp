#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace toncal {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from TON_CALIB_LOG in {error, info, debug}; default info.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("TON_CALIB_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

#define TONCAL_LOG(level, ...)                                      \
  do {                                                              \
    if (static_cast<int>(level) <= static_cast<int>(::toncal::log_level())) { \
      std::fprintf(stderr, __VA_ARGS__);                            \
      std::fprintf(stderr, "\n");                                   \
    }                                                               \
  } while (false)

#define TONCAL_ERROR(...) TONCAL_LOG(::toncal::LogLevel::kError, __VA_ARGS__)
#define TONCAL_INFO(...) TONCAL_LOG(::toncal::LogLevel::kInfo, __VA_ARGS__)
#define TONCAL_DEBUG(...) TONCAL_LOG(::toncal::LogLevel::kDebug, __VA_ARGS__)

}  // namespace toncal
