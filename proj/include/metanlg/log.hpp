// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace metanlg::log {

enum class Level { Debug = 0, Info = 1, Warning = 2, Error = 3, Off = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::Warning};
  return level;
}

inline void set_level(Level level) { threshold().store(level); }

inline void write(Level level, std::string_view msg) {
  if (level < threshold().load()) return;
  static constexpr const char* tags[] = {"debug", "info", "warning", "error"};
  std::clog << "[meta-nlg " << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::Debug, msg); }
inline void info(std::string_view msg) { write(Level::Info, msg); }
inline void warning(std::string_view msg) { write(Level::Warning, msg); }

}  // namespace metanlg::log
