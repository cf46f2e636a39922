#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace oodbench::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from OODBENCH_LOG (error|warn|info|debug); default warn.
inline Level threshold() {
  static Level lvl = [] {
    const char* env = std::getenv("OODBENCH_LOG");
    if (env == nullptr) return Level::Warn;
    std::string v(env);
    if (v == "error") return Level::Error;
    if (v == "warn") return Level::Warn;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return lvl;
}

inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}

inline void emit(Level lvl, const std::string& tag, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  std::lock_guard<std::mutex> lock(mutex());
  std::cerr << "[" << tag << "] " << msg << "\n";
}

inline void error(const std::string& msg) { emit(Level::Error, "error", msg); }
inline void warn(const std::string& msg) { emit(Level::Warn, "warn", msg); }
inline void info(const std::string& msg) { emit(Level::Info, "info", msg); }
inline void debug(const std::string& msg) { emit(Level::Debug, "debug", msg); }

}  // namespace oodbench::log
