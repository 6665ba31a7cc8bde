#pragma once

#include <cstdio>
#include <string>

namespace pf::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

// Threshold comes from PATTERNFORGE_LOG (debug|info|warn|error|off), read once.
Level threshold();
void set_threshold(Level lv);

void write(Level lv, const std::string& msg);

inline void debug(const std::string& msg) { write(Level::Debug, msg); }
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void warn(const std::string& msg) { write(Level::Warn, msg); }
inline void error(const std::string& msg) { write(Level::Error, msg); }

} // namespace pf::log
