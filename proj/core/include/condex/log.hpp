#pragma once

#include <functional>
#include <string>

namespace condex::log {

enum class Level { debug, info, warning };

using Sink = std::function<void(Level, const std::string&)>;

/// Replaces the process-wide sink and returns the previous one. The default
/// sink writes warnings to stderr and drops everything else.
Sink set_sink(Sink sink);

void write(Level level, const std::string& message);

inline void debug(const std::string& message) { write(Level::debug, message); }
inline void info(const std::string& message) { write(Level::info, message); }
inline void warn(const std::string& message) { write(Level::warning, message); }

}  // namespace condex::log
