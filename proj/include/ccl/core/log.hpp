#ifndef CCL_CORE_LOG_HPP
#define CCL_CORE_LOG_HPP

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

// Minimal process-wide logger. Messages go to stderr and, when a run log is
// open, to that file too. A capture hook lets tests observe warnings.

namespace ccl::log {

enum class Level { info, warn, error };

namespace detail {

struct State {
  std::mutex mutex;
  std::ofstream file;
  bool quiet = false;
  std::function<void(Level, const std::string&)> hook;
};

inline State& state() {
  static State s;
  return s;
}

inline const char* tag(Level level) {
  switch (level) {
    case Level::info: return "info";
    case Level::warn: return "warn";
    default: return "error";
  }
}

}  // namespace detail

inline void write(Level level, const std::string& message) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  const std::string line = std::string("[") + detail::tag(level) + "] " + message;
  if (!s.quiet || level != Level::info) std::cerr << line << '\n';
  if (s.file.is_open()) s.file << line << '\n' << std::flush;
  if (s.hook) s.hook(level, message);
}

inline void info(const std::string& message) { write(Level::info, message); }
inline void warn(const std::string& message) { write(Level::warn, message); }
inline void error(const std::string& message) { write(Level::error, message); }

/// Mirrors every later message into `path` (appending). An empty path closes it.
inline void open_run_log(const std::filesystem::path& path) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  if (s.file.is_open()) s.file.close();
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  s.file.open(path, std::ios::app);
}

/// Suppresses info lines on stderr (the run log still receives them).
inline void set_quiet(bool quiet) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  s.quiet = quiet;
}

/// Installs a callback that sees every message; returns the previous one.
inline std::function<void(Level, const std::string&)> set_hook(std::function<void(Level, const std::string&)> hook) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  std::swap(s.hook, hook);
  return hook;
}

}  // namespace ccl::log

#endif  // CCL_CORE_LOG_HPP
