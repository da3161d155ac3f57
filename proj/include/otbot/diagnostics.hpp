#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <string>

namespace otbot::diagnostics {

// Process-wide sink for warning-level conditions that must not abort a
// computation (e.g. inverse dynamics evaluated at a non-admissible velocity).
// Silent by default; the CLI installs a handler that prints to stderr.

using Handler = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline Handler& handler() {
  static Handler h;
  return h;
}
inline std::atomic<long>& counter() {
  static std::atomic<long> n{0};
  return n;
}
}  // namespace detail

inline void set_handler(Handler h) {
  std::lock_guard lock(detail::mutex());
  detail::handler() = std::move(h);
}

inline void warn(const std::string& msg) {
  detail::counter().fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(detail::mutex());
  if (detail::handler()) detail::handler()(msg);
}

inline long warning_count() { return detail::counter().load(std::memory_order_relaxed); }

}  // namespace otbot::diagnostics
