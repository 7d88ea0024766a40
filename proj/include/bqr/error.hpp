#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace bqr {

/// Argument outside the mathematical domain of an operation (p not in (0,1),
/// non-positive scale, malformed grid, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A linear-algebra or sampling step produced something unusable.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct WarningSink {
  std::mutex mutex;
  std::function<void(std::string_view)> handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  std::atomic<long> count{0};
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace detail

/// Replace the warning handler (default writes to stderr). An empty function
/// silences warnings; they are still counted.
inline void set_warning_handler(std::function<void(std::string_view)> handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  sink.handler = std::move(handler);
}

inline long warning_count() { return detail::warning_sink().count.load(); }

inline void warn(std::string_view message) {
  auto& sink = detail::warning_sink();
  sink.count.fetch_add(1);
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(message);
}

}  // namespace bqr
