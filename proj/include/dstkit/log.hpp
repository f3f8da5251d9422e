#pragma once

#include <functional>
#include <string_view>

namespace dstkit::log {

using Sink = std::function<void(std::string_view module, std::string_view message)>;

// Replaces the warning sink. Passing an empty function restores the default,
// which writes "warning [module] message" lines to stderr.
void set_warning_sink(Sink sink);

void warn(std::string_view module, std::string_view message);

// Installs a sink for the lifetime of the guard; used by tests to capture
// warnings.
class ScopedSink {
 public:
  explicit ScopedSink(Sink sink) { set_warning_sink(std::move(sink)); }
  ~ScopedSink() { set_warning_sink({}); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;
};

}  // namespace dstkit::log
