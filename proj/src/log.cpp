#include "dstkit/log.hpp"

#include <iostream>
#include <mutex>
#include <string>

namespace dstkit::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex mu;
  return mu;
}

Sink& current_sink() {
  static Sink sink;
  return sink;
}

}  // namespace

void set_warning_sink(Sink sink) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  current_sink() = std::move(sink);
}

void warn(std::string_view module, std::string_view message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  if (current_sink()) {
    current_sink()(module, message);
    return;
  }
  std::cerr << "warning [" << module << "] " << message << "\n";
}

}  // namespace dstkit::log
