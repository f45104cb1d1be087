#include "redkit/instrument.hpp"

#include <mutex>

namespace redkit::instrument {

namespace {
std::mutex g_mutex;
std::map<std::string, std::uint64_t>& registry() {
  static std::map<std::string, std::uint64_t> counters;
  return counters;
}
}  // namespace

void increment(const std::string& name, std::uint64_t n) {
  std::lock_guard<std::mutex> lock(g_mutex);
  registry()[name] += n;
}

std::uint64_t count(const std::string& name) {
  std::lock_guard<std::mutex> lock(g_mutex);
  auto& reg = registry();
  auto it = reg.find(name);
  return it == reg.end() ? 0 : it->second;
}

std::map<std::string, std::uint64_t> snapshot() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return registry();
}

void reset() {
  std::lock_guard<std::mutex> lock(g_mutex);
  registry().clear();
}

}  // namespace redkit::instrument
