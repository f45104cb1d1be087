#pragma once

// Named event counters. Tests use these to assert that ablation switches
// really disable the code paths they claim to (e.g. a run without comment
// generation must never touch the decoder).

#include <cstdint>
#include <map>
#include <string>

namespace redkit::instrument {

void increment(const std::string& name, std::uint64_t n = 1);
std::uint64_t count(const std::string& name);
std::map<std::string, std::uint64_t> snapshot();
void reset();

}  // namespace redkit::instrument
