#pragma once

// Shared error types and small utilities used across the library.

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace redkit {

// Shape disagreement between tensor operands.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Out-of-range token id, label, or row index.
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally valid but unusable input (e.g. a zero-norm embedding).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller passed an argument outside the documented domain.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An internal contract was broken; indicates a bug in the calling code.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Training hit a non-finite loss or gradient and cannot continue.
struct TrainingAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file or inconsistent configuration.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a: stable 64-bit hash (std::hash is not stable across builds).
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// Derives a per-item RNG seed from a run seed and a stable string key.
inline std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& key) {
  return run_seed ^ fnv1a64(key);
}

}  // namespace redkit
