// SPDX-License-Identifier: Apache-2.0
//
// Error hierarchy, seeded RNG, and hashing shared by every module.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace advseg {

// ---------------------------------------------------------------------------
// Errors. Exit-code mapping in the CLI hangs off the four bases:
// ConfigError -> 1, IoError -> 2, DatasetError -> 3, anything else -> 4.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct DatasetError : Error {
  using Error::Error;
};

struct InvalidIndexError : Error {
  using Error::Error;
};
struct UnknownColorError : DatasetError {
  using DatasetError::DatasetError;
};
struct MissingManifestError : DatasetError {
  using DatasetError::DatasetError;
};
struct MissingFileError : DatasetError {
  using DatasetError::DatasetError;
};
struct DuplicateIdError : DatasetError {
  using DatasetError::DatasetError;
};
struct EmptyDatasetError : DatasetError {
  using DatasetError::DatasetError;
};

struct InvalidSpecError : ConfigError {
  using ConfigError::ConfigError;
};
struct CheckpointMismatchError : ConfigError {
  using ConfigError::ConfigError;
};

struct ShapeError : Error {
  using Error::Error;
};
struct UnknownPartitionError : Error {
  using Error::Error;
};
struct AllPixelsIgnoredError : Error {
  using Error::Error;
};
struct InvalidPredictionError : Error {
  using Error::Error;
};
struct NoDefinedClassesError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic per-item seed derived from a master seed and an index.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Rng: mt19937_64 with hand-rolled value mappings so every draw is a pure
// function of the engine state.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  bool coin(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller, cosine branch only; keeps the state a plain engine.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.141592653589793 * u2);
  }

  /// Index draw proportional to non-negative weights.
  int weighted_index(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    double x = uniform() * total;
    for (int i = 0; i < n; ++i) {
      x -= w[i];
      if (x < 0.0) return i;
    }
    return n - 1;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw Error("Rng: bad serialized engine state");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace advseg
