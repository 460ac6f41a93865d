// Scalar numeric helpers shared across the library.
//
// Conventions used everywhere:
//   sigmoid(z)  = 1 / (1 + e^-z)
//   softplus(z) = ln(1 + e^z), a smooth upper bound of max(0, z)
//   -ln sigmoid(z) is always evaluated as softplus(-z); this keeps loss
//   values finite and accurate for arbitrarily large |z|.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace prefopt {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  if (z > 0.0) {
    return z + std::log1p(std::exp(-z));
  }
  return std::log1p(std::exp(z));
}

// d/dz sigmoid(z) = sigmoid(z) * sigmoid(-z), computed without the
// cancellation of sigmoid(z) * (1 - sigmoid(z)) at large z.
inline double sigmoid_deriv(double z) { return sigmoid(z) * sigmoid(-z); }

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

inline double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) {
    if (x > hi) hi = x;
  }
  double sum = 0.0;
  for (double x : xs) {
    sum += std::exp(x - hi);
  }
  return hi + std::log(sum);
}

// Shortest round-trip decimal rendering; used for every CSV/diagnostic so
// repeated runs of the same binary produce byte-identical text.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be finite, got " +
                                format_double(v));
  }
}

// --- deterministic seeding -------------------------------------------------
//
// All sub-streams (world generation, dataset sampling, shuffling, per-match
// evaluation) derive their seed as derive_seed(root, counter). The scheme is
// fixed so parallel consumers of separate counters stay reproducible.

inline std::uint64_t split_mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t counter) {
  return split_mix64(root + 0x9E3779B97F4A7C15ull * (counter + 1));
}

// Uniform draw in [0, 1) with exactly 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline int uniform_index(std::mt19937_64& rng, int n) {
  const int idx = static_cast<int>(uniform01(rng) * n);
  return idx >= n ? n - 1 : idx;
}

}  // namespace prefopt
