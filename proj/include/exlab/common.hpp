#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace exlab {

using Vec = std::vector<double>;

/// Deterministic generator used project-wide. All randomness flows through
/// explicitly seeded instances passed by reference; there is no global state.
using Rng = std::mt19937_64;

/// Input has the wrong dimensionality for the operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A computation produced non-finite values or cannot proceed numerically.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population standard deviation (divide by n). This convention is fixed
/// project-wide; detector thresholds and trimming depend on it.
inline double pop_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double variance_pop(std::span<const double> v) {
  const double s = pop_std(v);
  return s * s;
}

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

/// sign with sign(0) = 0.
inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace exlab
