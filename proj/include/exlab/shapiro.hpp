#pragma once

#include "exlab/common.hpp"

namespace exlab::shapiro {

/// Fewer than three observations.
struct TooFewSamples : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// All observations equal; the statistic is undefined. Callers decide what a
/// degenerate sample means for them.
struct DegenerateSample : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Largest sample size the coefficient approximation has been validated for.
/// Larger samples are still accepted; accuracy degrades gracefully.
inline constexpr std::size_t kValidatedMaxN = 5000;

/// Inverse standard normal CDF (Wichura's PPND16 rational approximation).
double norm_ppf(double p);

/// Order-statistic coefficients a_1..a_{n/2} for a sample of size n,
/// via the Royston polynomial approximation. The full coefficient vector is
/// antisymmetric: position i (1-based, ascending sort) carries -a_i for
/// i <= n/2, +a_{n+1-i} for i > n/2, and 0 at the middle of an odd n.
Vec w_coefficients(std::size_t n);

/// The W normality statistic in [0,1]. Permutation-invariant (sorts a copy).
/// Throws TooFewSamples for n < 3 and DegenerateSample when all values are
/// equal. No p-value is computed; callers threshold W directly.
double shapiro_w(const Vec& values);

}  // namespace exlab::shapiro
