#include "exlab/shapiro.hpp"

#include <algorithm>
#include <cstddef>

namespace exlab::shapiro {

namespace {

// Horner evaluation, c[0] is the constant term.
double poly(const double* c, int n, double x) {
  double p = c[n - 1];
  for (int i = n - 2; i >= 0; --i) p = p * x + c[i];
  return p;
}

}  // namespace

double norm_ppf(double p) {
  // PPND16: |error| < 1e-15 over (0,1).
  static constexpr double a[8] = {
      3.3871328727963666080e0,  1.3314166789178437745e+2,
      1.9715909503065514427e+3, 1.3731693765509461125e+4,
      4.5921953931549871457e+4, 6.7265770927008700853e+4,
      3.3430575583588128105e+4, 2.5090809287301226727e+3};
  static constexpr double b[8] = {
      1.0,                      4.2313330701600911252e+1,
      6.8718700749205790830e+2, 5.3941960214247511077e+3,
      2.1213794301586595867e+4, 3.9307895800092710610e+4,
      2.8729085735721942674e+4, 5.2264952788528545610e+3};
  static constexpr double c[8] = {
      1.42343711074968357734e0,  4.63033784615654529590e0,
      5.76949722146069140550e0,  3.64784832476320460504e0,
      1.27045825245236838258e0,  2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static constexpr double d[8] = {
      1.0,                       2.05319162663775882187e0,
      1.67638483018380384940e0,  6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static constexpr double e[8] = {
      6.65790464350110377720e0,  5.46378491116411436990e0,
      1.78482653991729133580e0,  2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[8] = {
      1.0,                       5.99832206555887937690e-1,
      1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};

  if (!(p > 0.0 && p < 1.0)) throw NumericError("norm_ppf: p outside (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * poly(a, 8, r) / poly(b, 8, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = poly(c, 8, r) / poly(d, 8, r);
  } else {
    r -= 5.0;
    val = poly(e, 8, r) / poly(f, 8, r);
  }
  return q < 0.0 ? -val : val;
}

Vec w_coefficients(std::size_t n) {
  // Royston's approximation to the normalized expected order statistics
  // (AS R94 constants, evaluated in double precision).
  static constexpr double kC1[6] = {0.0,      0.221157, -0.147981,
                                    -2.071190, 4.434685, -2.706056};
  static constexpr double kC2[6] = {0.0,      0.042981, -0.293762,
                                    -1.752461, 5.682633, -3.582633};

  if (n < 3) throw TooFewSamples("w_coefficients: n < 3");
  const std::size_t half = n / 2;
  Vec a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
    return a;
  }
  const double an = static_cast<double>(n);
  double summ2 = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    a[i] = norm_ppf((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
    summ2 += a[i] * a[i];
  }
  summ2 *= 2.0;
  const double ssumm2 = std::sqrt(summ2);
  const double rsn = 1.0 / std::sqrt(an);
  const double a1 = poly(kC1, 6, rsn) - a[0] / ssumm2;
  std::size_t rest_begin;
  double fac;
  if (n > 5) {
    const double a2 = poly(kC2, 6, rsn) - a[1] / ssumm2;
    fac = std::sqrt((summ2 - 2.0 * a[0] * a[0] - 2.0 * a[1] * a[1]) /
                    (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
    a[0] = a1;
    a[1] = a2;
    rest_begin = 2;
  } else {
    fac = std::sqrt((summ2 - 2.0 * a[0] * a[0]) / (1.0 - 2.0 * a1 * a1));
    a[0] = a1;
    rest_begin = 1;
  }
  for (std::size_t i = rest_begin; i < half; ++i) a[i] = -a[i] / fac;
  return a;
}

double shapiro_w(const Vec& values) {
  const std::size_t n = values.size();
  if (n < 3) throw TooFewSamples("shapiro_w: need at least 3 values");
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("shapiro_w: non-finite value");
  }

  Vec x = values;
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() <= 0.0)
    throw DegenerateSample("shapiro_w: zero sample range");

  const Vec a = w_coefficients(n);
  const std::size_t half = n / 2;

  // W is the squared correlation between the sorted data and the
  // antisymmetric coefficient vector. The coefficient mean is zero by
  // antisymmetry, so centering only the data would suffice; both are
  // centered to mirror the reference algorithm.
  const double xbar = mean(x);
  double ssx = 0.0, sax = 0.0, ssa = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double coef = 0.0;
    if (i < half)
      coef = -a[i];
    else if (i >= n - half)
      coef = a[n - 1 - i];
    const double dx = x[i] - xbar;
    ssx += dx * dx;
    ssa += coef * coef;
    sax += coef * dx;
  }
  const double w = (sax * sax) / (ssa * ssx);
  return clamp(w, 0.0, 1.0);
}

}  // namespace exlab::shapiro
