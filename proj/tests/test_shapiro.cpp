#include <doctest.h>

#include <algorithm>
#include <random>

#include "exlab/shapiro.hpp"
#include "support/reference_data.hpp"

using namespace exlab;

namespace {

Vec normal_draws(std::size_t n, Rng& rng, double mu = 0.0, double sigma = 1.0) {
  std::normal_distribution<double> dist(mu, sigma);
  Vec v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

Vec uniform_draws(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vec v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("norm_ppf hits known quantiles") {
  CHECK(shapiro::norm_ppf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(shapiro::norm_ppf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(shapiro::norm_ppf(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-9));
  CHECK(shapiro::norm_ppf(0.8413447460685429) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(shapiro::norm_ppf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-6));
}

TEST_CASE("W matches the frozen reference within 1e-3") {
  const auto reference = exlab::testsupport::load_shapiro_reference();
  REQUIRE(reference.size() == 50);
  double worst = 0.0;
  for (const auto& rv : reference) {
    const double w = shapiro::shapiro_w(rv.values);
    worst = std::max(worst, std::abs(w - rv.w));
    CHECK_MESSAGE(std::abs(w - rv.w) < 1e-3, rv.name, " got ", w, " want ", rv.w);
  }
  MESSAGE("worst |W - reference| = ", worst);
}

TEST_CASE("W stays in [0,1]") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const Vec v = rep % 2 ? normal_draws(20 + rep, rng) : uniform_draws(20 + rep, rng);
    const double w = shapiro::shapiro_w(v);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
  }
}

TEST_CASE("affine and permutation invariance") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Vec v = normal_draws(73, rng);
    const double w = shapiro::shapiro_w(v);

    Vec scaled = v;
    for (double& x : scaled) x = -2.5 * x + 7.0;
    CHECK(shapiro::shapiro_w(scaled) == doctest::Approx(w).epsilon(1e-9));

    Vec shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(shapiro::shapiro_w(shuffled) == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("bimodal spikes score below matched normal draws") {
  Rng rng(29);
  Vec spikes;
  std::normal_distribution<double> narrow(0.0, 1e-3);
  for (int i = 0; i < 100; ++i) spikes.push_back(-1.0 + narrow(rng));
  for (int i = 0; i < 100; ++i) spikes.push_back(1.0 + narrow(rng));
  const double w_spikes = shapiro::shapiro_w(spikes);
  const double w_normal = shapiro::shapiro_w(normal_draws(200, rng));
  CHECK(w_spikes < w_normal);
  CHECK(w_spikes < 0.8);
}

TEST_CASE("normal beats uniform on average across sizes") {
  Rng rng(101);
  for (const std::size_t n : {10u, 50u, 100u, 500u, 2000u}) {
    double normal_sum = 0.0, uniform_sum = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
      normal_sum += shapiro::shapiro_w(normal_draws(n, rng));
      uniform_sum += shapiro::shapiro_w(uniform_draws(n, rng));
    }
    CHECK_MESSAGE(normal_sum > uniform_sum, "n = ", n);
  }
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS_AS(shapiro::shapiro_w({1.0, 2.0}), shapiro::TooFewSamples);
  CHECK_THROWS_AS(shapiro::shapiro_w({3.0, 3.0, 3.0, 3.0}), shapiro::DegenerateSample);
  CHECK_THROWS_AS(shapiro::shapiro_w({}), shapiro::TooFewSamples);
}

TEST_CASE("ties within the sample are fine") {
  const double w = shapiro::shapiro_w({1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 2.0});
  CHECK(w > 0.0);
  CHECK(w <= 1.0);
}

TEST_CASE("samples beyond the validated size still compute") {
  Rng rng(3);
  const Vec v = normal_draws(6000, rng);
  const double w = shapiro::shapiro_w(v);
  CHECK(w > 0.99);  // large normal samples sit near 1
}
