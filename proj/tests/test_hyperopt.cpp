#include <doctest.h>

#include <cmath>
#include <set>

#include "exlab/dataset.hpp"
#include "exlab/hyperopt.hpp"
#include "support/oracles.hpp"

using namespace exlab;

namespace {

nn::Dataset blobs(int per_class, std::uint64_t seed, int classes = 2) {
  Rng rng(seed);
  return harness::gen_blobs_dataset(classes, 2, per_class, 8.0, rng);
}

nn::Network arch_template(int dim = 2, int classes = 2) {
  Rng rng(0);
  return nn::make_network(dim, {8}, classes, rng);
}

}  // namespace

TEST_CASE("kfolds partitions the data into near-equal disjoint folds") {
  const nn::Dataset data = blobs(5, 3);  // 10 samples
  Rng rng(1);
  const auto folds = hyperopt::kfolds(data, 5, rng);
  REQUIRE(folds.size() == 5);
  std::multiset<double> seen;
  for (const auto& fold : folds) {
    CHECK(fold.validation.size() == 2);
    CHECK(fold.train.size() == 8);
    for (const Vec& s : fold.validation.samples) seen.insert(s[0]);
  }
  std::multiset<double> expected;
  for (const Vec& s : data.samples) expected.insert(s[0]);
  CHECK(seen == expected);  // disjoint + covering: multiset equality
}

TEST_CASE("kfolds stratifies balanced classes within one") {
  const nn::Dataset data = blobs(25, 9);  // 2 classes x 25
  Rng rng(4);
  const auto folds = hyperopt::kfolds(data, 5, rng);
  for (const auto& fold : folds) {
    int c0 = 0, c1 = 0;
    for (int label : fold.validation.labels) (label == 0 ? c0 : c1)++;
    CHECK(std::abs(c0 - c1) <= 1);
  }
}

TEST_CASE("kfolds fold totals stay within one even with unbalanced classes") {
  nn::Dataset data = blobs(7, 5, 3);  // 21 samples, 3 classes of 7
  Rng rng(2);
  const auto folds = hyperopt::kfolds(data, 5, rng);
  std::size_t lo = data.size(), hi = 0;
  for (const auto& fold : folds) {
    lo = std::min(lo, fold.validation.size());
    hi = std::max(hi, fold.validation.size());
  }
  CHECK(hi - lo <= 1);
}

TEST_CASE("kfolds rejects tiny datasets") {
  const nn::Dataset data = blobs(1, 3);  // 2 samples
  Rng rng(0);
  CHECK_THROWS(hyperopt::kfolds(data, 5, rng));
}

TEST_CASE("cv_accuracy is fold-order invariant and sane on separable data") {
  const nn::Dataset data = blobs(15, 8);
  Rng rng(3);
  auto folds = hyperopt::kfolds(data, 5, rng);
  nn::TrainingConfig H;
  H.learning_rate = 0.05;
  H.epochs = 60;
  const double acc = hyperopt::cv_accuracy(H, folds, arch_template(), 99);
  CHECK(acc >= 0.9);

  std::reverse(folds.begin(), folds.end());
  CHECK(hyperopt::cv_accuracy(H, folds, arch_template(), 99) == doctest::Approx(acc));
}

TEST_CASE("constant predictor scores exactly one half on balanced folds") {
  const nn::Dataset data = blobs(20, 2);  // 2 classes x 20
  Rng rng(7);
  const auto folds = hyperopt::kfolds(data, 5, rng);
  Rng zrng(0);
  nn::Network constant = nn::make_network(2, {4}, 2, zrng);
  for (auto& layer : constant.layers)
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
  double total = 0.0;
  for (const auto& fold : folds) total += nn::dataset_accuracy(constant, fold.validation);
  CHECK(total / folds.size() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gp interpolates observations under small noise") {
  const std::vector<std::array<double, 2>> pts = {{0.1, 0.2}, {0.8, 0.4}, {0.5, 0.9}};
  const Vec vals = {0.3, 0.7, 0.5};
  const auto model = hyperopt::gp_fit(pts, vals, 0.5, 1e-10);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto [mu, sd] = hyperopt::gp_predict(model, pts[i]);
    CHECK(mu == doctest::Approx(vals[i]).epsilon(1e-6));
    CHECK(sd <= 1e-3);
  }
}

TEST_CASE("gp reverts to the prior far from data") {
  const std::vector<std::array<double, 2>> pts = {{0.5, 0.5}};
  const Vec vals = {0.9};
  auto model = hyperopt::gp_fit(pts, vals, 0.05, 1e-6);
  model.signal_var = 0.04;  // fixed signal for a crisp prior-reversion check
  model.prior_mean = 0.9;
  const auto [mu, sd] = hyperopt::gp_predict(model, {0.5 + 10 * 0.05 * 14, 0.5});
  CHECK(mu == doctest::Approx(model.prior_mean).epsilon(1e-3));
  CHECK(sd == doctest::Approx(std::sqrt(model.signal_var)).epsilon(1e-3));
}

TEST_CASE("gp posterior matches the dense-solve oracle") {
  Rng rng(15);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::array<double, 2>> pts;
    Vec vals;
    const int n = 3 + rep % 6;
    for (int i = 0; i < n; ++i) {
      pts.push_back({unit(rng), unit(rng)});
      vals.push_back(unit(rng));
    }
    const auto model = hyperopt::gp_fit(pts, vals);
    exlab::testsupport::DenseGpOracle oracle{pts, vals, model.length_scale, model.signal_var,
                                             model.noise_var, model.prior_mean};
    for (int probe = 0; probe < 5; ++probe) {
      const std::array<double, 2> p{unit(rng), unit(rng)};
      const auto [mu, sd] = hyperopt::gp_predict(model, p);
      const auto [omu, osd] = oracle.predict(p);
      CHECK(mu == doctest::Approx(omu).epsilon(1e-8));
      CHECK(sd == doctest::Approx(osd).epsilon(1e-8));
    }
  }
}

TEST_CASE("gp uncertainty grows away from the data") {
  const std::vector<std::array<double, 2>> pts = {{0.2, 0.2}, {0.3, 0.25}, {0.25, 0.4}};
  const Vec vals = {0.5, 0.6, 0.4};
  const auto model = hyperopt::gp_fit(pts, vals, 0.1);
  double at_data = 0.0;
  for (const auto& p : pts) at_data = std::max(at_data, hyperopt::gp_predict(model, p).second);
  const double far = hyperopt::gp_predict(model, {0.95, 0.95}).second;
  CHECK(at_data <= far);
}

TEST_CASE("acquisition stays in bounds and matches a brute-force grid scan") {
  hyperopt::HyperRange range;
  const std::vector<std::array<double, 2>> pts = {{0.5, 0.5}};
  const Vec vals = {0.4};
  const auto model = hyperopt::gp_fit(pts, vals, 0.3, 1e-4);

  Rng rng_a(123), rng_b(123);
  const auto chosen = hyperopt::acquire_next(model, range, 32, rng_a);
  CHECK(chosen[0] >= 0.0);
  CHECK(chosen[0] <= 1.0);
  CHECK(chosen[1] >= 0.0);
  CHECK(chosen[1] <= 1.0);

  // Same seed, same stratified grid: explicit scan must agree exactly.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double best_score = -1e300;
  std::array<double, 2> best{0, 0};
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      const std::array<double, 2> p{(i + unit(rng_b)) / 32, (j + unit(rng_b)) / 32};
      const auto [mu, sd] = hyperopt::gp_predict(model, p);
      if (mu + sd > best_score) {
        best_score = mu + sd;
        best = p;
      }
    }
  }
  CHECK(chosen == best);

  // With one observation the posterior mean is flat at the prior, so the
  // acquisition maximum is the grid point farthest from the observation.
  double far_dist = -1.0;
  std::array<double, 2> far{0, 0};
  Rng rng_c(123);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      const std::array<double, 2> p{(i + unit(rng_c)) / 32, (j + unit(rng_c)) / 32};
      const double d = std::hypot(p[0] - 0.5, p[1] - 0.5);
      if (d > far_dist) {
        far_dist = d;
        far = p;
      }
    }
  }
  CHECK(chosen == far);
}

TEST_CASE("cv_search runs exactly 30 evaluations with the right phases") {
  hyperopt::HyperRange range;
  Rng rng(7);
  int calls = 0;
  const auto trace = hyperopt::cv_search_with(
      [&](const nn::TrainingConfig&) {
        ++calls;
        return 0.5;
      },
      range, rng);
  CHECK(calls == 30);
  REQUIRE(trace.evaluations.size() == 30);
  for (int i = 0; i < 4; ++i) CHECK(trace.evaluations[i].phase == "corner");
  for (int i = 4; i < 15; ++i) CHECK(trace.evaluations[i].phase == "random");
  for (int i = 15; i < 30; ++i) CHECK(trace.evaluations[i].phase == "gp");

  // The four corners map to the exact bound values (log-scale endpoints).
  Vec lrs;
  std::vector<int> eps;
  for (int i = 0; i < 4; ++i) {
    lrs.push_back(trace.evaluations[i].config.learning_rate);
    eps.push_back(trace.evaluations[i].config.epochs);
  }
  CHECK(lrs[0] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lrs[3] == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(eps[0] == 10);
  CHECK(eps[1] == 320);

  // Constant surface: any in-range result is a valid argmax.
  const auto best = hyperopt::best_config(trace);
  CHECK(best.learning_rate >= 1e-4 - 1e-12);
  CHECK(best.learning_rate <= 1e-2 + 1e-12);
  CHECK(best.epochs >= 10);
  CHECK(best.epochs <= 320);
}

TEST_CASE("cv_search locates a planted unimodal peak") {
  hyperopt::HyperRange range;
  auto surface = [&](const nn::TrainingConfig& H) {
    const double u = (std::log(H.learning_rate) - std::log(1e-4)) / std::log(1e-2 / 1e-4);
    const double v = (std::log(static_cast<double>(H.epochs)) - std::log(10.0)) /
                     std::log(320.0 / 10.0);
    const double du = u - 0.62, dv = v - 0.33;
    return std::exp(-(du * du + dv * dv) / (2 * 0.25 * 0.25));
  };
  const double cell = 1.0 / 32.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto trace = hyperopt::cv_search_with(surface, range, rng);
    const auto best = hyperopt::best_config(trace);
    const double u = (std::log(best.learning_rate) - std::log(1e-4)) / std::log(1e-2 / 1e-4);
    const double v = (std::log(static_cast<double>(best.epochs)) - std::log(10.0)) /
                     std::log(320.0 / 10.0);
    CHECK_MESSAGE(std::abs(u - 0.62) <= cell + 1e-9, "seed ", seed, " u = ", u);
    CHECK_MESSAGE(std::abs(v - 0.33) <= cell + 0.02, "seed ", seed, " v = ", v);
  }
}

TEST_CASE("cv_search on real folds returns an in-range config with dropout") {
  const nn::Dataset data = blobs(10, 44);
  hyperopt::HyperRange range;
  Rng rng(5);
  hyperopt::CvSearchOptions opts;
  opts.dropout_rate = 0.2;
  const auto trace = hyperopt::cv_search(data, range, arch_template(), rng, opts);
  CHECK(trace.evaluations.size() == 30);
  const auto best = hyperopt::best_config(trace);
  CHECK(best.learning_rate >= 1e-4 - 1e-15);
  CHECK(best.learning_rate <= 1e-2 + 1e-15);
  CHECK(best.epochs >= 10);
  CHECK(best.epochs <= 320);
  CHECK(best.dropout_rate == 0.2);
  for (const auto& sp : trace.evaluations) {
    if (sp.failed) continue;
    CHECK(sp.fold_accuracies.size() == 5);
    CHECK(sp.mean_accuracy == doctest::Approx(mean(sp.fold_accuracies)));
  }
}

TEST_CASE("cv_search errors when every evaluation fails") {
  hyperopt::HyperRange range;
  Rng rng(3);
  CHECK_THROWS_AS(hyperopt::cv_search_with(
                      [](const nn::TrainingConfig&) -> double {
                        throw NumericError("planted failure");
                      },
                      range, rng),
                  NumericError);
}
