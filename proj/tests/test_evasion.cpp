#include <doctest.h>

#include <sstream>

#include "exlab/evasion.hpp"
#include "support/negative_controls.hpp"

using namespace exlab;

namespace {

detector::DetectorConfig config() {
  detector::DetectorConfig cfg;
  cfg.delta = 0.9;
  return cfg;
}

// Spiked stream in the style of fixed-step synthetic queries: a natural
// warmup followed by near-constant distances.
Vec spiked_stream(std::size_t naturals, std::size_t spikes, Rng& rng) {
  Vec out;
  std::normal_distribution<double> natural(1.0, 0.2);
  std::normal_distribution<double> spike(0.45, 1e-3);
  for (std::size_t i = 0; i < naturals; ++i) out.push_back(std::max(1e-6, natural(rng)));
  for (std::size_t i = 0; i < spikes; ++i) out.push_back(std::max(1e-6, spike(rng)));
  return out;
}

Vec normal_stream(std::size_t n, Rng& rng) {
  std::normal_distribution<double> dist(1.0, 0.15);
  Vec out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::max(1e-6, dist(rng)));
  return out;
}

}  // namespace

TEST_CASE("already-normal streams need zero dummies") {
  Rng rng(3);
  // Find a seed whose stream passes every checkpoint at delta = 0.9 outright.
  Vec stream;
  detector::DetectorConfig cfg = config();
  for (std::uint64_t seed = 0;; ++seed) {
    Rng gen(seed);
    stream = normal_stream(220, gen);
    if (!evasion::stream_alarms(stream, cfg)) break;
    REQUIRE(seed < 50);
  }
  const auto plan = evasion::plan_dummy_distances(stream, cfg.delta, cfg, rng);
  CHECK(plan.dummy_count == 0);
  CHECK(plan.useful_count == stream.size());
  CHECK(plan.overhead_ratio == 0.0);
}

TEST_CASE("planned stream replays clean and keeps useful order") {
  Rng gen(11), rng(12);
  const Vec attack = spiked_stream(90, 260, gen);
  detector::DetectorConfig cfg = config();
  REQUIRE(evasion::stream_alarms(attack, cfg));  // alarms unmodified

  const auto plan = evasion::plan_dummy_distances(attack, cfg.delta, cfg, rng);
  CHECK(plan.dummy_count > 0);
  CHECK(plan.overhead_ratio > 0.0);
  CHECK(plan.useful_count == attack.size());

  // Replay through the detector's own loop: no checkpoint fires.
  CHECK(!evasion::stream_alarms(plan.distances(), cfg));

  // The useful subsequence is the original stream, in order.
  Vec useful;
  for (const auto& e : plan.stream)
    if (!e.dummy) useful.push_back(e.d_min);
  CHECK(useful == attack);

  // Dropping the dummies restores the original verdict sequence exactly.
  const auto original = detector::decide_stream(attack, cfg);
  const auto restored = detector::decide_stream(useful, cfg);
  REQUIRE(original.size() == restored.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    CHECK(original[i].has_value() == restored[i].has_value());
    if (original[i]) {
      CHECK(original[i]->attack == restored[i]->attack);
      CHECK(original[i]->w == restored[i]->w);
    }
  }
}

TEST_CASE("overhead is positive whenever the raw stream alarms") {
  Rng gen(21), rng(22);
  const Vec attack = spiked_stream(60, 180, gen);
  detector::DetectorConfig cfg = config();
  REQUIRE(evasion::stream_alarms(attack, cfg));
  const auto plan = evasion::plan_dummy_distances(attack, cfg.delta, cfg, rng);
  CHECK(plan.overhead_ratio > 0.0);
  MESSAGE("desk-scale overhead ratio: ", plan.overhead_ratio);
}

TEST_CASE("infeasible plans raise with the failing index") {
  // A pathological detector window makes the constraint unsatisfiable: with
  // window_min = 3 nearly every early checkpoint is degenerate.
  detector::DetectorConfig cfg = config();
  cfg.window_min = 3;
  Rng rng(5);
  const Vec attack(40, 0.5);  // constant distances
  CHECK_THROWS_AS(evasion::plan_dummy_distances(attack, 0.99, cfg, rng),
                  evasion::PlanInfeasible);
}

TEST_CASE("all four failed strategies leave the alarm in place") {
  Rng gen(31);
  const Vec attack = spiked_stream(80, 240, gen);
  detector::DetectorConfig cfg = config();
  REQUIRE(evasion::stream_alarms(attack, cfg));

  using exlab::testsupport::FailedStrategy;
  using exlab::testsupport::NegativeControl;
  const NegativeControl controls[] = {
      {FailedStrategy::noise_draws, 2.0},         // far-out second peak
      {FailedStrategy::perturbed_naturals, 0.05}, // near-zero second peak
      {FailedStrategy::band_constrained, 2.0},
      {FailedStrategy::accept_if_w_ok, 2.0},
  };
  for (const auto& control : controls) {
    Rng rng(101 + static_cast<int>(control.strategy));
    CHECK_MESSAGE(
        exlab::testsupport::strategy_fails_to_evade(control, attack, cfg.delta, cfg, rng),
        "strategy ", static_cast<int>(control.strategy), " unexpectedly evaded");
  }

  // The planner itself succeeds where the controls fail.
  Rng rng(9);
  const auto plan = evasion::plan_dummy_distances(attack, cfg.delta, cfg, rng);
  CHECK(!evasion::stream_alarms(plan.distances(), cfg));
}

TEST_CASE("plan serialization is line-delimited kind,d_min") {
  evasion::EvasionPlan plan;
  plan.stream = {{0.5, false}, {0.7, true}};
  std::stringstream out;
  evasion::write_plan(out, plan);
  CHECK(out.str() == "useful,0.5\ndummy,0.7\n");
}
