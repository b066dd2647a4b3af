#pragma once

// The four dummy-query strategies that fail to suppress the alarm, used as
// negative controls. Each one produces a candidate dummy d_min; the harness
// interleaves them 3-per-useful into a spiked attack stream and checks the
// alarm persists.

#include <random>

#include "exlab/common.hpp"
#include "exlab/detector.hpp"

namespace exlab::testsupport {

enum class FailedStrategy {
  noise_draws,         // (1) random noise images: distances cluster far out
  perturbed_naturals,  // (2) naturals + small noise: distances cluster near 0
  band_constrained,    // (3) like (1)/(2) but forced into mean +- 2 std of D
  accept_if_w_ok,      // (4) submit only if W stays above delta
};

struct NegativeControl {
  FailedStrategy strategy;
  double noise_scale;  // distance scale of the strategy's dummy queries

  // Proposes the next dummy d_min given the current distance set. Returns
  // nullopt when the strategy gives up (strategy 4's search stalls).
  std::optional<double> next(const Vec& current, double delta,
                             const detector::DetectorConfig& cfg, Rng& rng) const {
    std::normal_distribution<double> cluster(noise_scale, 0.02 * noise_scale);
    switch (strategy) {
      case FailedStrategy::noise_draws:
      case FailedStrategy::perturbed_naturals:
        return std::max(1e-9, cluster(rng));
      case FailedStrategy::band_constrained: {
        const double m = mean(current);
        const double sd = pop_std(current);
        for (int tries = 0; tries < 200; ++tries) {
          const double d = cluster(rng);
          if (d > 0.0 && std::abs(d - m) <= 2.0 * sd) return d;
        }
        // The underlying samples dominate d_min; the band is unreachable
        // without noise large enough to degenerate into strategy (1).
        return std::max(1e-9, cluster(rng));
      }
      case FailedStrategy::accept_if_w_ok: {
        detector::DetectorConfig check = cfg;
        check.delta = delta;
        for (int tries = 0; tries < 200; ++tries) {
          const double d = std::max(1e-9, cluster(rng));
          Vec with = current;
          with.push_back(d);
          if (static_cast<int>(with.size()) <= cfg.window_min ||
              !decide(with, check).attack)
            return d;
        }
        return std::nullopt;  // search too expensive, give up
      }
    }
    return std::nullopt;
  }
};

// Interleaves `per_useful` strategy dummies after each useful entry and
// reports whether any checkpoint still alarms.
inline bool strategy_fails_to_evade(const NegativeControl& control, const Vec& useful,
                                    double delta, const detector::DetectorConfig& cfg,
                                    Rng& rng, int per_useful = 3) {
  detector::DetectorConfig check = cfg;
  check.delta = delta;
  Vec stream;
  for (double u : useful) {
    stream.push_back(u);
    for (int j = 0; j < per_useful; ++j) {
      const auto d = control.next(stream, delta, cfg, rng);
      if (!d) return true;  // could not even produce dummies
      stream.push_back(*d);
    }
  }
  for (const auto& r : detector::decide_stream(stream, check))
    if (r && r->attack) return true;
  return false;
}

}  // namespace exlab::testsupport
