#include "exlab/evasion.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace exlab::evasion {

namespace {

// Normal envelope (mean, std) fitted to the 3-sigma-trimmed values, with a
// relative floor on the spread so spiked inputs still yield a usable bell.
struct Envelope {
  double mu = 0.0;
  double sigma = 1.0;
};

Envelope fit_envelope(const Vec& values, double outlier_sigmas) {
  Envelope e;
  if (values.empty()) return e;
  const double m = mean(values);
  const double s = pop_std(values);
  Vec trimmed;
  trimmed.reserve(values.size());
  for (double v : values)
    if (std::abs(v - m) <= outlier_sigmas * s) trimmed.push_back(v);
  e.mu = mean(trimmed);
  e.sigma = std::max({pop_std(trimmed), 0.25 * std::abs(e.mu), 1e-6});
  return e;
}

double draw_positive(const Envelope& e, Rng& rng) {
  std::normal_distribution<double> normal(e.mu, e.sigma);
  for (int tries = 0; tries < 64; ++tries) {
    const double d = normal(rng);
    if (d > 0.0) return d;
  }
  return std::abs(e.mu) + e.sigma;  // envelope sits mostly below zero
}

}  // namespace

Vec EvasionPlan::distances() const {
  Vec d;
  d.reserve(stream.size());
  for (const PlanEntry& e : stream) d.push_back(e.d_min);
  return d;
}

bool stream_alarms(const Vec& dmins, const detector::DetectorConfig& cfg) {
  for (const auto& r : detector::decide_stream(dmins, cfg))
    if (r && r->attack) return true;
  return false;
}

EvasionPlan plan_dummy_distances(const Vec& attack_dmins, double delta,
                                 const detector::DetectorConfig& cfg, Rng& rng) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  if (attack_dmins.empty()) throw std::invalid_argument("attack stream is empty");

  detector::DetectorConfig plan_cfg = cfg;
  plan_cfg.delta = delta;

  // A prefix of D is unchecked: decide only runs once |D| > window_min, so
  // everything hinges on the mix being normal enough from the first
  // checkpoint on. Attempt a plain greedy plan first; if the unchecked
  // prefix is already hopeless (e.g. constant-step synthetic distances),
  // retry with the prefix pre-filled by a window of envelope dummies.
  const Envelope stream_env = fit_envelope(attack_dmins, plan_cfg.outlier_sigmas);

  auto attempt = [&](std::size_t front_load) -> std::optional<EvasionPlan> {
    EvasionPlan plan;
    Vec d;
    d.reserve(attack_dmins.size() * 4);

    auto safe_after = [&](double v) {
      d.push_back(v);
      bool ok = static_cast<int>(d.size()) <= plan_cfg.window_min ||
                !decide(d, plan_cfg).attack;
      d.pop_back();
      return ok;
    };
    auto push = [&](double v, bool dummy) {
      d.push_back(v);
      plan.stream.push_back({v, dummy});
      if (dummy)
        ++plan.dummy_count;
      else
        ++plan.useful_count;
    };

    for (std::size_t i = 0; i < front_load; ++i) {
      const double dummy = draw_positive(stream_env, rng);
      if (!safe_after(dummy)) return std::nullopt;
      push(dummy, true);
    }

    for (std::size_t i = 0; i < attack_dmins.size(); ++i) {
      int inserted = front_load > 0 && i == 0 ? static_cast<int>(front_load) : 0;
      while (!safe_after(attack_dmins[i])) {
        const Envelope env = d.empty() ? stream_env : fit_envelope(d, plan_cfg.outlier_sigmas);
        bool placed = false;
        for (int tries = 0; tries < 64 && !placed; ++tries) {
          const double dummy = draw_positive(env, rng);
          if (safe_after(dummy)) {
            push(dummy, true);
            placed = true;
          }
        }
        if (!placed || ++inserted > kMaxDummiesPerUseful) return std::nullopt;
      }
      push(attack_dmins[i], false);
    }
    return plan;
  };

  std::optional<EvasionPlan> plan = attempt(0);
  if (!plan) plan = attempt(static_cast<std::size_t>(plan_cfg.window_min));
  if (!plan) {
    // Rerun the plain attempt to locate the first stuck useful entry.
    std::size_t failing = 0;
    {
      Vec d;
      for (std::size_t i = 0; i < attack_dmins.size(); ++i) {
        d.push_back(attack_dmins[i]);
        if (static_cast<int>(d.size()) > plan_cfg.window_min && decide(d, plan_cfg).attack) {
          failing = i;
          break;
        }
      }
    }
    throw PlanInfeasible("no dummy schedule found within the per-query cap", failing);
  }

  plan->overhead_ratio = plan->useful_count == 0
                             ? 0.0
                             : static_cast<double>(plan->dummy_count) /
                                   static_cast<double>(plan->useful_count);

  // Replay verification through the detector's own decide loop.
  if (stream_alarms(plan->distances(), plan_cfg))
    throw NumericError("planned stream still alarms under replay");
  return *plan;
}

void write_plan(std::ostream& out, const EvasionPlan& plan) {
  for (const PlanEntry& e : plan.stream)
    out << (e.dummy ? "dummy," : "useful,") << e.d_min << "\n";
}

}  // namespace exlab::evasion
