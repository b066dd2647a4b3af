#pragma once

#include "exlab/common.hpp"
#include "exlab/detector.hpp"

namespace exlab::evasion {

struct PlanEntry {
  double d_min = 0.0;
  bool dummy = false;
};

struct EvasionPlan {
  std::vector<PlanEntry> stream;
  std::size_t useful_count = 0;
  std::size_t dummy_count = 0;
  double overhead_ratio = 0.0;  // dummies / useful

  Vec distances() const;
};

/// No dummy schedule satisfying the constraints was found.
struct PlanInfeasible : std::runtime_error {
  std::size_t failing_index;
  PlanInfeasible(const std::string& msg, std::size_t index)
      : std::runtime_error(msg), failing_index(index) {}
};

/// Most dummies allowed per useful entry before the plan is infeasible.
inline constexpr int kMaxDummiesPerUseful = 100;

/// Given an attack's d_min stream and the detection threshold, interleaves
/// dummy distances so that replaying the combined stream through the
/// detector's decide loop never raises an alarm. Dummies are drawn from a
/// normal envelope fitted to the current distance set and rejected until the
/// checkpoint constraint holds; a stream that never alarms comes back
/// unchanged. Plans are verified by replay before being returned.
EvasionPlan plan_dummy_distances(const Vec& attack_dmins, double delta,
                                 const detector::DetectorConfig& cfg, Rng& rng);

/// True if any checkpoint of decide_stream fires on these distances.
bool stream_alarms(const Vec& dmins, const detector::DetectorConfig& cfg);

void write_plan(std::ostream& out, const EvasionPlan& plan);

}  // namespace exlab::evasion
