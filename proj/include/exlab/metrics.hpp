#pragma once

#include <functional>
#include <optional>

#include "exlab/common.hpp"
#include "exlab/crafting.hpp"
#include "exlab/detector.hpp"
#include "exlab/extraction.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::harness {

using Labeler = std::function<int(const Vec&)>;

inline Labeler labeler_of(const nn::Network& net) {
  return [&net](const Vec& x) { return nn::predict_label(net, x); };
}

/// Oracle-backed reference labels; every evaluation bills the query counter,
/// as it would for an attacker measuring against the real API.
inline Labeler labeler_of(extraction::Oracle& oracle) {
  return [&oracle](const Vec& x) { return oracle.query(x).label; };
}

/// Macro-averaged F-score of the substitute's predictions with the reference
/// labels as ground truth, averaged over all `classes`. A class absent from
/// the reference predictions contributes an F-score of 0.
double test_agreement(const Labeler& reference, const nn::Network& substitute,
                      const nn::Dataset& test, int classes);
double test_agreement(const nn::Network& target, const nn::Network& substitute,
                      const nn::Dataset& test);

/// Plain prediction agreement on `n` uniform draws from [-1,1]^dim.
double ru_agreement(const Labeler& reference, const nn::Network& substitute, int dim,
                    Rng& rng, int n = 4000);
double ru_agreement(const nn::Network& target, const nn::Network& substitute, Rng& rng,
                    int n = 4000);

struct Transferability {
  double targeted = 0.0;
  double non_targeted = 0.0;
};

/// Crafts on the substitute, evaluates on the reference. Non-targeted
/// success: the reference label changes. Targeted: the reference label
/// equals the declared target, averaged over the class suite per seed.
Transferability transferability(const Labeler& reference, const nn::Network& substitute,
                                const nn::Dataset& seeds, const craft::CraftSpec& spec);

/// Fraction of fixed-size query chunks containing at least one attack
/// verdict; a trailing partial chunk counts as a chunk.
double fpr(const std::vector<detector::Status>& verdicts, int chunk = 50);

/// Per-query monitor trace for one client, with alarm feedback disabled so W
/// values do not depend on the threshold. Exact for FPR-zero thresholds and
/// for first-alarm indices.
struct MonitorTrace {
  std::vector<std::optional<double>> w;  // null while warming up
  std::vector<bool> degenerate;
  Vec per_query_dmin;  // 0 for class-initializing queries
  std::size_t growing_set_bytes = 0;
  Vec dmins;  // the detector's D (one entry per non-initializing query)
};

MonitorTrace monitor_stream(const std::vector<Vec>& samples, const std::vector<int>& classes,
                            const detector::DetectorConfig& cfg);

/// First 1-based query index whose verdict would be attack at threshold
/// delta, from a monitor trace.
std::optional<std::uint64_t> first_alarm_at(const MonitorTrace& trace, double delta);

/// Chunked FPR at threshold delta, from a monitor trace.
double fpr_at(const MonitorTrace& trace, double delta, int chunk = 50);

/// Replays a query log through the detector (monitor mode) and reports the
/// 1-based query count until the first alarm at cfg.delta, if any.
std::optional<std::uint64_t> detection_speed(const extraction::QueryLog& log,
                                             const detector::DetectorConfig& cfg);

}  // namespace exlab::harness
