#include "exlab/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace exlab::harness {

double test_agreement(const Labeler& reference, const nn::Network& substitute,
                      const nn::Dataset& test, int classes) {
  if (test.samples.empty()) throw std::invalid_argument("test set is empty");
  std::vector<long> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (const Vec& x : test.samples) {
    const int truth = reference(x);
    const int pred = nn::predict_label(substitute, x);
    if (truth == pred)
      ++tp[truth];
    else {
      ++fn[truth];
      ++fp[pred];
    }
  }
  double macro = 0.0;
  for (int c = 0; c < classes; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    macro += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return macro / classes;
}

double test_agreement(const nn::Network& target, const nn::Network& substitute,
                      const nn::Dataset& test) {
  return test_agreement(labeler_of(target), substitute, test, target.class_count);
}

double ru_agreement(const Labeler& reference, const nn::Network& substitute, int dim,
                    Rng& rng, int n) {
  std::uniform_real_distribution<double> feature(-1.0, 1.0);
  int hits = 0;
  Vec x(dim);
  for (int i = 0; i < n; ++i) {
    for (double& v : x) v = feature(rng);
    if (reference(x) == nn::predict_label(substitute, x)) ++hits;
  }
  return static_cast<double>(hits) / n;
}

double ru_agreement(const nn::Network& target, const nn::Network& substitute, Rng& rng,
                    int n) {
  return ru_agreement(labeler_of(target), substitute, target.input_dim, rng, n);
}

Transferability transferability(const Labeler& reference, const nn::Network& substitute,
                                const nn::Dataset& seeds, const craft::CraftSpec& spec) {
  if (seeds.samples.empty()) throw std::invalid_argument("no seed samples");
  Transferability t;
  craft::CraftSpec non_targeted = spec;
  non_targeted.mode = craft::Mode::non_targeted;
  craft::CraftSpec targeted = spec;
  targeted.mode = craft::Mode::targeted;

  double nt_hits = 0.0, t_rate_sum = 0.0;
  for (const Vec& x : seeds.samples) {
    const int base = reference(x);
    const Vec adv = craft::craft(substitute, x, non_targeted);
    if (reference(adv) != base) nt_hits += 1.0;

    const auto suite = craft::craft_targeted_suite(substitute, x, targeted);
    double hits = 0.0;
    for (const auto& [cls, variant] : suite)
      if (reference(variant) == cls) hits += 1.0;
    t_rate_sum += hits / static_cast<double>(suite.size());
  }
  const double n = static_cast<double>(seeds.samples.size());
  t.non_targeted = nt_hits / n;
  t.targeted = t_rate_sum / n;
  return t;
}

double fpr(const std::vector<detector::Status>& verdicts, int chunk) {
  if (chunk < 1) throw std::invalid_argument("chunk must be >= 1");
  if (verdicts.empty()) return 0.0;
  std::size_t chunks = 0, flagged = 0;
  for (std::size_t start = 0; start < verdicts.size(); start += chunk) {
    ++chunks;
    const std::size_t stop = std::min(verdicts.size(), start + chunk);
    for (std::size_t i = start; i < stop; ++i) {
      if (verdicts[i] == detector::Status::attack) {
        ++flagged;
        break;
      }
    }
  }
  return static_cast<double>(flagged) / static_cast<double>(chunks);
}

MonitorTrace monitor_stream(const std::vector<Vec>& samples, const std::vector<int>& classes,
                            const detector::DetectorConfig& cfg) {
  if (samples.size() != classes.size())
    throw std::invalid_argument("samples and classes differ in length");
  // Alarm feedback (growing-set freezing, blocking) is disabled so the
  // W trace does not depend on the threshold. The trace matches a live
  // detector exactly up to and including its first alarm, which is all the
  // first-alarm and zero-FPR measurements need.
  detector::ClientState state(cfg, /*alarm_feedback=*/false);
  MonitorTrace t;
  t.w.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const detector::Verdict v = state.observe(samples[i], classes[i]);
    t.w.push_back(v.w);
    t.degenerate.push_back(v.degenerate);
    t.per_query_dmin.push_back(v.d_min);
  }
  t.growing_set_bytes = state.growing_set_bytes();
  t.dmins = state.distance_stream();
  return t;
}

std::optional<std::uint64_t> first_alarm_at(const MonitorTrace& trace, double delta) {
  for (std::size_t i = 0; i < trace.w.size(); ++i) {
    if (!trace.w[i]) continue;
    if (trace.degenerate[i] || *trace.w[i] < delta) return i + 1;
  }
  return std::nullopt;
}

double fpr_at(const MonitorTrace& trace, double delta, int chunk) {
  std::vector<detector::Status> verdicts;
  verdicts.reserve(trace.w.size());
  for (std::size_t i = 0; i < trace.w.size(); ++i) {
    if (!trace.w[i])
      verdicts.push_back(detector::Status::warming_up);
    else if (trace.degenerate[i] || *trace.w[i] < delta)
      verdicts.push_back(detector::Status::attack);
    else
      verdicts.push_back(detector::Status::benign);
  }
  return fpr(verdicts, chunk);
}

std::optional<std::uint64_t> detection_speed(const extraction::QueryLog& log,
                                             const detector::DetectorConfig& cfg) {
  std::vector<Vec> samples;
  std::vector<int> classes;
  samples.reserve(log.records.size());
  for (const extraction::QueryRecord& r : log.records) {
    samples.push_back(r.sample);
    classes.push_back(r.label);
  }
  const MonitorTrace trace = monitor_stream(samples, classes, cfg);
  return first_alarm_at(trace, cfg.delta);
}

}  // namespace exlab::harness
