#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "exlab/common.hpp"

namespace exlab::detector {

enum class Metric { l2, l1 };
enum class ResponseMode { flag, block, deceive };

struct DetectorConfig {
  double delta = 0.96;
  int window_min = 100;       // no verdicts until |D| exceeds this
  double outlier_sigmas = 3.0;
  Metric metric = Metric::l2;
  ResponseMode response_mode = ResponseMode::flag;

  void validate() const;
};

double distance(const Vec& a, const Vec& b, Metric metric);

enum class Status { warming_up, benign, attack };

struct Verdict {
  Status status = Status::warming_up;
  std::optional<double> w;  // present once the window is filled
  double d_min = 0.0;       // 0 for class-initializing queries
  int trimmed_count = 0;
  bool degenerate = false;  // trimmed distance set was unusable for W
};

struct DecideResult {
  bool attack = false;
  double w = 0.0;
  int trimmed_count = 0;
  bool degenerate = false;
};

/// Trims values more than `outlier_sigmas` population standard deviations
/// from the mean, then thresholds the W statistic: attack iff W < delta.
/// A degenerate trimmed set (fewer than 3 values or all equal) counts as an
/// attack with W = 0: constant distances are the signature of fixed-step
/// synthetic queries.
DecideResult decide(const Vec& distances, const DetectorConfig& cfg);

/// Runs decide after each append of `distances[i]`, mirroring the per-query
/// loop. Entry i is nullopt while the window is still filling. Evasion
/// planning and replay both go through this, so they can never drift from
/// the detector.
std::vector<std::optional<DecideResult>> decide_stream(const Vec& distances,
                                                       const DetectorConfig& cfg);

/// Queries were refused because the client is blocked after an alarm.
struct DeniedQuery : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClassState {
  std::vector<Vec> growing;  // G_c
  Vec growing_dmins;         // D_Gc (first entry is the initialization 0)
  double threshold = 0.0;    // T_c
};

/// Per-client detection state. Single writer: one client's queries must be
/// observed in order by one logical thread; distinct clients are independent.
class ClientState {
 public:
  /// With alarm_feedback false the state never freezes or blocks on alarms;
  /// the harness uses this to measure threshold-independent W traces.
  explicit ClientState(DetectorConfig cfg, bool alarm_feedback = true);

  /// Processes one query. `predicted_class` is the target model's prediction
  /// for x, supplied by the caller. Throws DeniedQuery when the client is
  /// blocked, ShapeError on dimension mismatch.
  Verdict observe(const Vec& x, int predicted_class);

  const DetectorConfig& config() const { return cfg_; }
  const Vec& distance_stream() const { return dmins_; }
  const std::map<int, ClassState>& classes() const { return classes_; }
  std::uint64_t queries_seen() const { return queries_; }

  /// Live alarm flag (recomputed every query; may reset if W recovers).
  bool alarm() const { return alarm_; }
  /// 1-based query rank of the first alarm, if any (sticky).
  std::optional<std::uint64_t> first_alarm_index() const { return first_alarm_; }

  std::size_t growing_set_bytes() const;

  void save(std::ostream& out) const;
  static ClientState load(std::istream& in);

 private:
  DetectorConfig cfg_;
  bool alarm_feedback_ = true;
  std::map<int, ClassState> classes_;
  Vec dmins_;  // D, append-ordered
  bool alarm_ = false;
  std::optional<std::uint64_t> first_alarm_;
  std::uint64_t queries_ = 0;
  std::optional<int> dim_;
};

/// Per-client states keyed by an opaque caller-supplied client id. Eviction
/// and TTL are out of scope. Distinct clients may be processed concurrently,
/// but each client's queries must arrive in order from one logical thread.
class ClientTable {
 public:
  explicit ClientTable(DetectorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  Verdict observe(const std::string& client_id, const Vec& x, int predicted_class) {
    return state(client_id).observe(x, predicted_class);
  }
  ClientState& state(const std::string& client_id) {
    auto it = clients_.find(client_id);
    if (it == clients_.end()) it = clients_.emplace(client_id, ClientState(cfg_)).first;
    return it->second;
  }
  const std::map<std::string, ClientState>& clients() const { return clients_; }

 private:
  DetectorConfig cfg_;
  std::map<std::string, ClientState> clients_;
};

struct Response {
  bool denied = false;
  bool alarmed = false;
  int label = 0;
  Vec probs;
};

/// Applies the configured response policy to a model prediction. In deceive
/// mode an alarmed client sees the top two probabilities swapped so the
/// second-likeliest class is reported.
Response respond(bool alarmed, const Vec& prediction, ResponseMode mode);

/// Line format: query_index,class,d_min,W-or-null,status
void write_verdict_line(std::ostream& out, std::uint64_t query_index, int cls,
                        const Verdict& v);

}  // namespace exlab::detector
