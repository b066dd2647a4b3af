#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exlab/common.hpp"
#include "exlab/crafting.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::extraction {

enum class ResponseMode { labels_only, probabilities };

struct OracleResponse {
  int label = 0;
  Vec probs;  // empty in labels_only mode
};

/// Black-box prediction interface. Every call to query() bills the counter
/// exactly once; responses are deterministic for a fixed target model.
class Oracle {
 public:
  virtual ~Oracle() = default;

  OracleResponse query(const Vec& x);
  ResponseMode response_mode() const { return mode_; }
  std::uint64_t query_count() const { return count_; }
  virtual int input_dim() const = 0;
  virtual int class_count() const = 0;

 protected:
  explicit Oracle(ResponseMode mode) : mode_(mode) {}
  virtual Vec predict_probs(const Vec& x) = 0;

 private:
  ResponseMode mode_;
  std::uint64_t count_ = 0;
};

/// Oracle over an in-process target network.
class NetworkOracle final : public Oracle {
 public:
  NetworkOracle(nn::Network target, ResponseMode mode)
      : Oracle(mode), target_(std::move(target)) {}
  const nn::Network& target() const { return target_; }
  int input_dim() const override { return target_.input_dim; }
  int class_count() const override { return target_.class_count; }

 private:
  Vec predict_probs(const Vec& x) override { return nn::forward(target_, x); }
  nn::Network target_;
};

enum class Synthesis { jbda, trnd_fgsm, trnd_ifgsm, color, tramer };
enum class HyperStrategy { papernot_rule, same, cv_search };
enum class RetrainMode { from_scratch, incremental };
enum class Provenance { seed, synthetic, random, linesearch };

const char* provenance_tag(Provenance p);
Provenance provenance_from_tag(const std::string& tag);

struct AttackConfig {
  int seeds_per_class = 10;
  std::uint64_t budget = 102400;
  int duplication_rounds = 10;  // rho
  Synthesis synthesis = Synthesis::jbda;
  double step_size = 25.5 / 255.0;  // lambda
  int expansion_factor = 2;         // k; jbda is fixed at 2
  HyperStrategy hyper_strategy = HyperStrategy::papernot_rule;
  ResponseMode response_mode = ResponseMode::labels_only;
  double reservoir_fraction = 1.0;
  /// Unset: from_scratch for cv_search/same, incremental for papernot_rule.
  std::optional<RetrainMode> retrain_mode;
  int craft_steps = craft::kDefaultIterativeSteps;  // trnd_ifgsm substeps
  int channels = 1;                                 // color strategy
  std::uint64_t seed = 0;

  RetrainMode effective_retrain_mode() const;
  void validate(int class_count) const;
};

struct LabeledEntry {
  Vec sample;
  OracleResponse response;
  Provenance provenance;
};

struct LabeledSet {
  std::vector<LabeledEntry> entries;

  /// Training view: hard labels or the oracle's probability vectors.
  nn::Dataset as_dataset(ResponseMode mode) const;
  /// Hard-label view regardless of response mode (used by CV search).
  nn::Dataset as_label_dataset() const;
};

struct QueryRecord {
  std::uint64_t index = 0;  // 0-based query order
  int round = 0;
  Provenance provenance = Provenance::seed;
  int label = 0;  // oracle's class response
  Vec sample;
};

struct QueryLog {
  std::vector<QueryRecord> records;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static QueryLog load(std::istream& in);
  static QueryLog load(const std::string& path);
};

struct ExtractionResult {
  nn::Network substitute;
  QueryLog log;
  LabeledSet labeled;
  nn::TrainingConfig hyperparameters;
  std::vector<std::string> flags;
  /// Substitute after the initial training and after each duplication round.
  std::vector<nn::Network> round_substitutes;
};

/// Synthetic-sample generation for one duplication round. jbda emits one
/// child per labeled entry; trnd and color emit expansion_factor-1 children
/// per entry. All outputs are clipped to the feature range.
std::vector<Vec> generate_synthetic(const LabeledSet& labeled, const nn::Network& substitute,
                                    const AttackConfig& cfg, int class_count, Rng& rng);

/// Uniform subsample without replacement of ceil(fraction * |u|) items,
/// preserving order.
std::vector<Vec> reservoir_subsample(const std::vector<Vec>& u, double fraction, Rng& rng);

/// Hyperparameter strategy resolution. cv_search runs the full five-fold
/// Bayesian search on the labeled seed set.
nn::TrainingConfig resolve_hyperparameters(HyperStrategy strategy, const nn::Dataset& seeds,
                                           const std::optional<nn::TrainingConfig>& target_cfg,
                                           const nn::Network& arch, Rng& rng);

/// The full extraction loop: query seeds, resolve hyperparameters, then
/// alternate synthetic generation, querying, and substitute training. Stops
/// early (with a "budget_truncated" flag) when the budget runs out mid-round.
ExtractionResult run_extraction(Oracle& oracle, const nn::Dataset& seeds,
                                const nn::Network& arch, const AttackConfig& cfg,
                                const std::optional<nn::TrainingConfig>& target_cfg = {});

/// Random-then-line-search extraction. The first quarter of the budget is
/// spent on uniform random queries; the rest probes binary-search midpoints
/// between label-discordant random-phase pairs. Falls back to random queries
/// (flag "degenerate_single_class") when every random response agrees.
ExtractionResult tramer_attack(Oracle& oracle, const nn::Network& arch, std::uint64_t budget,
                               const nn::TrainingConfig& train_cfg, Rng& rng);

}  // namespace exlab::extraction
