#pragma once

#include <map>
#include <optional>
#include <string>

#include "exlab/common.hpp"
#include "exlab/detector.hpp"
#include "exlab/extraction.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::harness {

/// Flat key=value config document. '#' starts a comment; unknown keys are
/// rejected so typos fail loudly.
std::map<std::string, std::string> load_kv_file(const std::string& path);

struct ExperimentConfig {
  // dataset
  std::string dataset = "blobs";  // "blobs" or a CSV path
  int classes = 3;
  int dim = 2;
  int per_class = 150;       // target training samples per class
  int test_per_class = 100;  // held-out evaluation samples per class
  double margin = 8.0;

  // target model
  std::vector<int> target_hidden = {16, 16};
  nn::TrainingConfig target_training;  // defaults set in the constructor

  // attack & detector
  extraction::AttackConfig attack;
  detector::DetectorConfig detector_cfg;

  // evaluation
  bool eval_transfer = true;
  bool eval_fpr = false;
  double transfer_epsilon = 64.0 / 255.0;
  int fpr_clients = 5;
  int fpr_length = 6000;

  std::uint64_t master_seed = 0;
  std::string output_dir = ".";

  ExperimentConfig();
  static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv);
  static ExperimentConfig from_file(const std::string& path);
  std::map<std::string, std::string> echo() const;
};

struct MetricsReport {
  double test_agreement = 0.0;
  double ru_agreement = 0.0;
  std::optional<double> transfer_targeted;
  std::optional<double> transfer_nontargeted;
  /// Per-scenario FPR (mean over that scenario's clients) plus their average.
  std::optional<double> fpr;  // average over scenarios
  std::map<std::string, double> fpr_by_scenario;
  std::optional<std::uint64_t> detection_index;
  std::uint64_t queries_total = 0;
  std::size_t growing_set_bytes = 0;
  Vec round_test_agreement;  // per training round, when an attack ran
  std::map<std::string, std::string> config_echo;
  std::uint64_t seed = 0;
  std::string stage_failed;  // empty on success
  std::string error;

  std::string to_json() const;
};

/// Trains the target, runs the configured attack, replays the query log
/// through the detector, and computes the toggled metrics. Writes report.json
/// plus query/verdict traces into the output directory. Fully deterministic
/// under the master seed. Stage failures are recorded in the report instead
/// of propagating, and partial artifacts are kept.
MetricsReport run_experiment(const ExperimentConfig& cfg);

/// Builds the experiment's datasets: {target training, attacker seeds, test}.
struct ExperimentData {
  nn::Dataset target_train;
  nn::Dataset seeds;
  nn::Dataset test;
};
ExperimentData prepare_data(const ExperimentConfig& cfg);

nn::Network train_target(const ExperimentConfig& cfg, const nn::Dataset& train);

}  // namespace exlab::harness
