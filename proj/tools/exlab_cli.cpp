// Command-line front end: train targets, run extraction attacks, replay
// query logs through the detector, plan evasion schedules, sweep detection
// thresholds, and produce full experiment reports.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "exlab/dataset.hpp"
#include "exlab/evasion.hpp"
#include "exlab/experiment.hpp"
#include "exlab/metrics.hpp"
#include "exlab/streams.hpp"

using namespace exlab;

namespace {

harness::ExperimentConfig load_config(const std::string& path, std::uint64_t seed,
                                      const std::string& out_dir) {
  harness::ExperimentConfig cfg =
      path.empty() ? harness::ExperimentConfig{} : harness::ExperimentConfig::from_file(path);
  if (seed != static_cast<std::uint64_t>(-1)) cfg.master_seed = seed;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  std::filesystem::create_directories(cfg.output_dir);
  return cfg;
}

int fail(const std::string& stage, const std::exception& e) {
  std::cerr << "error[" << stage << "]: " << e.what() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model extraction attack & detection laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = static_cast<std::uint64_t>(-1);
  app.add_option("--config", config_path, "flat key=value experiment config");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "master seed override");

  auto* train_cmd = app.add_subcommand("train-target", "train and save the target model");
  auto* attack_cmd = app.add_subcommand("attack", "run the configured extraction attack");
  auto* detect_cmd = app.add_subcommand("detect", "replay a query log through the detector");
  auto* evade_cmd = app.add_subcommand("evade", "plan dummy distances for a query log");
  auto* sweep_cmd = app.add_subcommand("sweep-delta", "FPR and detection index vs delta");
  auto* report_cmd = app.add_subcommand("report", "full experiment with JSON report");

  std::string log_path;
  detect_cmd->add_option("--log", log_path, "query log to replay")->required();
  evade_cmd->add_option("--log", log_path, "query log of the attack to hide");
  double delta_lo = 0.5, delta_hi = 0.99, delta_step = 0.01;
  sweep_cmd->add_option("--delta-lo", delta_lo, "sweep start");
  sweep_cmd->add_option("--delta-hi", delta_hi, "sweep end");
  sweep_cmd->add_option("--delta-step", delta_step, "sweep step");

  CLI11_PARSE(app, argc, argv);

  harness::ExperimentConfig cfg;
  try {
    cfg = load_config(config_path, seed, out_dir);
  } catch (const std::exception& e) {
    return fail("config", e);
  }

  if (train_cmd->parsed()) {
    try {
      const harness::ExperimentData data = harness::prepare_data(cfg);
      const nn::Network target = harness::train_target(cfg, data.target_train);
      nn::save_network(target, cfg.output_dir + "/target_model.txt");
      harness::save_csv_dataset(data.target_train, cfg.output_dir + "/target_train.csv");
      harness::save_csv_dataset(data.seeds, cfg.output_dir + "/attacker_seeds.csv");
      harness::save_csv_dataset(data.test, cfg.output_dir + "/test.csv");
      std::cout << "trained target (" << target.parameter_count() << " parameters) -> "
                << cfg.output_dir << "/target_model.txt\n";
      return 0;
    } catch (const std::exception& e) {
      return fail("target", e);
    }
  }

  if (attack_cmd->parsed() || report_cmd->parsed()) {
    if (attack_cmd->parsed()) cfg.eval_fpr = false;
    const harness::MetricsReport report = harness::run_experiment(cfg);
    std::cout << report.to_json();
    if (!report.stage_failed.empty()) {
      std::cerr << "error[" << report.stage_failed << "]: " << report.error << "\n";
      return 1;
    }
    return 0;
  }

  if (detect_cmd->parsed()) {
    try {
      const auto log = extraction::QueryLog::load(log_path);
      detector::ClientState state(cfg.detector_cfg);
      std::ofstream verdicts(cfg.output_dir + "/verdicts.csv");
      std::optional<std::uint64_t> first_alarm;
      for (const auto& rec : log.records) {
        detector::Verdict v;
        try {
          v = state.observe(rec.sample, rec.label);
        } catch (const detector::DeniedQuery&) {
          std::cout << "client blocked; " << log.records.size() - rec.index
                    << " queries refused\n";
          break;
        }
        detector::write_verdict_line(verdicts, rec.index, rec.label, v);
        if (!first_alarm && v.status == detector::Status::attack)
          first_alarm = rec.index + 1;
      }
      if (first_alarm)
        std::cout << "attack detected after " << *first_alarm << " queries\n";
      else
        std::cout << "no alarm over " << log.records.size() << " queries\n";
      std::cout << "growing-set bytes: " << state.growing_set_bytes() << "\n";
      return 0;
    } catch (const std::exception& e) {
      return fail("detect", e);
    }
  }

  if (evade_cmd->parsed()) {
    try {
      if (log_path.empty()) throw std::invalid_argument("--log is required");
      const auto log = extraction::QueryLog::load(log_path);
      std::vector<Vec> samples;
      std::vector<int> classes;
      for (const auto& rec : log.records) {
        samples.push_back(rec.sample);
        classes.push_back(rec.label);
      }
      const harness::MonitorTrace trace =
          harness::monitor_stream(samples, classes, cfg.detector_cfg);
      Rng rng(cfg.master_seed * 977 + 5);
      const evasion::EvasionPlan plan = evasion::plan_dummy_distances(
          trace.dmins, cfg.detector_cfg.delta, cfg.detector_cfg, rng);
      std::ofstream out(cfg.output_dir + "/evasion_plan.csv");
      evasion::write_plan(out, plan);
      std::ofstream summary(cfg.output_dir + "/evasion_summary.json");
      summary << "{\n  \"useful\": " << plan.useful_count << ",\n  \"dummies\": "
              << plan.dummy_count << ",\n  \"overhead_ratio\": " << plan.overhead_ratio
              << "\n}\n";
      std::cout << "useful " << plan.useful_count << ", dummies " << plan.dummy_count
                << ", overhead +" << static_cast<int>(plan.overhead_ratio * 100) << "%\n";
      return 0;
    } catch (const std::exception& e) {
      return fail("evade", e);
    }
  }

  if (sweep_cmd->parsed()) {
    try {
      const harness::ExperimentData data = harness::prepare_data(cfg);
      const nn::Network target = harness::train_target(cfg, data.target_train);

      // Attack trace at the configured attack settings.
      extraction::NetworkOracle oracle(target, cfg.attack.response_mode);
      extraction::AttackConfig acfg = cfg.attack;
      acfg.seed = cfg.master_seed * 65537 + 101;
      const auto attack = extraction::run_extraction(oracle, data.seeds, target, acfg,
                                                     cfg.target_training);
      std::vector<Vec> atk_samples;
      std::vector<int> atk_classes;
      for (const auto& rec : attack.log.records) {
        atk_samples.push_back(rec.sample);
        atk_classes.push_back(rec.label);
      }
      const auto attack_trace =
          harness::monitor_stream(atk_samples, atk_classes, cfg.detector_cfg);

      // Benign traces across the three stream modes.
      harness::SampleGenerator fresh;
      if (cfg.dataset == "blobs") {
        const harness::BlobDistribution dist =
            harness::make_blob_distribution(cfg.classes, cfg.dim, cfg.margin);
        fresh = [dist](Rng& rng) { return dist.sample_any(rng); };
      }
      std::vector<harness::MonitorTrace> benign;
      for (int client = 0; client < cfg.fpr_clients; ++client) {
        for (const harness::StreamMode mode :
             {harness::StreamMode::iid_natural, harness::StreamMode::random_uniform,
              harness::StreamMode::sequences}) {
          harness::BenignStreamSpec spec;
          spec.mode = mode;
          spec.length = cfg.fpr_length;
          spec.dim = static_cast<int>(data.test.samples[0].size());
          spec.seed = cfg.master_seed * 131 + 1000 + client * 3 + static_cast<int>(mode);
          const auto stream = fresh ? harness::benign_stream(spec, fresh)
                                    : harness::benign_stream(spec, &data.test);
          std::vector<int> classes;
          for (const Vec& x : stream) classes.push_back(nn::predict_label(target, x));
          benign.push_back(harness::monitor_stream(stream, classes, cfg.detector_cfg));
        }
      }

      std::ofstream out(cfg.output_dir + "/delta_sweep.csv");
      out << "delta,fpr,detection_index\n";
      for (double delta = delta_lo; delta <= delta_hi + 1e-12; delta += delta_step) {
        double worst_fpr = 0.0;
        for (const auto& trace : benign)
          worst_fpr = std::max(worst_fpr, harness::fpr_at(trace, delta));
        const auto det = harness::first_alarm_at(attack_trace, delta);
        out << delta << "," << worst_fpr << ",";
        if (det)
          out << *det;
        else
          out << "null";
        out << "\n";
      }
      std::cout << "wrote " << cfg.output_dir << "/delta_sweep.csv\n";
      return 0;
    } catch (const std::exception& e) {
      return fail("sweep", e);
    }
  }

  return 0;
}
