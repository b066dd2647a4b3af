#include "exlab/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "exlab/crafting.hpp"
#include "exlab/dataset.hpp"
#include "exlab/metrics.hpp"
#include "exlab/streams.hpp"

namespace exlab::harness {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(std::stoi(trim(field)));
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("not a boolean: " + s);
}

extraction::Synthesis parse_synthesis(const std::string& s) {
  if (s == "jbda") return extraction::Synthesis::jbda;
  if (s == "trnd_fgsm") return extraction::Synthesis::trnd_fgsm;
  if (s == "trnd_ifgsm") return extraction::Synthesis::trnd_ifgsm;
  if (s == "color") return extraction::Synthesis::color;
  if (s == "tramer") return extraction::Synthesis::tramer;
  throw std::invalid_argument("unknown attack: " + s);
}

const char* synthesis_tag(extraction::Synthesis s) {
  switch (s) {
    case extraction::Synthesis::jbda: return "jbda";
    case extraction::Synthesis::trnd_fgsm: return "trnd_fgsm";
    case extraction::Synthesis::trnd_ifgsm: return "trnd_ifgsm";
    case extraction::Synthesis::color: return "color";
    case extraction::Synthesis::tramer: return "tramer";
  }
  return "?";
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + " is not key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

ExperimentConfig::ExperimentConfig() {
  target_training.optimizer = nn::Optimizer::adam;
  target_training.learning_rate = 0.001;
  target_training.epochs = 100;
  target_training.batch_size = 32;

  attack.seeds_per_class = 10;
  attack.budget = 2000;
  attack.duplication_rounds = 5;
  attack.step_size = 25.5 / 255.0;

  detector_cfg.delta = 0.92;
}

ExperimentConfig ExperimentConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "dataset") cfg.dataset = value;
    else if (key == "classes") cfg.classes = std::stoi(value);
    else if (key == "dim") cfg.dim = std::stoi(value);
    else if (key == "per_class") cfg.per_class = std::stoi(value);
    else if (key == "test_per_class") cfg.test_per_class = std::stoi(value);
    else if (key == "margin") cfg.margin = std::stod(value);
    else if (key == "target_hidden") cfg.target_hidden = parse_int_list(value);
    else if (key == "target_optimizer")
      cfg.target_training.optimizer =
          value == "adam" ? nn::Optimizer::adam : nn::Optimizer::sgd_momentum;
    else if (key == "target_lr") cfg.target_training.learning_rate = std::stod(value);
    else if (key == "target_epochs") cfg.target_training.epochs = std::stoi(value);
    else if (key == "target_batch") cfg.target_training.batch_size = std::stoi(value);
    else if (key == "attack") cfg.attack.synthesis = parse_synthesis(value);
    else if (key == "seeds_per_class") cfg.attack.seeds_per_class = std::stoi(value);
    else if (key == "budget") cfg.attack.budget = std::stoull(value);
    else if (key == "rounds") cfg.attack.duplication_rounds = std::stoi(value);
    else if (key == "lambda") cfg.attack.step_size = std::stod(value);
    else if (key == "expansion") cfg.attack.expansion_factor = std::stoi(value);
    else if (key == "hyper") {
      if (value == "papernot") cfg.attack.hyper_strategy = extraction::HyperStrategy::papernot_rule;
      else if (value == "same") cfg.attack.hyper_strategy = extraction::HyperStrategy::same;
      else if (value == "cv") cfg.attack.hyper_strategy = extraction::HyperStrategy::cv_search;
      else throw std::invalid_argument("unknown hyper strategy: " + value);
    } else if (key == "response")
      cfg.attack.response_mode = value == "probs" ? extraction::ResponseMode::probabilities
                                                  : extraction::ResponseMode::labels_only;
    else if (key == "reservoir") cfg.attack.reservoir_fraction = std::stod(value);
    else if (key == "craft_steps") cfg.attack.craft_steps = std::stoi(value);
    else if (key == "channels") cfg.attack.channels = std::stoi(value);
    else if (key == "delta") cfg.detector_cfg.delta = std::stod(value);
    else if (key == "window") cfg.detector_cfg.window_min = std::stoi(value);
    else if (key == "outlier_sigmas") cfg.detector_cfg.outlier_sigmas = std::stod(value);
    else if (key == "metric")
      cfg.detector_cfg.metric = value == "l1" ? detector::Metric::l1 : detector::Metric::l2;
    else if (key == "detector_response") {
      if (value == "flag") cfg.detector_cfg.response_mode = detector::ResponseMode::flag;
      else if (value == "block") cfg.detector_cfg.response_mode = detector::ResponseMode::block;
      else if (value == "deceive")
        cfg.detector_cfg.response_mode = detector::ResponseMode::deceive;
      else throw std::invalid_argument("unknown detector response: " + value);
    } else if (key == "eval_transfer") cfg.eval_transfer = parse_bool(value);
    else if (key == "eval_fpr") cfg.eval_fpr = parse_bool(value);
    else if (key == "epsilon") cfg.transfer_epsilon = std::stod(value);
    else if (key == "fpr_clients") cfg.fpr_clients = std::stoi(value);
    else if (key == "fpr_length") cfg.fpr_length = std::stoi(value);
    else if (key == "seed") cfg.master_seed = std::stoull(value);
    else if (key == "out") cfg.output_dir = value;
    else throw std::invalid_argument("unknown config key: " + key);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_kv(load_kv_file(path));
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
  std::map<std::string, std::string> kv;
  kv["dataset"] = dataset;
  kv["classes"] = std::to_string(classes);
  kv["dim"] = std::to_string(dim);
  kv["per_class"] = std::to_string(per_class);
  kv["test_per_class"] = std::to_string(test_per_class);
  kv["margin"] = std::to_string(margin);
  kv["target_hidden"] = join_ints(target_hidden);
  kv["target_optimizer"] =
      target_training.optimizer == nn::Optimizer::adam ? "adam" : "sgd_momentum";
  kv["target_lr"] = std::to_string(target_training.learning_rate);
  kv["target_epochs"] = std::to_string(target_training.epochs);
  kv["target_batch"] = std::to_string(target_training.batch_size);
  kv["attack"] = synthesis_tag(attack.synthesis);
  kv["seeds_per_class"] = std::to_string(attack.seeds_per_class);
  kv["budget"] = std::to_string(attack.budget);
  kv["rounds"] = std::to_string(attack.duplication_rounds);
  kv["lambda"] = std::to_string(attack.step_size);
  kv["expansion"] = std::to_string(attack.expansion_factor);
  kv["hyper"] = attack.hyper_strategy == extraction::HyperStrategy::papernot_rule ? "papernot"
                : attack.hyper_strategy == extraction::HyperStrategy::same       ? "same"
                                                                                 : "cv";
  kv["response"] =
      attack.response_mode == extraction::ResponseMode::probabilities ? "probs" : "labels";
  kv["reservoir"] = std::to_string(attack.reservoir_fraction);
  kv["craft_steps"] = std::to_string(attack.craft_steps);
  kv["channels"] = std::to_string(attack.channels);
  kv["delta"] = std::to_string(detector_cfg.delta);
  kv["window"] = std::to_string(detector_cfg.window_min);
  kv["outlier_sigmas"] = std::to_string(detector_cfg.outlier_sigmas);
  kv["metric"] = detector_cfg.metric == detector::Metric::l1 ? "l1" : "l2";
  kv["detector_response"] = detector_cfg.response_mode == detector::ResponseMode::flag ? "flag"
                            : detector_cfg.response_mode == detector::ResponseMode::block
                                ? "block"
                                : "deceive";
  kv["eval_transfer"] = eval_transfer ? "true" : "false";
  kv["eval_fpr"] = eval_fpr ? "true" : "false";
  kv["epsilon"] = std::to_string(transfer_epsilon);
  kv["fpr_clients"] = std::to_string(fpr_clients);
  kv["fpr_length"] = std::to_string(fpr_length);
  kv["seed"] = std::to_string(master_seed);
  kv["out"] = output_dir;
  return kv;
}

std::string MetricsReport::to_json() const {
  json j;
  j["schema"] = "exlab-report-1";
  j["seed"] = seed;
  j["stage_failed"] = stage_failed.empty() ? json(nullptr) : json(stage_failed);
  j["error"] = error.empty() ? json(nullptr) : json(error);
  json m;
  m["test_agreement"] = test_agreement;
  m["ru_agreement"] = ru_agreement;
  m["transfer_targeted"] = transfer_targeted ? json(*transfer_targeted) : json(nullptr);
  m["transfer_nontargeted"] = transfer_nontargeted ? json(*transfer_nontargeted) : json(nullptr);
  m["fpr"] = fpr ? json(*fpr) : json(nullptr);
  json by_scenario;
  for (const auto& [name, rate] : fpr_by_scenario) by_scenario[name] = rate;
  m["fpr_by_scenario"] = by_scenario;
  m["detection_index"] = detection_index ? json(*detection_index) : json(nullptr);
  m["queries_total"] = queries_total;
  m["growing_set_bytes"] = growing_set_bytes;
  m["round_test_agreement"] = round_test_agreement;
  j["metrics"] = m;
  json cfg;
  for (const auto& [k, v] : config_echo) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.dataset == "blobs") {
    // Independent draws from the same blob distribution for target training,
    // attacker seeds, and the held-out test set.
    Rng rng(cfg.master_seed * 7919 + 17);
    data.target_train =
        gen_blobs_dataset(cfg.classes, cfg.dim, cfg.per_class, cfg.margin, rng);
    data.seeds = gen_blobs_dataset(cfg.classes, cfg.dim, cfg.attack.seeds_per_class,
                                   cfg.margin, rng);
    data.test = gen_blobs_dataset(cfg.classes, cfg.dim, cfg.test_per_class, cfg.margin, rng);
    return data;
  }
  const nn::Dataset full = load_csv_dataset(cfg.dataset);
  auto [rest, test] = split_dataset(full, 0.2);
  data.test = std::move(test);
  // Attacker seeds: the first seeds_per_class of each class in the remainder.
  std::vector<int> taken(
      1 + *std::max_element(rest.labels.begin(), rest.labels.end()), 0);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const int c = rest.labels[i];
    if (taken[c] < cfg.attack.seeds_per_class) {
      ++taken[c];
      data.seeds.samples.push_back(rest.samples[i]);
      data.seeds.labels.push_back(c);
    } else {
      data.target_train.samples.push_back(rest.samples[i]);
      data.target_train.labels.push_back(c);
    }
  }
  return data;
}

nn::Network train_target(const ExperimentConfig& cfg, const nn::Dataset& train) {
  Rng rng(cfg.master_seed * 104729 + 3);
  nn::Network net = nn::make_network(static_cast<int>(train.samples[0].size()),
                                     cfg.target_hidden, cfg.classes, rng);
  nn::TrainingConfig tc = cfg.target_training;
  tc.seed = rng();
  return nn::train(net, train, tc);
}

MetricsReport run_experiment(const ExperimentConfig& cfg) {
  MetricsReport report;
  report.seed = cfg.master_seed;
  report.config_echo = cfg.echo();
  std::filesystem::create_directories(cfg.output_dir);
  const std::string report_path = cfg.output_dir + "/report.json";

  auto finish = [&](const char* stage, const std::exception& e) {
    report.stage_failed = stage;
    report.error = e.what();
    std::ofstream(report_path) << report.to_json();
    return report;
  };

  ExperimentData data;
  try {
    data = prepare_data(cfg);
  } catch (const std::exception& e) {
    return finish("dataset", e);
  }

  nn::Network target;
  try {
    target = train_target(cfg, data.target_train);
    nn::save_network(target, cfg.output_dir + "/target_model.txt");
  } catch (const std::exception& e) {
    return finish("target", e);
  }

  extraction::ExtractionResult attack;
  try {
    extraction::NetworkOracle oracle(target, cfg.attack.response_mode);
    extraction::AttackConfig acfg = cfg.attack;
    acfg.seed = cfg.master_seed * 65537 + 101;
    if (acfg.synthesis == extraction::Synthesis::tramer) {
      Rng rng(acfg.seed);
      attack = extraction::tramer_attack(
          oracle, target, acfg.budget,
          extraction::resolve_hyperparameters(extraction::HyperStrategy::papernot_rule,
                                              nn::Dataset{}, std::nullopt, target, rng),
          rng);
    } else {
      attack = extraction::run_extraction(oracle, data.seeds, target, acfg,
                                          cfg.target_training);
    }
    report.queries_total = oracle.query_count();
    attack.log.save(cfg.output_dir + "/query_log.csv");
    nn::save_network(attack.substitute, cfg.output_dir + "/substitute_model.txt");
  } catch (const std::exception& e) {
    return finish("attack", e);
  }

  try {
    report.test_agreement = test_agreement(target, attack.substitute, data.test);
    Rng rng(cfg.master_seed * 31 + 7);
    report.ru_agreement = ru_agreement(target, attack.substitute, rng);
    for (const nn::Network& sub : attack.round_substitutes)
      report.round_test_agreement.push_back(test_agreement(target, sub, data.test));
    if (cfg.eval_transfer) {
      craft::CraftSpec spec = craft::make_spec(craft::Method::ifgsm,
                                               craft::Mode::non_targeted, cfg.transfer_epsilon);
      const Transferability t =
          transferability(labeler_of(target), attack.substitute, data.seeds, spec);
      report.transfer_targeted = t.targeted;
      report.transfer_nontargeted = t.non_targeted;
    }
  } catch (const std::exception& e) {
    return finish("metrics", e);
  }

  try {
    std::vector<Vec> samples;
    std::vector<int> classes;
    for (const extraction::QueryRecord& r : attack.log.records) {
      samples.push_back(r.sample);
      classes.push_back(r.label);
    }
    const MonitorTrace trace = monitor_stream(samples, classes, cfg.detector_cfg);
    report.detection_index = first_alarm_at(trace, cfg.detector_cfg.delta);
    report.growing_set_bytes = trace.growing_set_bytes;
    std::ofstream verdicts(cfg.output_dir + "/verdicts.csv");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      detector::Verdict v;
      v.d_min = trace.per_query_dmin[i];
      v.w = trace.w[i];
      v.status = !trace.w[i] ? detector::Status::warming_up
                 : (trace.degenerate[i] || *trace.w[i] < cfg.detector_cfg.delta)
                     ? detector::Status::attack
                     : detector::Status::benign;
      detector::write_verdict_line(verdicts, i, classes[i], v);
    }
  } catch (const std::exception& e) {
    return finish("detect", e);
  }

  if (cfg.eval_fpr) {
    try {
      // Fresh-draw generator for blobs so 6,000-query clients never repeat a
      // query exactly; CSV corpora fall back to with-replacement draws.
      SampleGenerator fresh;
      if (cfg.dataset == "blobs") {
        const BlobDistribution dist = make_blob_distribution(cfg.classes, cfg.dim, cfg.margin);
        fresh = [dist](Rng& rng) { return dist.sample_any(rng); };
      }
      const std::pair<StreamMode, const char*> scenarios[] = {
          {StreamMode::iid_natural, "iid_natural"},
          {StreamMode::random_uniform, "random_uniform"},
          {StreamMode::sequences, "sequences"}};
      double total = 0.0;
      for (const auto& [mode, name] : scenarios) {
        double scenario_sum = 0.0;
        for (int client = 0; client < cfg.fpr_clients; ++client) {
          BenignStreamSpec spec;
          spec.mode = mode;
          spec.length = cfg.fpr_length;
          spec.dim = static_cast<int>(data.test.samples[0].size());
          spec.seed = cfg.master_seed * 131 + 1000 + client * 3 + static_cast<int>(mode);
          const std::vector<Vec> stream =
              fresh ? benign_stream(spec, fresh) : benign_stream(spec, &data.test);
          std::vector<int> classes;
          classes.reserve(stream.size());
          for (const Vec& x : stream) classes.push_back(nn::predict_label(target, x));
          const MonitorTrace trace = monitor_stream(stream, classes, cfg.detector_cfg);
          scenario_sum += fpr_at(trace, cfg.detector_cfg.delta);
        }
        const double scenario_fpr = scenario_sum / cfg.fpr_clients;
        report.fpr_by_scenario[name] = scenario_fpr;
        total += scenario_fpr;
      }
      report.fpr = total / std::size(scenarios);
    } catch (const std::exception& e) {
      return finish("fpr", e);
    }
  }

  std::ofstream(report_path) << report.to_json();
  return report;
}

}  // namespace exlab::harness
