#include "exlab/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "exlab/hyperopt.hpp"

namespace exlab::extraction {

OracleResponse Oracle::query(const Vec& x) {
  ++count_;
  Vec probs = predict_probs(x);
  OracleResponse r;
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i)
    if (probs[i] > probs[best]) best = i;
  r.label = best;
  if (mode_ == ResponseMode::probabilities) r.probs = std::move(probs);
  return r;
}

const char* provenance_tag(Provenance p) {
  switch (p) {
    case Provenance::seed: return "seed";
    case Provenance::synthetic: return "synthetic";
    case Provenance::random: return "random";
    case Provenance::linesearch: return "linesearch";
  }
  return "?";
}

Provenance provenance_from_tag(const std::string& tag) {
  if (tag == "seed") return Provenance::seed;
  if (tag == "synthetic") return Provenance::synthetic;
  if (tag == "random") return Provenance::random;
  if (tag == "linesearch") return Provenance::linesearch;
  throw std::runtime_error("unknown provenance tag: " + tag);
}

RetrainMode AttackConfig::effective_retrain_mode() const {
  if (retrain_mode) return *retrain_mode;
  return hyper_strategy == HyperStrategy::papernot_rule ? RetrainMode::incremental
                                                        : RetrainMode::from_scratch;
}

void AttackConfig::validate(int class_count) const {
  if (seeds_per_class < 1) throw std::invalid_argument("seeds_per_class must be >= 1");
  if (duplication_rounds < 0) throw std::invalid_argument("duplication_rounds must be >= 0");
  if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be > 0");
  if (!(reservoir_fraction > 0.0 && reservoir_fraction <= 1.0))
    throw std::invalid_argument("reservoir_fraction must be in (0,1]");
  if (synthesis == Synthesis::jbda && expansion_factor != 2)
    throw std::invalid_argument("jbda has a fixed expansion factor of 2");
  if ((synthesis == Synthesis::trnd_fgsm || synthesis == Synthesis::trnd_ifgsm ||
       synthesis == Synthesis::color) &&
      expansion_factor > class_count)
    throw std::invalid_argument("expansion factor exceeds the class count");
  if (expansion_factor < 2) throw std::invalid_argument("expansion_factor must be >= 2");
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
}

nn::Dataset LabeledSet::as_dataset(ResponseMode mode) const {
  nn::Dataset d;
  for (const LabeledEntry& e : entries) {
    d.samples.push_back(e.sample);
    if (mode == ResponseMode::probabilities) {
      if (e.response.probs.empty())
        throw std::invalid_argument("labeled set has no probability responses");
      d.soft_targets.push_back(e.response.probs);
    } else {
      d.labels.push_back(e.response.label);
    }
  }
  return d;
}

nn::Dataset LabeledSet::as_label_dataset() const {
  nn::Dataset d;
  for (const LabeledEntry& e : entries) {
    d.samples.push_back(e.sample);
    d.labels.push_back(e.response.label);
  }
  return d;
}

std::vector<Vec> generate_synthetic(const LabeledSet& labeled, const nn::Network& substitute,
                                    const AttackConfig& cfg, int class_count, Rng& rng) {
  if (labeled.entries.empty()) throw std::invalid_argument("labeled set is empty");
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("step_size must be > 0");
  cfg.validate(class_count);

  std::vector<Vec> out;
  switch (cfg.synthesis) {
    case Synthesis::jbda: {
      // One child per parent, stepped along the sign of the input gradient
      // at the oracle-assigned label.
      out.reserve(labeled.entries.size());
      for (const LabeledEntry& e : labeled.entries) {
        const Vec grad = nn::input_gradient(substitute, e.sample, e.response.label);
        Vec child = e.sample;
        for (std::size_t i = 0; i < child.size(); ++i)
          child[i] = clamp(child[i] + cfg.step_size * sgn(grad[i]), -1.0, 1.0);
        out.push_back(std::move(child));
      }
      return out;
    }
    case Synthesis::trnd_fgsm:
    case Synthesis::trnd_ifgsm: {
      craft::CraftSpec spec;
      spec.method = cfg.synthesis == Synthesis::trnd_fgsm ? craft::Method::fgsm
                                                          : craft::Method::ifgsm;
      spec.mode = craft::Mode::targeted;
      spec.epsilon = cfg.step_size;
      spec.steps = cfg.synthesis == Synthesis::trnd_fgsm ? 1 : cfg.craft_steps;
      out.reserve(labeled.entries.size() * (cfg.expansion_factor - 1));
      for (const LabeledEntry& e : labeled.entries) {
        // Fresh draw of expansion_factor-1 distinct target classes other
        // than the sample's current label.
        std::vector<int> others;
        others.reserve(class_count - 1);
        const int current = nn::predict_label(substitute, e.sample);
        for (int c = 0; c < class_count; ++c)
          if (c != current) others.push_back(c);
        std::shuffle(others.begin(), others.end(), rng);
        for (int j = 0; j < cfg.expansion_factor - 1; ++j)
          out.push_back(craft::craft(substitute, e.sample, spec, others[j]));
      }
      return out;
    }
    case Synthesis::color: {
      // Per-channel luminosity shift: one sign per channel per child, the
      // same step applied to every feature of that channel.
      const int dim = static_cast<int>(labeled.entries[0].sample.size());
      if (dim % cfg.channels != 0)
        throw std::invalid_argument("channels does not divide the feature count");
      const int per_channel = dim / cfg.channels;
      std::bernoulli_distribution coin(0.5);
      out.reserve(labeled.entries.size() * (cfg.expansion_factor - 1));
      for (const LabeledEntry& e : labeled.entries) {
        for (int j = 0; j < cfg.expansion_factor - 1; ++j) {
          Vec child = e.sample;
          for (int ch = 0; ch < cfg.channels; ++ch) {
            const double shift = coin(rng) ? cfg.step_size : -cfg.step_size;
            for (int k = 0; k < per_channel; ++k) {
              double& v = child[static_cast<std::size_t>(ch) * per_channel + k];
              v = clamp(v + shift, -1.0, 1.0);
            }
          }
          out.push_back(std::move(child));
        }
      }
      return out;
    }
    case Synthesis::tramer:
      throw std::invalid_argument("tramer synthesis runs through tramer_attack");
  }
  return out;
}

std::vector<Vec> reservoir_subsample(const std::vector<Vec>& u, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("fraction must be in (0,1]");
  if (fraction == 1.0) return u;
  const std::size_t count =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(u.size())));
  std::vector<Vec> out;
  out.reserve(count);
  std::sample(u.begin(), u.end(), std::back_inserter(out), count, rng);
  return out;
}

nn::TrainingConfig resolve_hyperparameters(HyperStrategy strategy, const nn::Dataset& seeds,
                                           const std::optional<nn::TrainingConfig>& target_cfg,
                                           const nn::Network& arch, Rng& rng) {
  switch (strategy) {
    case HyperStrategy::papernot_rule: {
      nn::TrainingConfig cfg;
      cfg.optimizer = nn::Optimizer::sgd_momentum;
      cfg.learning_rate = 0.01;
      cfg.momentum = 0.9;
      cfg.epochs = 10;
      cfg.batch_size = 32;
      cfg.dropout_rate = 0.0;
      cfg.seed = rng();
      return cfg;
    }
    case HyperStrategy::same: {
      if (!target_cfg)
        throw std::invalid_argument("strategy 'same' needs the target's training config");
      nn::TrainingConfig cfg = *target_cfg;
      cfg.seed = rng();
      return cfg;
    }
    case HyperStrategy::cv_search: {
      if (seeds.size() == 0) throw std::invalid_argument("cv_search needs seed samples");
      hyperopt::HyperRange range;
      const hyperopt::SearchTrace trace = hyperopt::cv_search(seeds, range, arch, rng);
      return hyperopt::best_config(trace);
    }
  }
  throw std::invalid_argument("unknown hyperparameter strategy");
}

namespace {

nn::Network fresh_substitute(const nn::Network& arch, Rng& rng) {
  std::vector<int> hidden;
  for (std::size_t li = 0; li + 1 < arch.layers.size(); ++li)
    hidden.push_back(arch.layers[li].out_dim());
  return nn::make_network(arch.input_dim, hidden, arch.class_count, rng);
}

struct Budget {
  std::uint64_t limit;
  std::uint64_t used = 0;
  bool left() const { return used < limit; }
  void charge() { ++used; }
};

void record_query(QueryLog& log, LabeledSet& labeled, const Vec& x, const OracleResponse& r,
                  int round, Provenance prov) {
  log.records.push_back({static_cast<std::uint64_t>(log.records.size()), round, prov,
                         r.label, x});
  labeled.entries.push_back({x, r, prov});
}

}  // namespace

ExtractionResult run_extraction(Oracle& oracle, const nn::Dataset& seeds,
                                const nn::Network& arch, const AttackConfig& cfg,
                                const std::optional<nn::TrainingConfig>& target_cfg) {
  seeds.validate();
  cfg.validate(oracle.class_count());
  if (seeds.has_soft_targets())
    throw std::invalid_argument("seed datasets carry class labels");
  if (oracle.query_count() != 0)
    throw std::invalid_argument("oracle has already been queried");
  // Class balance check on the caller-declared seed labels.
  std::vector<int> counts(oracle.class_count(), 0);
  for (int label : seeds.labels) {
    if (label < 0 || label >= oracle.class_count())
      throw std::invalid_argument("seed label out of range");
    ++counts[label];
  }
  for (int c = 0; c < oracle.class_count(); ++c)
    if (counts[c] != cfg.seeds_per_class)
      throw std::invalid_argument("seeds are not balanced at seeds_per_class");
  if (cfg.budget < seeds.size())
    throw std::invalid_argument("budget is smaller than the seed set");

  Rng rng(cfg.seed);
  ExtractionResult res;
  Budget budget{cfg.budget};

  for (const Vec& x : seeds.samples) {
    budget.charge();
    record_query(res.log, res.labeled, x, oracle.query(x), 0, Provenance::seed);
  }

  res.hyperparameters = resolve_hyperparameters(
      cfg.hyper_strategy, res.labeled.as_label_dataset(), target_cfg, arch, rng);

  const RetrainMode retrain = cfg.effective_retrain_mode();
  nn::Network substitute = fresh_substitute(arch, rng);
  substitute = nn::train(substitute, res.labeled.as_dataset(cfg.response_mode),
                         res.hyperparameters);
  res.round_substitutes.push_back(substitute);

  for (int round = 1; round <= cfg.duplication_rounds; ++round) {
    std::vector<Vec> u = generate_synthetic(res.labeled, substitute, cfg,
                                            oracle.class_count(), rng);
    if (cfg.reservoir_fraction < 1.0)
      u = reservoir_subsample(u, cfg.reservoir_fraction, rng);

    bool truncated = false;
    for (const Vec& x : u) {
      if (!budget.left()) {
        truncated = true;
        break;
      }
      budget.charge();
      record_query(res.log, res.labeled, x, oracle.query(x), round, Provenance::synthetic);
    }

    nn::TrainingConfig round_cfg = res.hyperparameters;
    round_cfg.seed = rng();
    if (retrain == RetrainMode::from_scratch) {
      substitute = fresh_substitute(arch, rng);
      substitute = nn::train(substitute, res.labeled.as_dataset(cfg.response_mode), round_cfg);
    } else {
      substitute = nn::train(substitute, res.labeled.as_dataset(cfg.response_mode), round_cfg);
    }
    res.round_substitutes.push_back(substitute);

    if (truncated) {
      res.flags.push_back("budget_truncated");
      break;
    }
  }

  res.substitute = std::move(substitute);
  return res;
}

ExtractionResult tramer_attack(Oracle& oracle, const nn::Network& arch, std::uint64_t budget,
                               const nn::TrainingConfig& train_cfg, Rng& rng) {
  if (budget < 8) throw std::invalid_argument("tramer_attack: budget must be >= 8");
  if (oracle.query_count() != 0)
    throw std::invalid_argument("oracle has already been queried");
  const int dim = oracle.input_dim();

  ExtractionResult res;
  res.hyperparameters = train_cfg;
  std::uniform_real_distribution<double> feature(-1.0, 1.0);

  const std::uint64_t random_budget = budget / 4;  // 25% of the budget
  std::vector<Vec> random_points;
  std::vector<int> random_labels;
  for (std::uint64_t i = 0; i < random_budget; ++i) {
    Vec x(dim);
    for (double& v : x) v = feature(rng);
    const OracleResponse r = oracle.query(x);
    record_query(res.log, res.labeled, x, r, 0, Provenance::random);
    random_points.push_back(std::move(x));
    random_labels.push_back(r.label);
  }

  // Label-discordant pairs localize decision boundaries.
  std::vector<std::pair<std::size_t, std::size_t>> discordant;
  for (std::size_t i = 0; i < random_points.size(); ++i)
    for (std::size_t j = i + 1; j < random_points.size(); ++j)
      if (random_labels[i] != random_labels[j]) discordant.emplace_back(i, j);

  std::uint64_t remaining = budget - random_budget;
  if (discordant.empty()) {
    res.flags.push_back("degenerate_single_class");
    while (remaining-- > 0) {
      Vec x(dim);
      for (double& v : x) v = feature(rng);
      record_query(res.log, res.labeled, x, oracle.query(x), 1, Provenance::random);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, discordant.size() - 1);
    constexpr int kSearchDepth = 10;
    while (remaining > 0) {
      const auto [ia, ib] = discordant[pick(rng)];
      Vec a = random_points[ia];
      Vec b = random_points[ib];
      int label_a = random_labels[ia];
      for (int depth = 0; depth < kSearchDepth && remaining > 0; ++depth) {
        Vec mid(dim);
        for (int k = 0; k < dim; ++k) mid[k] = 0.5 * (a[k] + b[k]);
        const OracleResponse r = oracle.query(mid);
        --remaining;
        record_query(res.log, res.labeled, mid, r, 1, Provenance::linesearch);
        if (r.label == label_a)
          a = std::move(mid);
        else
          b = std::move(mid);
      }
    }
  }

  nn::Network substitute = fresh_substitute(arch, rng);
  const ResponseMode mode = oracle.response_mode();
  res.substitute = nn::train(substitute, res.labeled.as_dataset(mode), train_cfg);
  res.round_substitutes.push_back(res.substitute);
  return res;
}

void QueryLog::save(std::ostream& out) const {
  out << "exlab-querylog 1\n";
  for (const QueryRecord& r : records) {
    out << r.index << "," << r.round << "," << provenance_tag(r.provenance) << ","
        << r.label;
    char buf[32];
    for (double v : r.sample) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
}

void QueryLog::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  save(f);
}

QueryLog QueryLog::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "exlab-querylog 1")
    throw std::runtime_error("unrecognized query-log header");
  QueryLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    QueryRecord r;
    std::getline(ss, field, ',');
    r.index = std::stoull(field);
    std::getline(ss, field, ',');
    r.round = std::stoi(field);
    std::getline(ss, field, ',');
    r.provenance = provenance_from_tag(field);
    std::getline(ss, field, ',');
    r.label = std::stoi(field);
    while (std::getline(ss, field, ',')) r.sample.push_back(std::stod(field));
    log.records.push_back(std::move(r));
  }
  return log;
}

QueryLog QueryLog::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open query log: " + path);
  return load(f);
}

}  // namespace exlab::extraction
