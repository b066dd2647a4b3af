#include "exlab/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace exlab::hyperopt {

namespace {

using Point = std::array<double, 2>;

double rbf(const Point& a, const Point& b, double ls, double signal_var) {
  const double d0 = a[0] - b[0];
  const double d1 = a[1] - b[1];
  return signal_var * std::exp(-(d0 * d0 + d1 * d1) / (2.0 * ls * ls));
}

// Lower-triangular Cholesky; throws NumericError if not positive definite.
nn::Matrix cholesky(const nn::Matrix& m) {
  const int n = m.rows;
  nn::Matrix L(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      if (i == j) {
        if (s <= 0.0) throw NumericError("cholesky: matrix not positive definite");
        L(i, i) = std::sqrt(s);
      } else {
        L(i, j) = s / L(j, j);
      }
    }
  }
  return L;
}

Vec solve_lower(const nn::Matrix& L, const Vec& b) {
  const int n = L.rows;
  Vec x(n);
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= L(i, k) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

Vec solve_upper_t(const nn::Matrix& L, const Vec& b) {
  const int n = L.rows;
  Vec x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

// Map from normalized log-coordinates in [0,1]^2 to hyperparameter values.
std::pair<double, double> from_unit(const HyperRange& r, const Point& p) {
  const double lr = std::exp(std::log(r.lr_lo) + p[0] * (std::log(r.lr_hi) - std::log(r.lr_lo)));
  const double ep =
      std::exp(std::log(r.epochs_lo) + p[1] * (std::log(r.epochs_hi) - std::log(r.epochs_lo)));
  return {lr, ep};
}

nn::TrainingConfig config_at(const HyperRange& range, const Point& unit,
                             const CvSearchOptions& opts, std::uint64_t seed) {
  auto [lr, epochs] = from_unit(range, unit);
  nn::TrainingConfig cfg;
  cfg.optimizer = opts.optimizer;
  cfg.learning_rate = lr;
  cfg.momentum = opts.momentum;
  cfg.epochs = std::max(1, static_cast<int>(std::lround(epochs)));
  cfg.batch_size = opts.batch_size;
  cfg.dropout_rate = opts.dropout_rate;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

void HyperRange::validate() const {
  if (!(lr_lo > 0.0 && lr_lo < lr_hi)) throw std::invalid_argument("bad learning-rate bounds");
  if (!(epochs_lo > 0.0 && epochs_lo < epochs_hi))
    throw std::invalid_argument("bad epoch bounds");
}

std::vector<Fold> kfolds(const nn::Dataset& data, int k, Rng& rng) {
  data.validate();
  if (data.has_soft_targets())
    throw std::invalid_argument("kfolds needs hard labels");
  const std::size_t n = data.size();
  if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("fewer samples than folds");

  // Group indices by class; stratify when every class can reach every fold.
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = data.labels[i];
    if (c >= static_cast<int>(by_class.size())) by_class.resize(c + 1);
    by_class[c].push_back(i);
  }
  bool stratify = true;
  for (const auto& g : by_class)
    if (!g.empty() && g.size() < static_cast<std::size_t>(k)) stratify = false;

  std::vector<std::vector<std::size_t>> fold_indices(k);
  if (stratify) {
    // Deal classes round-robin with a cursor carried across classes so the
    // fold totals stay within one of each other.
    int cursor = 0;
    for (auto& group : by_class) {
      std::shuffle(group.begin(), group.end(), rng);
      for (std::size_t idx : group) {
        fold_indices[cursor].push_back(idx);
        cursor = (cursor + 1) % k;
      }
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) fold_indices[i % k].push_back(order[i]);
  }

  std::vector<Fold> folds(k);
  std::vector<bool> in_fold(n);
  for (int f = 0; f < k; ++f) {
    std::fill(in_fold.begin(), in_fold.end(), false);
    for (std::size_t idx : fold_indices[f]) in_fold[idx] = true;
    for (std::size_t i = 0; i < n; ++i) {
      nn::Dataset& dst = in_fold[i] ? folds[f].validation : folds[f].train;
      dst.samples.push_back(data.samples[i]);
      dst.labels.push_back(data.labels[i]);
    }
  }
  return folds;
}

GpModel gp_fit(const std::vector<Point>& points, const Vec& values, double length_scale,
               double noise_var) {
  if (points.empty() || points.size() != values.size())
    throw std::invalid_argument("gp_fit: need matching non-empty points and values");
  if (!(noise_var > 0.0)) throw std::invalid_argument("gp_fit: noise variance must be > 0");
  GpModel m;
  m.points = points;
  m.values = values;
  m.length_scale = length_scale;
  m.noise_var = noise_var;
  m.prior_mean = mean(values);
  m.signal_var = std::max(variance_pop(values), 1e-10);

  const int n = static_cast<int>(points.size());
  nn::Matrix K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      K(i, j) = rbf(points[i], points[j], length_scale, m.signal_var) +
                (i == j ? noise_var : 0.0);
  try {
    m.chol = cholesky(K);
  } catch (const NumericError&) {
    for (int i = 0; i < n; ++i) K(i, i) += 1e-8;  // one jitter attempt
    m.chol = cholesky(K);
  }
  Vec centered(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) centered[i] = values[i] - m.prior_mean;
  m.alpha = solve_upper_t(m.chol, solve_lower(m.chol, centered));
  return m;
}

std::pair<double, double> gp_predict(const GpModel& m, const Point& p) {
  const int n = static_cast<int>(m.points.size());
  Vec kstar(n);
  for (int i = 0; i < n; ++i) kstar[i] = rbf(p, m.points[i], m.length_scale, m.signal_var);
  double mu = m.prior_mean;
  for (int i = 0; i < n; ++i) mu += kstar[i] * m.alpha[i];
  const Vec v = solve_lower(m.chol, kstar);
  double var = m.signal_var;
  for (double vi : v) var -= vi * vi;
  return {mu, std::sqrt(std::max(var, 0.0))};
}

std::array<double, 2> acquire_next(const GpModel& model, const HyperRange& range,
                                   int grid_side, Rng& rng) {
  range.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double best_score = -std::numeric_limits<double>::infinity();
  Point best{0.5, 0.5};
  // Stratified candidate grid: one jittered point per cell, row-major order;
  // ties keep the first maximum.
  for (int i = 0; i < grid_side; ++i) {
    for (int j = 0; j < grid_side; ++j) {
      const Point p{(i + unit(rng)) / grid_side, (j + unit(rng)) / grid_side};
      const auto [mu, sd] = gp_predict(model, p);
      const double score = mu + sd;
      if (score > best_score) {
        best_score = score;
        best = p;
      }
    }
  }
  return best;
}

double cv_accuracy(const nn::TrainingConfig& H, const std::vector<Fold>& folds,
                   const nn::Network& arch, std::uint64_t seed) {
  if (folds.empty()) throw std::invalid_argument("cv_accuracy: no folds");
  double total = 0.0;
  int fold_index = 0;
  for (const Fold& fold : folds) {
    try {
      Rng init_rng(seed);
      std::vector<int> hidden;
      for (std::size_t li = 0; li + 1 < arch.layers.size(); ++li)
        hidden.push_back(arch.layers[li].out_dim());
      nn::Network fresh = nn::make_network(arch.input_dim, hidden, arch.class_count, init_rng);
      nn::TrainingConfig cfg = H;
      cfg.seed = seed;
      const nn::Network trained = nn::train(fresh, fold.train, cfg);
      total += nn::dataset_accuracy(trained, fold.validation);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (fold " + std::to_string(fold_index) + ")");
    }
    ++fold_index;
  }
  return total / static_cast<double>(folds.size());
}

namespace {

SearchTrace run_search(const std::function<double(const nn::TrainingConfig&)>& evaluate,
                       const HyperRange& range, Rng& rng, const CvSearchOptions& opts) {
  range.validate();
  SearchTrace trace;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Point> observed;
  Vec scores;

  auto evaluate_at = [&](const Point& p, const char* phase) {
    SearchPoint sp;
    sp.phase = phase;
    sp.config = config_at(range, p, opts, rng());
    try {
      sp.mean_accuracy = evaluate(sp.config);
    } catch (const NumericError&) {
      sp.failed = true;
      sp.mean_accuracy = 0.0;
    }
    if (!sp.failed) {
      observed.push_back(p);
      scores.push_back(sp.mean_accuracy);
    }
    trace.evaluations.push_back(std::move(sp));
  };

  // 4 corners of the box.
  for (const Point corner : {Point{0.0, 0.0}, Point{0.0, 1.0}, Point{1.0, 0.0}, Point{1.0, 1.0}})
    evaluate_at(corner, "corner");
  // 11 uniform-random points.
  for (int i = 0; i < 11; ++i) evaluate_at(Point{unit(rng), unit(rng)}, "random");
  // 15 GP-acquired points.
  for (int i = 0; i < 15; ++i) {
    if (observed.empty()) {
      evaluate_at(Point{unit(rng), unit(rng)}, "gp");
      continue;
    }
    const GpModel model = gp_fit(observed, scores);
    evaluate_at(acquire_next(model, range, opts.candidate_grid_side, rng), "gp");
  }

  bool any_ok = false;
  double best = -1.0;
  for (std::size_t i = 0; i < trace.evaluations.size(); ++i) {
    const SearchPoint& sp = trace.evaluations[i];
    if (sp.failed) continue;
    any_ok = true;
    if (sp.mean_accuracy > best) {
      best = sp.mean_accuracy;
      trace.best_index = i;
    }
  }
  if (!any_ok) throw NumericError("cv_search: every evaluation failed");
  return trace;
}

}  // namespace

SearchTrace cv_search(const nn::Dataset& data, const HyperRange& range,
                      const nn::Network& arch, Rng& rng, const CvSearchOptions& opts) {
  data.validate();
  if (data.size() < 5) throw std::invalid_argument("cv_search: need at least 5 samples");
  const std::vector<Fold> folds = kfolds(data, 5, rng);
  const std::uint64_t fold_seed = rng();
  std::vector<Vec> fold_log;  // per-fold accuracies, one row per evaluation
  auto evaluate = [&](const nn::TrainingConfig& H) {
    Vec accs;
    for (const Fold& fold : folds)
      accs.push_back(cv_accuracy(H, {fold}, arch, fold_seed));
    fold_log.push_back(accs);
    return mean(accs);
  };
  SearchTrace trace = run_search(evaluate, range, rng, opts);
  std::size_t next = 0;
  for (SearchPoint& sp : trace.evaluations) {
    if (sp.failed) continue;
    sp.fold_accuracies = fold_log.at(next++);
  }
  return trace;
}

SearchTrace cv_search_with(const std::function<double(const nn::TrainingConfig&)>& evaluate,
                           const HyperRange& range, Rng& rng, const CvSearchOptions& opts) {
  return run_search(evaluate, range, rng, opts);
}

nn::TrainingConfig best_config(const SearchTrace& trace) {
  return trace.evaluations.at(trace.best_index).config;
}

}  // namespace exlab::hyperopt
