#pragma once

#include <array>
#include <functional>
#include <utility>
#include <vector>

#include "exlab/common.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::hyperopt {

/// Search box for (learning rate, train epochs); both axes are log-scale.
struct HyperRange {
  double lr_lo = 1e-4;
  double lr_hi = 1e-2;
  double epochs_lo = 10.0;
  double epochs_hi = 320.0;

  void validate() const;
};

struct Fold {
  nn::Dataset train;
  nn::Dataset validation;
};

/// k disjoint validation folds covering the data, sizes within 1 of each
/// other; stratified by class when every class has at least k members.
std::vector<Fold> kfolds(const nn::Dataset& data, int k, Rng& rng);

/// Exact GP regression with an RBF kernel in normalized log-coordinates.
struct GpModel {
  std::vector<std::array<double, 2>> points;  // inputs in [0,1]^2
  Vec values;
  double length_scale = 0.5;
  double signal_var = 1.0;
  double noise_var = 1e-4;
  double prior_mean = 0.0;
  nn::Matrix chol;  // cached lower Cholesky factor of K + noise I
  Vec alpha;        // (K + noise I)^-1 (y - prior_mean)
};

GpModel gp_fit(const std::vector<std::array<double, 2>>& points, const Vec& values,
               double length_scale = 0.5, double noise_var = 1e-4);

/// Posterior (mean, std) of the latent function at a point.
std::pair<double, double> gp_predict(const GpModel& model, const std::array<double, 2>& p);

/// One evaluated hyperparameter combination.
struct SearchPoint {
  nn::TrainingConfig config;
  Vec fold_accuracies;
  double mean_accuracy = 0.0;
  bool failed = false;
  std::string phase;  // "corner", "random", "gp"
};

struct SearchTrace {
  std::vector<SearchPoint> evaluations;
  std::size_t best_index = 0;
};

/// Knobs that are not searched. Dropout stays on while training fold models.
struct CvSearchOptions {
  nn::Optimizer optimizer = nn::Optimizer::sgd_momentum;
  double momentum = 0.9;
  int batch_size = 32;
  double dropout_rate = 0.2;
  int candidate_grid_side = 32;  // acquisition grid: side^2 points
};

/// Mean validation accuracy of config `H` over the folds, with fresh weights
/// per fold. The same init/shuffle seed is used for every fold so the result
/// does not depend on fold order.
double cv_accuracy(const nn::TrainingConfig& H, const std::vector<Fold>& folds,
                   const nn::Network& arch, std::uint64_t seed);

/// Next point to evaluate: argmax of (posterior mean + posterior std) over a
/// seeded stratified candidate grid inside the range, in log-space.
std::array<double, 2> acquire_next(const GpModel& model, const HyperRange& range,
                                   int grid_side, Rng& rng);

/// Full search: 4 corners, 11 uniform-random points, 15 GP-acquired points;
/// returns the evaluation with the best mean CV accuracy.
SearchTrace cv_search(const nn::Dataset& data, const HyperRange& range,
                      const nn::Network& arch, Rng& rng,
                      const CvSearchOptions& opts = {});

/// Same search loop against an arbitrary scoring function (used to validate
/// the optimizer against planted surfaces).
SearchTrace cv_search_with(const std::function<double(const nn::TrainingConfig&)>& evaluate,
                           const HyperRange& range, Rng& rng,
                           const CvSearchOptions& opts = {});

nn::TrainingConfig best_config(const SearchTrace& trace);

}  // namespace exlab::hyperopt
