#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "exlab/common.hpp"

namespace exlab::nn {

enum class Activation { relu, softmax, identity };

/// Dense row-major matrix, sized once at construction.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct DenseLayer {
  Matrix weight;  // [out x in]
  Vec bias;       // [out]
  Activation activation = Activation::identity;

  int in_dim() const { return weight.cols; }
  int out_dim() const { return weight.rows; }
};

/// Feed-forward classifier. Immutable by convention after construction:
/// training returns a new network, so one instance may be evaluated from many
/// threads concurrently.
struct Network {
  std::vector<DenseLayer> layers;
  int input_dim = 0;
  int class_count = 0;

  std::size_t parameter_count() const;
  void validate() const;  // dimension chaining, final softmax, finite weights
};

/// Hidden layers get ReLU, the output layer softmax. Weights are initialized
/// uniform in +-sqrt(6/(in+out)); biases start at zero.
Network make_network(int input_dim, const std::vector<int>& hidden_widths,
                     int class_count, Rng& rng);

enum class Optimizer { sgd_momentum, adam };

struct TrainingConfig {
  Optimizer optimizer = Optimizer::sgd_momentum;
  double learning_rate = 0.01;
  double momentum = 0.9;  // sgd_momentum only
  int epochs = 10;
  int batch_size = 32;
  double dropout_rate = 0.0;  // hidden activations, training passes only
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adam moment defaults.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Samples plus either hard labels or soft probability targets (exactly one
/// of the two is populated).
struct Dataset {
  std::vector<Vec> samples;
  std::vector<int> labels;
  std::vector<Vec> soft_targets;

  bool has_soft_targets() const { return !soft_targets.empty(); }
  std::size_t size() const { return samples.size(); }
  int dim() const { return samples.empty() ? 0 : static_cast<int>(samples[0].size()); }
  void validate() const;
};

/// Probability vector over classes; entries sum to 1 within 1e-9.
Vec forward(const Network& net, const Vec& x);

/// Index of the maximal probability. Ties break to the lowest index so that
/// agreement metrics are deterministic.
int predict_label(const Network& net, const Vec& x);

/// Mean cross-entropy loss over a dataset (no dropout).
double dataset_loss(const Network& net, const Dataset& data);

/// Fraction of samples whose predicted label matches the hard label.
double dataset_accuracy(const Network& net, const Dataset& data);

/// Trains a copy of `net` and returns it. Cross-entropy against hard labels
/// or probability vectors. Deterministic: same seed and inputs give
/// bit-identical weights.
Network train(const Network& net, const Dataset& data, const TrainingConfig& cfg);

struct LayerGradient {
  Matrix weight;
  Vec bias;
};

/// Mean parameter gradient of the cross-entropy loss over a batch.
std::vector<LayerGradient> param_gradients(const Network& net, const Dataset& batch);

/// Gradient of the cross-entropy loss L(F(x), c) with respect to the input.
Vec input_gradient(const Network& net, const Vec& x, int class_index);

/// Versioned text persistence; doubles are stored as IEEE-754 bit patterns so
/// round-trips are bit-exact.
void save_network(const Network& net, std::ostream& out);
void save_network(const Network& net, const std::string& path);
Network load_network(std::istream& in);
Network load_network(const std::string& path);

}  // namespace exlab::nn
