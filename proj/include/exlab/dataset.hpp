#pragma once

#include <string>

#include "exlab/common.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::harness {

/// Noise clamp radius used by the blob generator.
inline constexpr double kBlobNoiseClamp = 2.9;

/// Gaussian blob mixture: centroids on a circle of radius
/// margin/(2 sin(pi/m)) in the first two dimensions, unit noise clamped to a
/// 2.9-sigma ball. The affine map into [-1,1] is fixed by the distribution's
/// deterministic support bound, so samples drawn one at a time land in the
/// same coordinates as whole datasets.
struct BlobDistribution {
  int classes = 3;
  int dim = 2;
  double margin = 8.0;
  double radius = 0.0;
  double scale = 1.0;  // x_scaled = x_raw * scale (support is symmetric)

  Vec centroid(int cls) const;
  Vec sample(int cls, Rng& rng) const;
  Vec sample_any(Rng& rng) const;  // uniform class choice, then sample
};

BlobDistribution make_blob_distribution(int classes, int dim, double margin);

/// per_class samples from each class of the blob mixture, in class order.
/// Centroid separation >= margin guarantees linear separability once margin
/// exceeds twice the noise clamp. Deterministic under the generator state.
nn::Dataset gen_blobs_dataset(int classes, int dim, int per_class, double margin, Rng& rng);

/// Rows are `label,f1,...,fn` with a constant feature count. Features are
/// linearly rescaled to [-1,1] using the file's min/max unless rescale is
/// false; labels are re-indexed densely from 0 in order of first appearance
/// of their sorted values.
nn::Dataset load_csv_dataset(const std::string& path, bool rescale = true);

void save_csv_dataset(const nn::Dataset& data, const std::string& path);

/// Evenly split off a held-out subset: every k-th sample (k = 1/fraction)
/// goes to the second dataset. Deterministic.
std::pair<nn::Dataset, nn::Dataset> split_dataset(const nn::Dataset& data, double holdout_fraction);

}  // namespace exlab::harness
