#include "exlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace exlab::harness {

BlobDistribution make_blob_distribution(int classes, int dim, double margin) {
  if (classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (dim < 2) throw std::invalid_argument("need at least 2 dimensions");
  if (margin <= 2.0 * kBlobNoiseClamp)
    throw std::invalid_argument("margin infeasible: clouds of clamped unit noise may touch");
  BlobDistribution d;
  d.classes = classes;
  d.dim = dim;
  d.margin = margin;
  // Chord length between neighboring centroids equals margin.
  d.radius = margin / (2.0 * std::sin(M_PI / classes));
  // Raw support is within [-(radius + clamp), radius + clamp] on every axis;
  // a single isotropic scale maps it into [-1,1].
  d.scale = 1.0 / (d.radius + kBlobNoiseClamp);
  return d;
}

Vec BlobDistribution::centroid(int cls) const {
  Vec center(dim, 0.0);
  const double angle = 2.0 * M_PI * cls / classes;
  center[0] = radius * std::cos(angle);
  center[1] = radius * std::sin(angle);
  return center;
}

Vec BlobDistribution::sample(int cls, Rng& rng) const {
  std::normal_distribution<double> noise(0.0, 1.0);
  Vec z(dim);
  double norm2 = 0.0;
  for (double& v : z) {
    v = noise(rng);
    norm2 += v * v;
  }
  const double norm = std::sqrt(norm2);
  if (norm > kBlobNoiseClamp)
    for (double& v : z) v *= kBlobNoiseClamp / norm;
  const Vec center = centroid(cls);
  Vec x(dim);
  for (int k = 0; k < dim; ++k) x[k] = (center[k] + z[k]) * scale;
  return x;
}

Vec BlobDistribution::sample_any(Rng& rng) const {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  return sample(pick(rng), rng);
}

nn::Dataset gen_blobs_dataset(int classes, int dim, int per_class, double margin, Rng& rng) {
  if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  const BlobDistribution dist = make_blob_distribution(classes, dim, margin);
  nn::Dataset data;
  for (int c = 0; c < classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      data.samples.push_back(dist.sample(c, rng));
      data.labels.push_back(c);
    }
  }
  return data;
}

nn::Dataset load_csv_dataset(const std::string& path, bool rescale) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset: " + path);
  nn::Dataset data;
  std::vector<double> raw_labels;
  std::string line;
  std::size_t expected_fields = 0;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used])))
          ++used;
        if (used != field.size()) throw std::invalid_argument(field);
        values.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("non-numeric cell at line " + std::to_string(line_no) + ": '" +
                                 field + "'");
      }
    }
    if (values.size() < 2)
      throw std::runtime_error("line " + std::to_string(line_no) + " has no features");
    if (expected_fields == 0) expected_fields = values.size();
    if (values.size() != expected_fields)
      throw std::runtime_error("ragged row at line " + std::to_string(line_no));
    raw_labels.push_back(values[0]);
    data.samples.emplace_back(values.begin() + 1, values.end());
  }
  if (data.samples.empty()) throw std::runtime_error("empty dataset: " + path);

  // Dense label re-indexing in sorted order of the raw values.
  std::map<double, int> label_map;
  for (double rl : raw_labels) label_map.emplace(rl, 0);
  int next = 0;
  for (auto& [raw, idx] : label_map) idx = next++;
  for (double rl : raw_labels) data.labels.push_back(label_map[rl]);

  if (rescale) {
    double lo = data.samples[0][0], hi = lo;
    for (const Vec& s : data.samples)
      for (double v : s) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const double scale = hi > lo ? 2.0 / (hi - lo) : 0.0;
    for (Vec& s : data.samples)
      for (double& v : s) v = hi > lo ? (v - lo) * scale - 1.0 : 0.0;
  }
  return data;
}

void save_csv_dataset(const nn::Dataset& data, const std::string& path) {
  data.validate();
  if (data.has_soft_targets())
    throw std::invalid_argument("CSV datasets carry hard labels");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    f << data.labels[i];
    for (double v : data.samples[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      f << "," << buf;
    }
    f << "\n";
  }
}

std::pair<nn::Dataset, nn::Dataset> split_dataset(const nn::Dataset& data,
                                                  double holdout_fraction) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw std::invalid_argument("holdout_fraction must be in (0,1)");
  const std::size_t stride = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(1.0 / holdout_fraction)));
  nn::Dataset keep, holdout;
  for (std::size_t i = 0; i < data.size(); ++i) {
    nn::Dataset& dst = (i % stride == stride - 1) ? holdout : keep;
    dst.samples.push_back(data.samples[i]);
    dst.labels.push_back(data.labels[i]);
  }
  return {keep, holdout};
}

}  // namespace exlab::harness
