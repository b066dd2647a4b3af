#include "exlab/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace exlab::nn {

namespace {

const char* activation_tag(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
  }
  return "?";
}

Activation activation_from_tag(const std::string& tag) {
  if (tag == "relu") return Activation::relu;
  if (tag == "softmax") return Activation::softmax;
  if (tag == "identity") return Activation::identity;
  throw NumericError("unknown activation tag: " + tag);
}

void apply_activation(Activation act, Vec& z) {
  switch (act) {
    case Activation::identity:
      return;
    case Activation::relu:
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::softmax: {
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
      }
      for (double& v : z) v /= sum;
      return;
    }
  }
}

Vec affine(const DenseLayer& layer, const Vec& x) {
  Vec z(layer.out_dim());
  for (int r = 0; r < layer.out_dim(); ++r) {
    double acc = layer.bias[r];
    const double* wrow = &layer.weight.data[static_cast<std::size_t>(r) * layer.in_dim()];
    for (int c = 0; c < layer.in_dim(); ++c) acc += wrow[c] * x[c];
    z[r] = acc;
  }
  return z;
}

void check_input(const Network& net, const Vec& x) {
  if (static_cast<int>(x.size()) != net.input_dim)
    throw ShapeError("input has dim " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(net.input_dim));
}

struct ForwardTrace {
  std::vector<Vec> activations;  // activations[0] = input, .back() = output probs
  std::vector<Vec> preacts;      // pre-activation per layer
};

// Forward pass keeping intermediates. Optional dropout masks (one per hidden
// layer, entries 0 or 1/(1-rate)) scale the hidden activations.
ForwardTrace forward_trace(const Network& net, const Vec& x,
                           const std::vector<Vec>* dropout_masks = nullptr) {
  ForwardTrace t;
  t.activations.reserve(net.layers.size() + 1);
  t.preacts.reserve(net.layers.size());
  t.activations.push_back(x);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    Vec z = affine(net.layers[li], t.activations.back());
    t.preacts.push_back(z);
    apply_activation(net.layers[li].activation, z);
    if (dropout_masks && li + 1 < net.layers.size()) {
      const Vec& mask = (*dropout_masks)[li];
      for (std::size_t i = 0; i < z.size(); ++i) z[i] *= mask[i];
    }
    t.activations.push_back(std::move(z));
  }
  return t;
}

// Backward pass from the softmax cross-entropy delta (probs - target).
// Accumulates parameter gradients; optionally reports the input gradient.
void backward(const Network& net, const ForwardTrace& t, Vec delta,
              std::vector<LayerGradient>* grads, Vec* input_grad,
              const std::vector<Vec>* dropout_masks = nullptr) {
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const DenseLayer& layer = net.layers[li];
    const Vec& below = t.activations[li];
    if (grads) {
      LayerGradient& g = (*grads)[li];
      for (int r = 0; r < layer.out_dim(); ++r) {
        g.bias[r] += delta[r];
        double* grow = &g.weight.data[static_cast<std::size_t>(r) * layer.in_dim()];
        for (int c = 0; c < layer.in_dim(); ++c) grow[c] += delta[r] * below[c];
      }
    }
    const bool need_below_delta = li > 0 || input_grad != nullptr;
    if (!need_below_delta) break;
    Vec below_delta(layer.in_dim(), 0.0);
    for (int r = 0; r < layer.out_dim(); ++r) {
      const double* wrow = &layer.weight.data[static_cast<std::size_t>(r) * layer.in_dim()];
      for (int c = 0; c < layer.in_dim(); ++c) below_delta[c] += wrow[c] * delta[r];
    }
    if (li > 0) {
      if (dropout_masks) {
        const Vec& mask = (*dropout_masks)[li - 1];
        for (std::size_t i = 0; i < below_delta.size(); ++i) below_delta[i] *= mask[i];
      }
      const Vec& z = t.preacts[li - 1];
      if (net.layers[li - 1].activation == Activation::relu) {
        for (std::size_t i = 0; i < below_delta.size(); ++i)
          if (z[i] <= 0.0) below_delta[i] = 0.0;
      }
    }
    delta = std::move(below_delta);
    if (li == 0 && input_grad) *input_grad = delta;
  }
}

Vec target_vector(const Dataset& data, std::size_t i, int classes) {
  Vec y(classes, 0.0);
  if (data.has_soft_targets()) {
    const Vec& t = data.soft_targets[i];
    if (static_cast<int>(t.size()) != classes)
      throw ShapeError("soft target size does not match class count");
    return t;
  }
  const int label = data.labels[i];
  if (label < 0 || label >= classes) throw ShapeError("label out of range");
  y[label] = 1.0;
  return y;
}

double sample_loss(const Vec& probs, const Vec& target) {
  double loss = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (target[j] > 0.0) loss -= target[j] * std::log(probs[j]);
  }
  return loss;
}

std::vector<LayerGradient> zero_gradients(const Network& net) {
  std::vector<LayerGradient> g;
  g.reserve(net.layers.size());
  for (const DenseLayer& l : net.layers)
    g.push_back({Matrix(l.out_dim(), l.in_dim()), Vec(l.out_dim(), 0.0)});
  return g;
}

}  // namespace

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += l.weight.data.size() + l.bias.size();
  return n;
}

void Network::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  int in = input_dim;
  for (const DenseLayer& l : layers) {
    if (l.in_dim() != in) throw ShapeError("layer dimensions do not chain");
    if (static_cast<int>(l.bias.size()) != l.out_dim())
      throw ShapeError("bias size does not match layer output");
    in = l.out_dim();
    for (double w : l.weight.data)
      if (!std::isfinite(w)) throw NumericError("non-finite weight");
    for (double b : l.bias)
      if (!std::isfinite(b)) throw NumericError("non-finite bias");
  }
  if (in != class_count) throw ShapeError("final layer does not match class count");
  if (layers.back().activation != Activation::softmax)
    throw ShapeError("final activation must be softmax");
}

Network make_network(int input_dim, const std::vector<int>& hidden_widths,
                     int class_count, Rng& rng) {
  if (input_dim < 1 || class_count < 2)
    throw ShapeError("make_network: need input_dim >= 1 and class_count >= 2");
  Network net;
  net.input_dim = input_dim;
  net.class_count = class_count;
  int in = input_dim;
  std::vector<int> outs = hidden_widths;
  outs.push_back(class_count);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const int out = outs[i];
    if (out < 1) throw ShapeError("make_network: layer width must be positive");
    DenseLayer layer;
    layer.weight = Matrix(out, in);
    layer.bias = Vec(out, 0.0);
    layer.activation = (i + 1 == outs.size()) ? Activation::softmax : Activation::relu;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weight.data) w = dist(rng);
    net.layers.push_back(std::move(layer));
    in = out;
  }
  return net;
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("dropout_rate must be in [0,1)");
}

void Dataset::validate() const {
  if (samples.empty()) throw std::invalid_argument("dataset is empty");
  const std::size_t n = samples[0].size();
  for (const Vec& s : samples)
    if (s.size() != n) throw ShapeError("dataset samples have mixed dimensions");
  const bool hard = !labels.empty();
  const bool soft = !soft_targets.empty();
  if (hard == soft) throw std::invalid_argument("dataset needs labels xor soft targets");
  if (hard && labels.size() != samples.size())
    throw ShapeError("label count does not match sample count");
  if (soft) {
    if (soft_targets.size() != samples.size())
      throw ShapeError("target count does not match sample count");
    for (const Vec& t : soft_targets) {
      double sum = 0.0;
      for (double p : t) sum += p;
      if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("soft target does not sum to 1");
    }
  }
}

Vec forward(const Network& net, const Vec& x) {
  check_input(net, x);
  Vec a = x;
  for (const DenseLayer& layer : net.layers) {
    a = affine(layer, a);
    apply_activation(layer.activation, a);
  }
  for (double v : a)
    if (!std::isfinite(v)) throw NumericError("forward produced non-finite output");
  return a;
}

int predict_label(const Network& net, const Vec& x) {
  const Vec p = forward(net, x);
  int best = 0;
  for (int i = 1; i < static_cast<int>(p.size()); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

double dataset_loss(const Network& net, const Dataset& data) {
  data.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec probs = forward(net, data.samples[i]);
    total += sample_loss(probs, target_vector(data, i, net.class_count));
  }
  return total / static_cast<double>(data.size());
}

double dataset_accuracy(const Network& net, const Dataset& data) {
  data.validate();
  if (data.has_soft_targets())
    throw std::invalid_argument("accuracy needs hard labels");
  int hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict_label(net, data.samples[i]) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<LayerGradient> param_gradients(const Network& net, const Dataset& batch) {
  batch.validate();
  if (batch.dim() != net.input_dim) throw ShapeError("batch dimension mismatch");
  std::vector<LayerGradient> grads = zero_gradients(net);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardTrace t = forward_trace(net, batch.samples[i]);
    const Vec target = target_vector(batch, i, net.class_count);
    Vec delta = t.activations.back();
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] -= target[j];
    backward(net, t, std::move(delta), &grads, nullptr);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (LayerGradient& g : grads) {
    for (double& v : g.weight.data) v *= inv;
    for (double& v : g.bias) v *= inv;
  }
  return grads;
}

Vec input_gradient(const Network& net, const Vec& x, int class_index) {
  check_input(net, x);
  if (class_index < 0 || class_index >= net.class_count)
    throw ShapeError("class index out of range");
  const ForwardTrace t = forward_trace(net, x);
  Vec delta = t.activations.back();
  delta[class_index] -= 1.0;
  Vec grad;
  backward(net, t, std::move(delta), nullptr, &grad);
  return grad;
}

Network train(const Network& net, const Dataset& data, const TrainingConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.dim() != net.input_dim) throw ShapeError("training data dimension mismatch");
  if (!data.has_soft_targets()) {
    for (int label : data.labels)
      if (label < 0 || label >= net.class_count) throw ShapeError("label out of range");
  }

  Network out = net;
  if (cfg.epochs == 0) return out;

  Rng rng(cfg.seed);
  std::vector<LayerGradient> velocity = zero_gradients(out);   // sgd_momentum
  std::vector<LayerGradient> adam_m = zero_gradients(out);     // adam first moment
  std::vector<LayerGradient> adam_v = zero_gradients(out);     // adam second moment
  std::uint64_t adam_t = 0;

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const bool use_dropout = cfg.dropout_rate > 0.0 && out.layers.size() > 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 - cfg.dropout_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<LayerGradient> grads = zero_gradients(out);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const std::size_t i = order[bi];
        std::vector<Vec> masks;
        if (use_dropout) {
          masks.reserve(out.layers.size() - 1);
          for (std::size_t li = 0; li + 1 < out.layers.size(); ++li) {
            Vec mask(out.layers[li].out_dim());
            for (double& m : mask) m = unit(rng) < keep ? 1.0 / keep : 0.0;
            masks.push_back(std::move(mask));
          }
        }
        const ForwardTrace t =
            forward_trace(out, data.samples[i], use_dropout ? &masks : nullptr);
        const Vec target = target_vector(data, i, out.class_count);
        batch_loss += sample_loss(t.activations.back(), target);
        Vec delta = t.activations.back();
        for (std::size_t j = 0; j < delta.size(); ++j) delta[j] -= target[j];
        backward(out, t, std::move(delta), &grads, nullptr, use_dropout ? &masks : nullptr);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      if (cfg.optimizer == Optimizer::sgd_momentum) {
        for (std::size_t li = 0; li < out.layers.size(); ++li) {
          auto step = [&](Vec& w, Vec& vel, const Vec& g) {
            for (std::size_t k = 0; k < w.size(); ++k) {
              vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * g[k] * inv;
              w[k] += vel[k];
            }
          };
          step(out.layers[li].weight.data, velocity[li].weight.data, grads[li].weight.data);
          step(out.layers[li].bias, velocity[li].bias, grads[li].bias);
        }
      } else {
        ++adam_t;
        const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_t));
        for (std::size_t li = 0; li < out.layers.size(); ++li) {
          auto step = [&](Vec& w, Vec& m, Vec& v, const Vec& g) {
            for (std::size_t k = 0; k < w.size(); ++k) {
              const double gk = g[k] * inv;
              m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * gk;
              v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * gk * gk;
              w[k] -= cfg.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kAdamEps);
            }
          };
          step(out.layers[li].weight.data, adam_m[li].weight.data, adam_v[li].weight.data,
               grads[li].weight.data);
          step(out.layers[li].bias, adam_m[li].bias, adam_v[li].bias, grads[li].bias);
        }
      }
    }
  }
  return out;
}

namespace {

std::string hex_double(double v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double double_from_hex(const std::string& s) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(s, nullptr, 16)));
}

}  // namespace

void save_network(const Network& net, std::ostream& out) {
  out << "exlab-model 1\n";
  out << "input_dim " << net.input_dim << "\n";
  out << "class_count " << net.class_count << "\n";
  out << "layers " << net.layers.size() << "\n";
  for (const DenseLayer& l : net.layers) {
    out << "layer " << l.out_dim() << " " << l.in_dim() << " "
        << activation_tag(l.activation) << "\n";
    out << "w";
    for (double v : l.weight.data) out << " " << hex_double(v);
    out << "\nb";
    for (double v : l.bias) out << " " << hex_double(v);
    out << "\n";
  }
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  save_network(net, f);
}

Network load_network(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "exlab-model" || version != 1)
    throw std::runtime_error("unrecognized model header");
  Network net;
  std::string key;
  std::size_t layer_count = 0;
  in >> key >> net.input_dim;
  if (key != "input_dim") throw std::runtime_error("bad model file: " + key);
  in >> key >> net.class_count;
  if (key != "class_count") throw std::runtime_error("bad model file: " + key);
  in >> key >> layer_count;
  if (key != "layers") throw std::runtime_error("bad model file: " + key);
  for (std::size_t li = 0; li < layer_count; ++li) {
    int out_dim = 0, in_dim = 0;
    std::string tag;
    in >> key >> out_dim >> in_dim >> tag;
    if (key != "layer" || !in) throw std::runtime_error("bad layer header");
    DenseLayer layer;
    layer.weight = Matrix(out_dim, in_dim);
    layer.bias = Vec(out_dim, 0.0);
    layer.activation = activation_from_tag(tag);
    in >> key;
    if (key != "w") throw std::runtime_error("expected weight row");
    std::string hex;
    for (double& v : layer.weight.data) {
      in >> hex;
      v = double_from_hex(hex);
    }
    in >> key;
    if (key != "b") throw std::runtime_error("expected bias row");
    for (double& v : layer.bias) {
      in >> hex;
      v = double_from_hex(hex);
    }
    net.layers.push_back(std::move(layer));
  }
  if (!in) throw std::runtime_error("truncated model file");
  net.validate();
  return net;
}

Network load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open model file: " + path);
  return load_network(f);
}

}  // namespace exlab::nn
