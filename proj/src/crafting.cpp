#include "exlab/crafting.hpp"

#include <cmath>

namespace exlab::craft {

void CraftSpec::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (method == Method::fgsm && steps != 1)
    throw std::invalid_argument("fgsm is single-step");
  if (momentum_decay < 0.0) throw std::invalid_argument("momentum_decay must be >= 0");
  if (!(clip_lo < clip_hi)) throw std::invalid_argument("bad clip range");
  if (epsilon > clip_hi - clip_lo)
    throw std::invalid_argument("epsilon exceeds the feature range");
}

Vec craft(const nn::Network& net, const Vec& x, const CraftSpec& spec,
          std::optional<int> target) {
  spec.validate();
  const int current = nn::predict_label(net, x);
  int loss_class;
  double direction;
  if (spec.mode == Mode::targeted) {
    if (!target) throw std::invalid_argument("targeted crafting requires a target class");
    if (*target == current)
      throw std::invalid_argument("target class equals the current prediction");
    if (*target < 0 || *target >= net.class_count)
      throw ShapeError("target class out of range");
    loss_class = *target;
    direction = -1.0;  // descend the target-class loss
  } else {
    loss_class = current;
    direction = 1.0;  // ascend the current-class loss
  }

  const double step = spec.epsilon / spec.steps;
  Vec out = x;
  Vec momentum(x.size(), 0.0);
  for (int s = 0; s < spec.steps; ++s) {
    Vec grad = nn::input_gradient(net, out, loss_class);
    const Vec* use = &grad;
    if (spec.method == Method::mifgsm) {
      double l1 = 0.0;
      for (double g : grad) l1 += std::abs(g);
      if (l1 > 0.0)
        for (double& g : grad) g /= l1;
      for (std::size_t i = 0; i < grad.size(); ++i)
        momentum[i] = spec.momentum_decay * momentum[i] + grad[i];
      use = &momentum;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      double v = out[i] + direction * step * sgn((*use)[i]);
      v = clamp(v, x[i] - spec.epsilon, x[i] + spec.epsilon);
      out[i] = clamp(v, spec.clip_lo, spec.clip_hi);
    }
  }
  return out;
}

std::vector<std::pair<int, Vec>> craft_targeted_suite(const nn::Network& net,
                                                      const Vec& x,
                                                      const CraftSpec& spec) {
  if (spec.mode != Mode::targeted)
    throw std::invalid_argument("suite requires a targeted spec");
  if (net.class_count < 2) throw std::invalid_argument("need at least 2 classes");
  const int current = nn::predict_label(net, x);
  std::vector<std::pair<int, Vec>> out;
  out.reserve(net.class_count - 1);
  for (int c = 0; c < net.class_count; ++c) {
    if (c == current) continue;
    out.emplace_back(c, craft(net, x, spec, c));
  }
  return out;
}

}  // namespace exlab::craft
