#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "exlab/common.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::craft {

enum class Method { fgsm, ifgsm, mifgsm };
enum class Mode { targeted, non_targeted };

struct CraftSpec {
  Method method = Method::fgsm;
  Mode mode = Mode::non_targeted;
  double epsilon = 64.0 / 255.0;  // total L-inf budget in feature units
  int steps = 1;                  // 1 for fgsm, 11 by default for iterative
  double momentum_decay = 1.0;    // mifgsm only
  double clip_lo = -1.0;
  double clip_hi = 1.0;

  void validate() const;
};

/// Iterative methods run `steps` rounds of the default 11.
inline constexpr int kDefaultIterativeSteps = 11;

inline CraftSpec make_spec(Method m, Mode mode, double epsilon) {
  CraftSpec s;
  s.method = m;
  s.mode = mode;
  s.epsilon = epsilon;
  s.steps = (m == Method::fgsm) ? 1 : kDefaultIterativeSteps;
  return s;
}

/// Crafts an adversarial variant of x under the spec's L-inf budget.
/// Non-targeted ascends the loss of the current predicted class; targeted
/// descends the loss of `target` (required, and must differ from the current
/// prediction). Each iterate is clipped to the epsilon ball around x first,
/// then to the feature range. A zero-gradient step leaves x unchanged.
Vec craft(const nn::Network& net, const Vec& x, const CraftSpec& spec,
          std::optional<int> target = std::nullopt);

/// One targeted variant per class other than the current prediction.
std::vector<std::pair<int, Vec>> craft_targeted_suite(const nn::Network& net,
                                                      const Vec& x,
                                                      const CraftSpec& spec);

}  // namespace exlab::craft
