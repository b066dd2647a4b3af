#pragma once

#include <functional>

#include "exlab/common.hpp"
#include "exlab/neuralnet.hpp"

namespace exlab::harness {

enum class StreamMode { iid_natural, random_uniform, sequences };

/// Draws one fresh natural sample.
using SampleGenerator = std::function<Vec(Rng&)>;

struct BenignStreamSpec {
  StreamMode mode = StreamMode::iid_natural;
  int length = 6000;
  int sequence_length = 30;
  int dim = 0;  // random_uniform only; other modes take it from the source
  /// Additive noise for sequence runs decays linearly from hi to lo,
  /// emulating views of one object from a decreasing distance.
  double sequence_noise_hi = 0.22;
  double sequence_noise_lo = 0.10;
  std::uint64_t seed = 0;
};

/// Ordered query stream for one simulated benign client. iid_natural draws
/// with replacement from the source dataset; sequences emits consecutive
/// runs of noisy variants of one base sample.
std::vector<Vec> benign_stream(const BenignStreamSpec& spec, const nn::Dataset* source);

/// Generator-backed variant: every natural sample (and sequence base) is a
/// fresh draw, for sources large enough that benign clients never repeat a
/// query exactly.
std::vector<Vec> benign_stream(const BenignStreamSpec& spec, const SampleGenerator& fresh);

}  // namespace exlab::harness
