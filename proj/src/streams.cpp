#include "exlab/streams.hpp"

namespace exlab::harness {

namespace {

std::vector<Vec> build_stream(const BenignStreamSpec& spec, const SampleGenerator& natural) {
  if (spec.length < 1) throw std::invalid_argument("stream length must be >= 1");
  Rng rng(spec.seed);
  std::vector<Vec> out;
  out.reserve(spec.length);

  switch (spec.mode) {
    case StreamMode::random_uniform: {
      if (spec.dim < 1) throw std::invalid_argument("random_uniform needs a dimension");
      std::uniform_real_distribution<double> feature(-1.0, 1.0);
      for (int i = 0; i < spec.length; ++i) {
        Vec x(spec.dim);
        for (double& v : x) v = feature(rng);
        out.push_back(std::move(x));
      }
      return out;
    }
    case StreamMode::iid_natural: {
      for (int i = 0; i < spec.length; ++i) out.push_back(natural(rng));
      return out;
    }
    case StreamMode::sequences: {
      if (spec.sequence_length < 1)
        throw std::invalid_argument("sequence_length must be >= 1");
      std::normal_distribution<double> noise(0.0, 1.0);
      const int runs = (spec.length + spec.sequence_length - 1) / spec.sequence_length;
      for (int run = 0; run < runs && static_cast<int>(out.size()) < spec.length; ++run) {
        const Vec base = natural(rng);
        for (int j = 0; j < spec.sequence_length && static_cast<int>(out.size()) < spec.length;
             ++j) {
          const double frac =
              spec.sequence_length > 1
                  ? static_cast<double>(j) / static_cast<double>(spec.sequence_length - 1)
                  : 0.0;
          const double sigma =
              spec.sequence_noise_hi + frac * (spec.sequence_noise_lo - spec.sequence_noise_hi);
          Vec x(base.size());
          for (std::size_t k = 0; k < base.size(); ++k)
            x[k] = clamp(base[k] + sigma * noise(rng), -1.0, 1.0);
          out.push_back(std::move(x));
        }
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown stream mode");
}

}  // namespace

std::vector<Vec> benign_stream(const BenignStreamSpec& spec, const nn::Dataset* source) {
  SampleGenerator from_dataset;
  if (spec.mode != StreamMode::random_uniform) {
    if (!source || source->samples.empty())
      throw std::invalid_argument("this stream mode needs a source dataset");
    from_dataset = [source](Rng& rng) {
      std::uniform_int_distribution<std::size_t> pick(0, source->samples.size() - 1);
      return source->samples[pick(rng)];
    };
  }
  return build_stream(spec, from_dataset);
}

std::vector<Vec> benign_stream(const BenignStreamSpec& spec, const SampleGenerator& fresh) {
  if (spec.mode != StreamMode::random_uniform && !fresh)
    throw std::invalid_argument("this stream mode needs a sample generator");
  return build_stream(spec, fresh);
}

}  // namespace exlab::harness
