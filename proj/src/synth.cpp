#include <cmath>
#include <numbers>
#include <random>

#include "seqcluster/datasets.hpp"
#include "seqcluster/error.hpp"

namespace seqcluster::data {

SynthSpec SynthSpec::standard(std::size_t k, std::size_t d, std::size_t window_length,
                              std::size_t per_regime, double sigma) {
  SynthSpec spec;
  spec.num_channels = d;
  spec.window_length = window_length;
  spec.segments_per_regime = per_regime;
  spec.noise_sigma = sigma;
  spec.max_offset = static_cast<double>(window_length) / 8.0;
  for (std::size_t j = 0; j < k; ++j) {
    SynthRegime r;
    for (std::size_t c = 0; c < d; ++c) {
      r.frequency.push_back(1.0 + static_cast<double>(j) + 0.25 * static_cast<double>(c));
      r.amplitude.push_back(1.0 + 0.5 * static_cast<double>((j + c) % 2));
      r.phase.push_back(0.5 * static_cast<double>(j) + 0.8 * static_cast<double>(c));
    }
    spec.regimes.push_back(std::move(r));
  }
  return spec;
}

void SynthSpec::validate() const {
  if (regimes.size() < 2) throw ConfigError("synth: need at least 2 regimes, got " + std::to_string(regimes.size()));
  if (num_channels == 0) throw ConfigError("synth: num_channels must be positive");
  if (window_length < 2 || window_length % 2 != 0) throw ConfigError("synth: window_length must be even and >= 2");
  if (segments_per_regime == 0) throw ConfigError("synth: segments_per_regime must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be non-negative");
  if (!(max_offset >= 0.0)) throw ConfigError("synth: max_offset must be non-negative");
  if (!(sampling_rate > 0.0)) throw ConfigError("synth: sampling_rate must be positive");
  for (const SynthRegime& r : regimes) {
    if (r.frequency.size() != num_channels || r.amplitude.size() != num_channels ||
        r.phase.size() != num_channels) {
      throw ConfigError("synth: every regime needs one frequency/amplitude/phase per channel");
    }
  }
}

SegmentSet synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t k = spec.regimes.size();
  const std::size_t d = spec.num_channels;
  const std::size_t t_len = spec.window_length;

  SegmentSet set;
  set.config.name = "synthetic";
  set.config.sampling_rate = spec.sampling_rate;
  set.config.window_duration = static_cast<double>(t_len) / spec.sampling_rate;
  set.config.window_step = set.config.window_duration / 2.0;
  set.config.num_channels = d;
  set.config.num_clusters = k;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset_dist(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  const std::size_t n = k * spec.segments_per_regime;
  set.segments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t regime = i % k;
    const SynthRegime& r = spec.regimes[regime];
    const double offset = spec.max_offset * offset_dist(rng);
    Segment s;
    s.label = static_cast<int>(regime);
    s.values = Tensor({t_len, d});
    for (std::size_t t = 0; t < t_len; ++t) {
      const double pos = (static_cast<double>(t) + offset) / static_cast<double>(t_len);
      for (std::size_t c = 0; c < d; ++c) {
        double v = r.amplitude[c] * std::sin(two_pi * r.frequency[c] * pos + r.phase[c]);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
        s.values(t, c) = quantize_canonical(v);
      }
    }
    set.segments.push_back(std::move(s));
  }
  return set;
}

}  // namespace seqcluster::data
