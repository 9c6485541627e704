#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "contrawr/epoch.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/rng.hpp"

namespace contrawr {

enum class AugmentKind { bandpass, noising, flipping, rotation };

inline const char* augment_name(AugmentKind k) {
  switch (k) {
    case AugmentKind::bandpass: return "bandpass";
    case AugmentKind::noising: return "noising";
    case AugmentKind::flipping: return "flipping";
    case AugmentKind::rotation: return "rotation";
  }
  return "?";
}

enum class NoiseMode { high, low, both };

struct AugmentPolicy {
  std::set<AugmentKind> enabled = {AugmentKind::bandpass, AugmentKind::noising,
                                   AugmentKind::flipping, AugmentKind::rotation};
  std::vector<std::pair<double, double>> bandpass_bands = {{0.5, 30.0}};
  double noise_degree = 0.05;
  std::vector<std::pair<std::size_t, std::size_t>> flip_pairs = {{0, 1}};
  float clip_bound = 50.0f;
};

inline void validate_policy(const AugmentPolicy& policy) {
  if (policy.enabled.empty()) throw parameter_error("augment policy: no augmentation enabled");
  if (policy.enabled.size() == 1 && policy.enabled.count(AugmentKind::flipping)) {
    throw parameter_error("augment policy: flipping cannot be the only enabled augmentation");
  }
  if (policy.enabled.count(AugmentKind::bandpass) && policy.bandpass_bands.empty()) {
    throw parameter_error("augment policy: bandpass enabled but no bands configured");
  }
  if (policy.enabled.count(AugmentKind::flipping) && policy.flip_pairs.empty()) {
    throw parameter_error("augment policy: flipping enabled but no channel pairs configured");
  }
  for (const auto& band : policy.bandpass_bands) {
    if (!(band.first >= 0.0 && band.first < band.second)) {
      throw parameter_error("augment policy: band must satisfy 0 <= low < high");
    }
  }
  if (policy.noise_degree < 0.0 || policy.noise_degree > 1.0) {
    throw parameter_error("augment policy: noise degree must lie in [0, 1]");
  }
  if (!(policy.clip_bound > 0.0f)) throw parameter_error("augment policy: clip_bound must be positive");
  std::set<std::size_t> seen;
  for (const auto& pair : policy.flip_pairs) {
    if (pair.first == pair.second || !seen.insert(pair.first).second ||
        !seen.insert(pair.second).second) {
      throw parameter_error("augment policy: flip pair indices must be distinct");
    }
  }
}

// Order-1 Butterworth bandpass: a bilinear-transform high-pass section at
// low_hz cascaded with a low-pass section at high_hz, run forward-only.
// A zero low edge degenerates to a pure low-pass.
inline Epoch bandpass(const Epoch& epoch, double low_hz, double high_hz) {
  const double nyquist = 0.5 * epoch.sample_rate_hz;
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz < nyquist)) {
    throw parameter_error("bandpass: need 0 <= low < high < fs/2, got (" +
                          std::to_string(low_hz) + ", " + std::to_string(high_hz) + ")");
  }

  // Prewarped first-order coefficients; K = tan(pi * fc / fs).
  const double k_hp = std::tan(3.141592653589793 * low_hz / epoch.sample_rate_hz);
  const double k_lp = std::tan(3.141592653589793 * high_hz / epoch.sample_rate_hz);
  const double hp_b0 = 1.0 / (1.0 + k_hp), hp_b1 = -hp_b0, hp_a1 = (k_hp - 1.0) / (k_hp + 1.0);
  const double lp_b0 = k_lp / (1.0 + k_lp), lp_b1 = lp_b0, lp_a1 = (k_lp - 1.0) / (k_lp + 1.0);

  Epoch out = epoch;
  for (std::size_t c = 0; c < epoch.n_channels; ++c) {
    const float* x = epoch.channel(c);
    float* y = out.channel(c);
    double hx1 = 0.0, hy1 = 0.0;  // high-pass state
    double lx1 = 0.0, ly1 = 0.0;  // low-pass state
    for (std::size_t t = 0; t < epoch.n_samples; ++t) {
      double v = x[t];
      if (low_hz > 0.0) {
        const double hy = hp_b0 * v + hp_b1 * hx1 - hp_a1 * hy1;
        hx1 = v;
        hy1 = hy;
        v = hy;
      }
      const double ly = lp_b0 * v + lp_b1 * lx1 - lp_a1 * ly1;
      lx1 = v;
      ly1 = ly;
      y[t] = static_cast<float>(ly);
    }
  }
  return out;
}

namespace detail {

// Per-channel amplitude range A = (max - min) / 2 of the input epoch.
inline double amplitude_range(const Epoch& epoch, std::size_t c) {
  const float* x = epoch.channel(c);
  float lo = x[0], hi = x[0];
  for (std::size_t t = 1; t < epoch.n_samples; ++t) {
    lo = std::min(lo, x[t]);
    hi = std::max(hi, x[t]);
  }
  return 0.5 * (static_cast<double>(hi) - static_cast<double>(lo));
}

inline void add_high_noise(Epoch& epoch, std::size_t c, double scale, Rng& rng) {
  float* x = epoch.channel(c);
  for (std::size_t t = 0; t < epoch.n_samples; ++t) {
    x[t] = static_cast<float>(x[t] + scale * uniform_real(rng, -1.0, 1.0));
  }
}

// Knots at 1/100 of the signal length, linearly interpolated back up.
inline void add_low_noise(Epoch& epoch, std::size_t c, double scale, Rng& rng) {
  const std::size_t n = epoch.n_samples;
  const std::size_t knots = std::max<std::size_t>(2, n / 100);
  std::vector<double> knot(knots);
  for (std::size_t i = 0; i < knots; ++i) knot[i] = scale * uniform_real(rng, -1.0, 1.0);

  float* x = epoch.channel(c);
  const double stretch = static_cast<double>(knots - 1) / static_cast<double>(n - 1);
  for (std::size_t t = 0; t < n; ++t) {
    const double pos = static_cast<double>(t) * stretch;
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), knots - 2);
    const double frac = pos - static_cast<double>(i);
    x[t] = static_cast<float>(x[t] + knot[i] + frac * (knot[i + 1] - knot[i]));
  }
}

}  // namespace detail

// noise_seq = D * A * uniform(-1, 1), i.i.d. per channel; A is the channel's
// amplitude range. Low mode draws N/100 knots and interpolates them back to
// length N; "both" adds one sequence of each kind.
inline Epoch add_noise(const Epoch& epoch, double noise_degree, NoiseMode mode, Rng& rng,
                       float clip_bound = std::numeric_limits<float>::infinity()) {
  if (noise_degree < 0.0) throw parameter_error("add_noise: noise degree must be nonnegative");
  Epoch out = epoch;
  if (noise_degree == 0.0) return out;
  for (std::size_t c = 0; c < epoch.n_channels; ++c) {
    const double scale = noise_degree * detail::amplitude_range(epoch, c);
    if (mode == NoiseMode::high || mode == NoiseMode::both) {
      detail::add_high_noise(out, c, scale, rng);
    }
    if (mode == NoiseMode::low || mode == NoiseMode::both) {
      detail::add_low_noise(out, c, scale, rng);
    }
  }
  if (std::isfinite(clip_bound)) out = clip_amplitude(std::move(out), clip_bound);
  return out;
}

// Exchange the channels of each (i, j) pair; everything else untouched.
inline Epoch flip_channels(const Epoch& epoch,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::set<std::size_t> seen;
  for (const auto& pair : pairs) {
    if (pair.first >= epoch.n_channels || pair.second >= epoch.n_channels) {
      throw parameter_error("flip_channels: channel index out of range");
    }
    if (pair.first == pair.second || !seen.insert(pair.first).second ||
        !seen.insert(pair.second).second) {
      throw parameter_error("flip_channels: pair indices collide");
    }
  }
  Epoch out = epoch;
  for (const auto& pair : pairs) {
    for (std::size_t t = 0; t < epoch.n_samples; ++t) {
      out.at(pair.first, t) = epoch.at(pair.second, t);
      out.at(pair.second, t) = epoch.at(pair.first, t);
    }
  }
  return out;
}

// Cyclic shift: output = concat(samples[split:], samples[:split]) per channel.
inline Epoch rotate(const Epoch& epoch, std::size_t split_index) {
  if (split_index > epoch.n_samples) {
    throw parameter_error("rotate: split index " + std::to_string(split_index) +
                          " exceeds sample count " + std::to_string(epoch.n_samples));
  }
  Epoch out = epoch;
  const std::size_t n = epoch.n_samples;
  for (std::size_t c = 0; c < epoch.n_channels; ++c) {
    const float* x = epoch.channel(c);
    float* y = out.channel(c);
    for (std::size_t t = 0; t < n; ++t) y[t] = x[(split_index + t) % n];
  }
  return out;
}

// Apply one enabled augmentation drawn uniformly at random. Flipping, when
// drawn, is composed with one other enabled method since it cannot stand
// alone. The result is clipped to the policy's sensing range. `drawn`
// optionally reports the primary draw.
inline Epoch random_augment(const Epoch& epoch, const AugmentPolicy& policy, Rng& rng,
                            AugmentKind* drawn = nullptr) {
  validate_policy(policy);
  std::vector<AugmentKind> enabled(policy.enabled.begin(), policy.enabled.end());
  AugmentKind pick = enabled[uniform_index(rng, enabled.size())];
  if (drawn) *drawn = pick;

  Epoch out = epoch;
  if (pick == AugmentKind::flipping) {
    out = flip_channels(out, policy.flip_pairs);
    std::vector<AugmentKind> others;
    for (AugmentKind k : enabled) {
      if (k != AugmentKind::flipping) others.push_back(k);
    }
    pick = others[uniform_index(rng, others.size())];
  }

  switch (pick) {
    case AugmentKind::bandpass: {
      const auto& band = policy.bandpass_bands[uniform_index(rng, policy.bandpass_bands.size())];
      out = bandpass(out, band.first, band.second);
      break;
    }
    case AugmentKind::noising: {
      const NoiseMode mode = static_cast<NoiseMode>(uniform_index(rng, 3));
      out = add_noise(out, policy.noise_degree, mode, rng);
      break;
    }
    case AugmentKind::rotation:
      out = rotate(out, uniform_index(rng, epoch.n_samples));
      break;
    case AugmentKind::flipping:
      break;  // unreachable; flipping is resolved above
  }
  return clip_amplitude(std::move(out), policy.clip_bound);
}

}  // namespace contrawr
