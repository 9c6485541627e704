#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "contrawr/epoch.hpp"
#include "contrawr/rng.hpp"

namespace contrawr {

// Frequency bands dominating each synthetic class, in Hz. The layout mirrors
// sleep-stage physiology at toy scale: slow activity for deep stages through
// fast activity for wake-like classes.
inline constexpr std::array<std::array<double, 2>, kNumStages> kSyntheticBands = {{
    {0.5, 4.0}, {4.0, 7.0}, {8.0, 12.0}, {12.0, 16.0}, {16.0, 25.0},
}};

namespace detail {

// One epoch of class `stage`: a handful of in-band sinusoids under heavy
// nuisance variation. The nuisances are chosen to defeat raw spectral
// features while remaining either class-irrelevant (gain, drift, broadband
// noise) or augmentation-removable (the super-Nyquist-band hum sits inside
// the default bandpass stopband):
//   - a wide log-uniform per-epoch gain on top of per-subject channel gains,
//   - a sub-0.4 Hz baseline drift,
//   - a 30-45 Hz hum,
//   - one weak distractor tone from another class band,
//   - broadband Gaussian noise.
inline Epoch synthetic_epoch(Stage stage, std::size_t n_channels, std::size_t n_samples,
                             float fs, const std::vector<double>& subject_gain, Rng& rng) {
  Epoch epoch;
  epoch.n_channels = n_channels;
  epoch.n_samples = n_samples;
  epoch.sample_rate_hz = fs;
  epoch.label = stage;
  epoch.samples.assign(n_channels * n_samples, 0.0f);

  const auto& band = kSyntheticBands[static_cast<std::size_t>(stage)];
  const double epoch_gain = std::exp(uniform_real(rng, std::log(0.25), std::log(4.0)));
  const double two_pi = 6.283185307179586;

  constexpr int kComponents = 3;
  double freqs[kComponents], amps[kComponents];
  for (int j = 0; j < kComponents; ++j) {
    freqs[j] = uniform_real(rng, band[0], band[1]);
    amps[j] = uniform_real(rng, 0.8, 1.2);
  }
  // Distractor drawn from one of the other bands, kept weak enough that
  // in-band power still dominates by a wide factor.
  std::size_t other = uniform_index(rng, kNumStages - 1);
  if (other >= static_cast<std::size_t>(stage)) ++other;
  const double distractor_freq =
      uniform_real(rng, kSyntheticBands[other][0], kSyntheticBands[other][1]);
  const double distractor_amp = 0.3;

  for (std::size_t c = 0; c < n_channels; ++c) {
    double phase[kComponents];
    for (int j = 0; j < kComponents; ++j) phase[j] = uniform_real(rng, 0.0, two_pi);
    const double dphase = uniform_real(rng, 0.0, two_pi);
    const double drift_amp = uniform_real(rng, 0.0, 3.0);
    const double drift_freq = uniform_real(rng, 0.05, 0.35);
    const double drift_phase = uniform_real(rng, 0.0, two_pi);
    const double hum_amp = uniform_real(rng, 0.0, 2.5);
    const double hum_freq = uniform_real(rng, 30.0, 45.0);
    const double hum_phase = uniform_real(rng, 0.0, two_pi);
    const double gain = subject_gain[c] * epoch_gain;
    float* ch = epoch.channel(c);
    for (std::size_t t = 0; t < n_samples; ++t) {
      const double time = static_cast<double>(t) / fs;
      double v = 0.0;
      for (int j = 0; j < kComponents; ++j) {
        v += amps[j] * std::sin(two_pi * freqs[j] * time + phase[j]);
      }
      v += distractor_amp * std::sin(two_pi * distractor_freq * time + dphase);
      v += drift_amp * std::sin(two_pi * drift_freq * time + drift_phase);
      v += hum_amp * std::sin(two_pi * hum_freq * time + hum_phase);
      v += 0.8 * normal(rng);
      // Sensors saturate at the dataset's valid sensing range.
      ch[t] = std::clamp(static_cast<float>(gain * v), -50.0f, 50.0f);
    }
  }
  return epoch;
}

}  // namespace detail

// Deterministic 5-class dataset whose classes differ by dominant spectral
// band; stands in for the non-shippable clinical recordings. Labels cycle
// through all five stages within each subject.
inline Dataset generate_synthetic_dataset(std::size_t n_subjects, std::size_t epochs_per_subject,
                                          std::size_t n_channels, std::size_t n_samples,
                                          float fs, std::uint64_t seed) {
  if (n_subjects < 3) throw parameter_error("synthetic: need at least 3 subjects");
  if (n_samples < kMinEpochSamples) {
    throw parameter_error("synthetic: need at least " + std::to_string(kMinEpochSamples) +
                          " samples per epoch");
  }
  if (n_channels < 1) throw parameter_error("synthetic: need at least one channel");
  if (!(fs > 0.0f)) throw parameter_error("synthetic: sample rate must be positive");
  if (0.5 * fs <= 45.0) {  // class bands top out at 25 Hz, the hum at 45 Hz
    throw parameter_error("synthetic: sample rate must exceed 90 Hz");
  }

  Dataset dataset;
  dataset.clip_bound = 50.0f;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    std::string subject = "S" + std::to_string(1000 + s).substr(1);
    dataset.subjects.insert(subject);

    Rng subject_rng = make_rng(derive_seed(seed, 0x5a5a, s));
    std::vector<double> gain(n_channels);
    for (std::size_t c = 0; c < n_channels; ++c) gain[c] = uniform_real(subject_rng, 0.5, 2.0);

    for (std::size_t e = 0; e < epochs_per_subject; ++e) {
      Stage stage = static_cast<Stage>((s + e) % kNumStages);
      Rng rng = make_rng(derive_seed(seed, 0xe90c, s, e));
      Epoch epoch = detail::synthetic_epoch(stage, n_channels, n_samples, fs, gain, rng);
      epoch.subject_id = subject;
      dataset.epochs.push_back(std::move(epoch));
    }
  }
  return dataset;
}

}  // namespace contrawr
