#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "contrawr/epoch.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/fft.hpp"

namespace contrawr {

struct StftConfig {
  std::size_t window = 256;
  std::size_t hop = 64;
  bool log_amplitude = false;  // log1p on the amplitude channels
};

inline std::size_t stft_bins(std::size_t window) { return window / 2 + 1; }

inline std::size_t stft_frames(std::size_t n_samples, std::size_t window, std::size_t hop) {
  return (n_samples - window) / hop + 1;  // full windows only, no padding
}

// Windowed one-sided spectra of a single channel. Frame t covers samples
// [t*hop, t*hop + window) under a Hann window. Returned matrix is
// [bins x frames], row-major.
inline std::vector<std::complex<double>> stft(const std::vector<double>& signal,
                                              std::size_t window, std::size_t hop) {
  if (window == 0 || window % 2 != 0) throw parameter_error("stft: window must be even");
  if (hop == 0) throw parameter_error("stft: hop must be positive");
  if (signal.size() < window) {
    throw parameter_error("stft: signal length " + std::to_string(signal.size()) +
                          " shorter than window " + std::to_string(window));
  }

  const std::size_t bins = stft_bins(window);
  const std::size_t frames = stft_frames(signal.size(), window, hop);
  std::vector<double> hann(window);
  for (std::size_t i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(6.283185307179586 * static_cast<double>(i) /
                                   static_cast<double>(window));
  }

  std::vector<std::complex<double>> out(bins * frames);
  std::vector<double> frame(window);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < window; ++i) frame[i] = signal[start + i] * hann[i];
    auto spectrum = real_dft_onesided(frame);
    for (std::size_t k = 0; k < bins; ++k) out[k * frames + t] = spectrum[k];
  }
  return out;
}

// Stacked amplitude+phase spectrogram, the encoder's input. Feature channels
// are [amp_1..amp_C, phase_1..phase_C]; values stored channel-major as
// values[ch * bins * frames + k * frames + t].
struct FeatureTensor {
  std::vector<float> values;
  std::size_t feature_channels = 0;  // 2 * C
  std::size_t bins = 0;              // window/2 + 1
  std::size_t frames = 0;
  std::size_t window = 0;
  std::size_t hop = 0;

  std::size_t size() const { return feature_channels * bins * frames; }
};

inline FeatureTensor epoch_to_features(const Epoch& epoch, const StftConfig& config) {
  const std::size_t bins = stft_bins(config.window);
  const std::size_t frames = stft_frames(epoch.n_samples, config.window, config.hop);

  FeatureTensor features;
  features.feature_channels = 2 * epoch.n_channels;
  features.bins = bins;
  features.frames = frames;
  features.window = config.window;
  features.hop = config.hop;
  features.values.assign(features.size(), 0.0f);

  std::vector<double> signal(epoch.n_samples);
  const std::size_t plane = bins * frames;
  for (std::size_t c = 0; c < epoch.n_channels; ++c) {
    for (std::size_t t = 0; t < epoch.n_samples; ++t) signal[t] = epoch.at(c, t);
    auto spectrum = stft(signal, config.window, config.hop);
    float* amp = features.values.data() + c * plane;
    float* phase = features.values.data() + (epoch.n_channels + c) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double re = spectrum[i].real();
      const double im = spectrum[i].imag();
      double magnitude = std::sqrt(re * re + im * im);
      // Zero-magnitude bins take phase 0 so no NaN can enter the pipeline.
      phase[i] = magnitude > 0.0 ? static_cast<float>(std::atan2(im, re)) : 0.0f;
      if (config.log_amplitude) magnitude = std::log1p(magnitude);
      amp[i] = static_cast<float>(magnitude);
    }
  }
  return features;
}

}  // namespace contrawr
