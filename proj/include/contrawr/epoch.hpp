#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "contrawr/errors.hpp"

namespace contrawr {

// Sleep stages per AASM scoring; the wire encoding is the enum value,
// 255 meaning unlabeled.
enum class Stage : std::uint8_t { W = 0, N1 = 1, N2 = 2, N3 = 3, R = 4 };

inline constexpr int kNumStages = 5;
inline constexpr std::size_t kMinEpochSamples = 512;  // STFT window must fit

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::W: return "W";
    case Stage::N1: return "N1";
    case Stage::N2: return "N2";
    case Stage::N3: return "N3";
    case Stage::R: return "R";
  }
  return "?";
}

inline std::optional<Stage> stage_from_name(const std::string& s) {
  for (int k = 0; k < kNumStages; ++k) {
    if (s == stage_name(static_cast<Stage>(k))) return static_cast<Stage>(k);
  }
  return std::nullopt;
}

// One C-channel, N-sample signal segment; the atomic data unit.
// Samples are stored channel-major: samples[c * n_samples + t].
struct Epoch {
  std::vector<float> samples;
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  float sample_rate_hz = 0.0f;
  std::string subject_id;
  std::optional<Stage> label;

  float& at(std::size_t c, std::size_t t) { return samples[c * n_samples + t]; }
  float at(std::size_t c, std::size_t t) const { return samples[c * n_samples + t]; }

  float* channel(std::size_t c) { return samples.data() + c * n_samples; }
  const float* channel(std::size_t c) const { return samples.data() + c * n_samples; }
};

inline void validate_epoch(const Epoch& e) {
  if (e.n_channels < 1) throw parameter_error("epoch: needs at least one channel");
  if (e.n_samples < kMinEpochSamples) {
    throw parameter_error("epoch: needs at least " + std::to_string(kMinEpochSamples) +
                          " samples, got " + std::to_string(e.n_samples));
  }
  if (!(e.sample_rate_hz > 0.0f)) throw parameter_error("epoch: sample rate must be positive");
  if (e.samples.size() != e.n_channels * e.n_samples) {
    throw shape_error("epoch: sample buffer does not match (channels, samples)");
  }
  for (std::size_t i = 0; i < e.samples.size(); ++i) {
    if (!std::isfinite(e.samples[i])) {
      throw format_error("epoch: non-finite sample at flat index " + std::to_string(i));
    }
  }
}

// Clamp every sample into [-bound, +bound]; in-range samples pass unchanged.
inline Epoch clip_amplitude(Epoch epoch, float bound) {
  if (!(bound > 0.0f)) throw parameter_error("clip_amplitude: bound must be positive");
  for (float& v : epoch.samples) v = std::clamp(v, -bound, bound);
  return epoch;
}

// Labeled epochs grouped by subject. clip_bound records the valid sensing
// range of the source recordings.
struct Dataset {
  std::vector<Epoch> epochs;
  std::set<std::string> subjects;
  float clip_bound = 50.0f;
};

inline void validate_dataset(const Dataset& d) {
  if (!(d.clip_bound > 0.0f)) throw parameter_error("dataset: clip_bound must be positive");
  for (const Epoch& e : d.epochs) {
    if (d.subjects.find(e.subject_id) == d.subjects.end()) {
      throw data_error("dataset: epoch subject '" + e.subject_id + "' not in subject set");
    }
    if (!d.epochs.empty()) {
      const Epoch& first = d.epochs.front();
      if (e.n_channels != first.n_channels || e.n_samples != first.n_samples ||
          e.sample_rate_hz != first.sample_rate_hz) {
        throw data_error("dataset: epochs disagree on (channels, samples, sample rate)");
      }
    }
  }
}

// Subject-level partition; pretext labels are stripped at construction.
struct Split {
  Dataset pretext;
  Dataset training;
  Dataset test;
};

}  // namespace contrawr
