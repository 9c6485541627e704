#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "contrawr/epoch.hpp"
#include "contrawr/errors.hpp"

namespace contrawr {

// EPOC1 container (little-endian):
//   offset 0   magic "EPOC1\0" (6 bytes)
//   offset 6   u16 version = 1
//   offset 8   u32 channel count C
//   offset 12  u32 sample count N
//   offset 16  f32 sample_rate_hz
//   offset 20  u8  label (0-4, 255 = unlabeled)
//   offset 21  32-byte zero-padded subject id
//   offset 53  C*N f32 samples, channel-major
inline constexpr char kEpocMagic[6] = {'E', 'P', 'O', 'C', '1', '\0'};
inline constexpr std::size_t kEpocHeaderBytes = 53;
inline constexpr std::uint8_t kEpocUnlabeled = 255;

inline void save_epoch_epoc1(const Epoch& epoch, const std::string& path) {
  validate_epoch(epoch);
  if (epoch.subject_id.size() > 32) {
    throw parameter_error("epoc1: subject id longer than 32 bytes: " + epoch.subject_id);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("epoc1: cannot open for writing: " + path);

  char header[kEpocHeaderBytes] = {};
  std::memcpy(header, kEpocMagic, 6);
  const std::uint16_t version = 1;
  const std::uint32_t c = static_cast<std::uint32_t>(epoch.n_channels);
  const std::uint32_t n = static_cast<std::uint32_t>(epoch.n_samples);
  const float fs = epoch.sample_rate_hz;
  const std::uint8_t label =
      epoch.label ? static_cast<std::uint8_t>(*epoch.label) : kEpocUnlabeled;
  std::memcpy(header + 6, &version, 2);
  std::memcpy(header + 8, &c, 4);
  std::memcpy(header + 12, &n, 4);
  std::memcpy(header + 16, &fs, 4);
  std::memcpy(header + 20, &label, 1);
  std::memcpy(header + 21, epoch.subject_id.data(), epoch.subject_id.size());

  out.write(header, kEpocHeaderBytes);
  out.write(reinterpret_cast<const char*>(epoch.samples.data()),
            static_cast<std::streamsize>(epoch.samples.size() * sizeof(float)));
  if (!out) throw data_error("epoc1: write failed: " + path);
}

inline Epoch load_epoch_epoc1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("epoc1: cannot open: " + path);

  char header[kEpocHeaderBytes];
  in.read(header, kEpocHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kEpocHeaderBytes)) {
    throw format_error("epoc1: truncated header (" + std::to_string(in.gcount()) +
                       " of 53 bytes) in " + path);
  }
  if (std::memcmp(header, kEpocMagic, 6) != 0) {
    throw format_error("epoc1: bad magic at byte offset 0 in " + path);
  }
  std::uint16_t version;
  std::memcpy(&version, header + 6, 2);
  if (version != 1) {
    throw format_error("epoc1: unsupported version " + std::to_string(version) +
                       " at byte offset 6 in " + path);
  }

  Epoch epoch;
  std::uint32_t c, n;
  std::memcpy(&c, header + 8, 4);
  std::memcpy(&n, header + 12, 4);
  std::memcpy(&epoch.sample_rate_hz, header + 16, 4);
  std::uint8_t label;
  std::memcpy(&label, header + 20, 1);
  if (label != kEpocUnlabeled) {
    if (label >= kNumStages) {
      throw format_error("epoc1: invalid label " + std::to_string(label) +
                         " at byte offset 20 in " + path);
    }
    epoch.label = static_cast<Stage>(label);
  }
  epoch.subject_id.assign(header + 21, header + 53);
  epoch.subject_id.erase(epoch.subject_id.find_last_not_of('\0') + 1);

  epoch.n_channels = c;
  epoch.n_samples = n;
  epoch.samples.resize(static_cast<std::size_t>(c) * n);
  in.read(reinterpret_cast<char*>(epoch.samples.data()),
          static_cast<std::streamsize>(epoch.samples.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(epoch.samples.size() * sizeof(float))) {
    throw format_error("epoc1: truncated payload at byte offset " +
                       std::to_string(kEpocHeaderBytes + in.gcount()) + " in " + path);
  }
  for (std::size_t i = 0; i < epoch.samples.size(); ++i) {
    if (!std::isfinite(epoch.samples[i])) {
      throw format_error("epoc1: non-finite sample at byte offset " +
                         std::to_string(kEpocHeaderBytes + i * sizeof(float)) + " in " + path);
    }
  }
  validate_epoch(epoch);
  return epoch;
}

// CSV alternative: header row "channel,t0,t1,...", one row per channel.
// The format carries no metadata, so the sample rate comes from the caller.
inline void save_epoch_csv(const Epoch& epoch, const std::string& path) {
  validate_epoch(epoch);
  std::ofstream out(path);
  if (!out) throw data_error("epoch csv: cannot open for writing: " + path);
  out << "channel";
  for (std::size_t t = 0; t < epoch.n_samples; ++t) out << ",t" << t;
  out << "\n";
  out.precision(9);
  for (std::size_t c = 0; c < epoch.n_channels; ++c) {
    out << c;
    for (std::size_t t = 0; t < epoch.n_samples; ++t) out << "," << epoch.at(c, t);
    out << "\n";
  }
}

inline Epoch load_epoch_csv(const std::string& path, float sample_rate_hz = 100.0f,
                            const std::string& subject_id = "csv") {
  std::ifstream in(path);
  if (!in) throw data_error("epoch csv: cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("channel", 0) != 0) {
    throw format_error("epoch csv: row 0 is not a 'channel,t0,...' header in " + path);
  }

  Epoch epoch;
  epoch.sample_rate_hz = sample_rate_hz;
  epoch.subject_id = subject_id;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) {
      throw format_error("epoch csv: empty row " + std::to_string(row) + " in " + path);
    }
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      float v;
      try {
        v = std::stof(cell);
      } catch (const std::exception&) {
        throw format_error("epoch csv: unparsable value '" + cell + "' at row " +
                           std::to_string(row) + " in " + path);
      }
      if (!std::isfinite(v)) {
        throw format_error("epoch csv: non-finite value at row " + std::to_string(row) +
                           " in " + path);
      }
      epoch.samples.push_back(v);
      ++count;
    }
    if (epoch.n_samples == 0) {
      epoch.n_samples = count;
    } else if (count != epoch.n_samples) {
      throw format_error("epoch csv: row " + std::to_string(row) + " has " +
                         std::to_string(count) + " samples, expected " +
                         std::to_string(epoch.n_samples) + " in " + path);
    }
    ++epoch.n_channels;
  }
  validate_epoch(epoch);
  return epoch;
}

// Dispatch on content: EPOC1 magic wins, anything else is treated as CSV.
inline Epoch load_epoch_file(const std::string& path, float csv_sample_rate_hz = 100.0f) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw data_error("load_epoch_file: cannot open: " + path);
  char magic[6] = {};
  probe.read(magic, 6);
  probe.close();
  if (std::memcmp(magic, kEpocMagic, 6) == 0) return load_epoch_epoc1(path);
  return load_epoch_csv(path, csv_sample_rate_hz);
}

}  // namespace contrawr
