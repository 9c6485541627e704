#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "contrawr/adam.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/model.hpp"

namespace contrawr {

// Versioned binary checkpoint: every parameter array of both networks, the
// optimizer moments, step counters, and the full config snapshot. Arrays are
// stored as raw little-endian f32, so save/load round-trips bit for bit.
inline constexpr char kCheckpointMagic[6] = {'C', 'W', 'C', 'K', '1', '\0'};

namespace ckpt_detail {

inline void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
inline void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void write_floats(std::ofstream& out, const std::vector<float>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw format_error("checkpoint: truncated u32 in " + path);
  return v;
}
inline std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  std::uint64_t v;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw format_error("checkpoint: truncated u64 in " + path);
  return v;
}
inline std::string read_string(std::ifstream& in, const std::string& path) {
  const std::uint64_t n = read_u64(in, path);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw format_error("checkpoint: truncated string in " + path);
  return s;
}
inline std::vector<float> read_floats(std::ifstream& in, const std::string& path) {
  const std::uint64_t n = read_u64(in, path);
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw format_error("checkpoint: truncated float array in " + path);
  return v;
}

inline void write_params(std::ofstream& out, std::vector<Param<float>*> params) {
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Param<float>* p : params) {
    write_string(out, p->name);
    write_u32(out, static_cast<std::uint32_t>(p->shape.size()));
    for (std::size_t d : p->shape) write_u64(out, d);
    write_floats(out, p->value);
  }
}

inline void read_params(std::ifstream& in, std::vector<Param<float>*> params,
                        const std::string& path) {
  const std::uint32_t count = read_u32(in, path);
  if (count != params.size()) {
    throw format_error("checkpoint: parameter count mismatch in " + path);
  }
  for (Param<float>* p : params) {
    const std::string name = read_string(in, path);
    if (name != p->name) {
      throw format_error("checkpoint: expected parameter '" + p->name + "', found '" + name +
                         "' in " + path);
    }
    const std::uint32_t ndim = read_u32(in, path);
    std::vector<std::size_t> shape(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) shape[i] = read_u64(in, path);
    if (shape != p->shape) {
      throw format_error("checkpoint: shape mismatch for '" + p->name + "' in " + path);
    }
    p->value = read_floats(in, path);
    if (p->value.size() != numel(shape)) {
      throw format_error("checkpoint: array size mismatch for '" + p->name + "' in " + path);
    }
  }
}

}  // namespace ckpt_detail

struct CheckpointMeta {
  std::string config_snapshot;     // serialized run configuration
  std::uint64_t step = 0;          // optimizer steps taken
  std::uint64_t epochs_done = 0;   // completed training epochs
};

template <typename NetworkPair>
void save_checkpoint(const std::string& path, NetworkPair& online, NetworkPair& target,
                     AdamState<float>& optimizer, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("checkpoint: cannot open for writing: " + path);
  out.write(kCheckpointMagic, 6);
  ckpt_detail::write_u32(out, 1);
  ckpt_detail::write_string(out, meta.config_snapshot);
  ckpt_detail::write_u64(out, meta.step);
  ckpt_detail::write_u64(out, meta.epochs_done);
  ckpt_detail::write_params(out, online.params());
  ckpt_detail::write_params(out, target.params());
  ckpt_detail::write_u64(out, optimizer.step);
  ckpt_detail::write_u32(out, static_cast<std::uint32_t>(optimizer.m.size()));
  for (const auto& m : optimizer.m) ckpt_detail::write_floats(out, m);
  for (const auto& v : optimizer.v) ckpt_detail::write_floats(out, v);
  if (!out) throw data_error("checkpoint: write failed: " + path);
}

// Loads into preconstructed networks (shapes must match the stored layout).
template <typename NetworkPair>
CheckpointMeta load_checkpoint(const std::string& path, NetworkPair& online,
                               NetworkPair& target, AdamState<float>& optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot open: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw format_error("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = ckpt_detail::read_u32(in, path);
  if (version != 1) {
    throw format_error("checkpoint: unsupported version " + std::to_string(version) + " in " +
                       path);
  }
  CheckpointMeta meta;
  meta.config_snapshot = ckpt_detail::read_string(in, path);
  meta.step = ckpt_detail::read_u64(in, path);
  meta.epochs_done = ckpt_detail::read_u64(in, path);
  ckpt_detail::read_params(in, online.params(), path);
  ckpt_detail::read_params(in, target.params(), path);
  optimizer.step = ckpt_detail::read_u64(in, path);
  const std::uint32_t moments = ckpt_detail::read_u32(in, path);
  optimizer.m.resize(moments);
  optimizer.v.resize(moments);
  for (auto& m : optimizer.m) m = ckpt_detail::read_floats(in, path);
  for (auto& v : optimizer.v) v = ckpt_detail::read_floats(in, path);
  return meta;
}

// Reads just the config snapshot (for compatibility checks before
// constructing networks).
inline std::string read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot open: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw format_error("checkpoint: bad magic in " + path);
  }
  ckpt_detail::read_u32(in, path);
  return ckpt_detail::read_string(in, path);
}

}  // namespace contrawr
