#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "compass/core/tensor.hpp"
#include "compass/nn/linear.hpp"

namespace compass {

// Versioned named-tensor container. Layout (little-endian):
//   "CPTM" | u32 version | u64 config_hash | u32 count |
//   per entry: u32 name_len, name bytes, u8 dtype(0 = f64),
//              u32 rank, u64 dims[rank], f64 payload[prod(dims)]
inline constexpr char kCheckpointMagic[4] = {'C', 'P', 'T', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename T>
inline void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
inline T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, std::uint64_t config_hash, const ParamRegistry& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
  out.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint64_t>(out, config_hash);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, tensor] : params.items()) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint8_t>(out, 0);  // f64
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) detail::write_le<std::uint64_t>(out, d);
    for (std::size_t i = 0; i < tensor.size(); ++i) detail::write_le<double>(out, tensor.data()[i]);
  }
  if (!out) throw DataError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("checkpoint: bad magic in '" + path + "'");
  Checkpoint ck;
  ck.version = detail::read_le<std::uint32_t>(in);
  if (ck.version != kCheckpointVersion)
    throw DataError("checkpoint: version " + std::to_string(ck.version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  ck.config_hash = detail::read_le<std::uint64_t>(in);
  const std::uint32_t count = detail::read_le<std::uint32_t>(in);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = detail::read_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("checkpoint: truncated file");
    const std::uint8_t dtype = detail::read_le<std::uint8_t>(in);
    if (dtype != 0) throw DataError("checkpoint: unsupported dtype code " + std::to_string(dtype));
    const std::uint32_t rank = detail::read_le<std::uint32_t>(in);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = detail::read_le<std::uint64_t>(in);
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = detail::read_le<double>(in);
    ck.entries.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

// Copies checkpoint values into an existing registry in place; shapes and
// the name set must match exactly.
inline void restore_params(const Checkpoint& ck, ParamRegistry& params) {
  for (auto& [name, tensor] : params.items()) {
    const Tensor* stored = ck.find(name);
    if (!stored) throw DataError("checkpoint: missing entry '" + name + "'");
    if (stored->shape() != tensor.shape()) throw DataError("checkpoint: shape mismatch for '" + name + "'");
    tensor.copy_from(*stored);
  }
}

}  // namespace compass
