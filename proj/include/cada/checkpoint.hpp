#pragma once

// Binary checkpoint format, all integers little-endian:
//
//   magic      4 bytes  "CADA"
//   version    u32      kCheckpointVersion
//   seed       u64
//   config     u32 length + UTF-8 bytes   ("key = value" lines)
//   vocabulary u32 length + UTF-8 bytes   (one token per line, id order)
//   count      u32      number of tensor records
//   record     u32 name length + name bytes,
//              u32 rank, rank x u64 dims,
//              product(dims) x f64 (IEEE-754 little-endian, row-major)

#include "cada/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

namespace cada {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t seed = 0;
  std::string config_text;
  std::string vocabulary_text;
};

struct Checkpoint {
  CheckpointHeader header;
  std::map<std::string, Matrix> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     std::span<const Parameter* const> params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored tensors into `params` by name; throws on a missing name or
/// a shape mismatch.
void restore_parameters(const Checkpoint& ckpt, std::span<Parameter* const> params);

}  // namespace cada
