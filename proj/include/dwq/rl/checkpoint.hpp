#pragma once

// Versioned binary checkpoints.
//
// Layout (all integers and floats little-endian):
//   "DWQCKPT\0"                       8-byte magic
//   u32 format version
//   u32 block count, then (u32 rows, u32 cols) per parameter block
//   u32 x4 network shape (obs_dim, trunk, hidden1, hidden2)
//   PPO configuration fields
//   u64 iteration, u64 total steps
//   Adam: u64 t, f64 beta1, beta2, eps
//   u64 n, then n f64 parameters, n f64 first moments, n f64 second moments
//   u64-prefixed text of the trainer RNG state
//   u64 FNV-1a checksum of every preceding byte

#include <filesystem>
#include <optional>

#include "dwq/rl/ppo.hpp"

namespace dwq::rl {

using Checkpoint = PpoTrainer::Snapshot;

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Atomic: writes a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// With `expected_obs_dim`, a different network input size is a shape error.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_obs_dim = std::nullopt);

ActorCritic policy_from(const Checkpoint& ck);

}  // namespace dwq::rl
