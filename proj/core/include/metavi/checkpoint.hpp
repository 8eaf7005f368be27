#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace metavi {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct TruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct ChecksumError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// Self-describing model snapshot. The architecture JSON carries everything
// needed to rebuild the networks; tensors are flat f64 vectors in header
// order. Save/load roundtrips are bit-exact.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json architecture;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
  std::vector<double> optimizer_state;
  std::uint64_t optimizer_step = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t training_step = 0;
};

// File layout: "MVI1" magic, u32 version, u32 header length, JSON header,
// f64 blocks (little-endian) in header-declared order, trailing CRC32 of
// everything before it.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Shared framing for other binary artifacts (dataset bundles use "MVD1").
std::uint32_t crc32(const unsigned char* data, std::size_t len,
                    std::uint32_t seed = 0);

struct FramedFile {
  nlohmann::json header;
  std::vector<std::vector<double>> blocks;
};

void write_framed(const std::filesystem::path& path, const char magic[4],
                  std::uint32_t version, const nlohmann::json& header,
                  const std::vector<std::vector<double>>& blocks);
// Block lengths come from "block_lens" in the header, written automatically
// by write_framed.
FramedFile read_framed(const std::filesystem::path& path, const char magic[4],
                       std::uint32_t expected_version);

}  // namespace metavi
