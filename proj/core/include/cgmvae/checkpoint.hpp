#pragma once

// Checkpoint file layout:
//   one line of compact JSON metadata terminated by '\n', then every
//   parameter array as little-endian IEEE-754 float32 values, in the order
//   listed under "parameters" in the metadata.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cgmvae/dataset.hpp"
#include "cgmvae/model.hpp"

namespace cgmvae {

inline constexpr int kCheckpointFormatVersion = 1;

/// How the dataset was partitioned and normalized for a run; enough to
/// rebuild the same split and to normalize raw features at predict time.
struct DataProvenance {
  std::uint64_t split_seed = 0;
  SplitFractions fractions;
  double train_fraction = 1.0;
  std::string split_manifest;  ///< empty when a seeded random split was used
  NormStats norm;
  std::vector<std::string> label_names;
};

struct CheckpointMeta {
  int format_version = kCheckpointFormatVersion;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string tag;  ///< "best" or "last"
  DataProvenance data;
};

struct Checkpoint {
  CheckpointMeta meta;
  ModelParams params;
};

/// Writes atomically (temp file, then rename).
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to float32 precision, the precision stored on disk.
ModelParams round_to_checkpoint_precision(const ModelParams& params);

/// Throws CheckpointError unless the model's D and L match the dataset.
void require_compatible(const ModelConfig& config, const Dataset& ds);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace cgmvae
