#pragma once

// Run configuration as the CLI sees it: model and training settings merged
// from defaults, a named preset, a flat JSON file and command-line flags,
// in that order.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cgmvae/model.hpp"
#include "cgmvae/trainer.hpp"

namespace cgmvae::cli {

struct Preset {
  std::string name;
  double learning_rate;
  double alpha;
  double beta;
  std::size_t embedding_dim;
  double dropout;
  std::size_t batch_size;
  std::vector<std::size_t> decoder_hidden;
};

const std::vector<Preset>& presets();
/// Throws ConfigError listing the known names.
const Preset& find_preset(std::string_view name);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string preset;  ///< empty when none was applied
};

void apply_preset(RunConfig& config, std::string_view name);

/// Applies every key of a flat JSON object. A "preset" key is applied first.
/// Unknown keys, wrong types and dataset-derived keys (input_dim,
/// num_labels) raise ConfigError.
void apply_flat_json(RunConfig& config, const nlohmann::json& object);

/// Reads a flat JSON config file. Throws ConfigError on a missing or
/// malformed file.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Every setting, defaults expanded, in the flat layout apply_flat_json accepts.
nlohmann::json to_flat_json(const RunConfig& config);

/// Names accepted by apply_flat_json.
const std::vector<std::string>& config_keys();

}  // namespace cgmvae::cli
