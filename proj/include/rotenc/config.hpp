#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotenc/data.hpp"
#include "rotenc/model.hpp"

namespace rotenc {

struct TrainConfig {
  std::size_t epochs = 800;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  /// Seed of the fixed inference views, stored with the checkpoint.
  std::uint64_t inference_seed = 7;
  /// Tasks to train on; empty means every task in the dataset.
  std::vector<std::string> tasks;
  ModelConfig model;
  SplitSpec split;

  void validate() const;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
nlohmann::ordered_json to_json(const TrainConfig& config);

/// Missing keys keep their defaults; unknown keys and bad values throw InvalidConfig.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

TrainConfig load_train_config(const std::filesystem::path& path);

/// Applies "dotted.path=value" to a config tree. The value is read as JSON
/// when it parses, otherwise as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

}  // namespace rotenc
