#pragma once

#include <filesystem>
#include <iosfwd>

#include "rotenc/config.hpp"
#include "rotenc/model.hpp"

namespace rotenc {

constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  Model model;
  TrainConfig train_config;
};

/// Binary container: magic "ROTENC1\0", u32 version, u64-length JSON header
/// (configs, vocabulary, tasks, edge width, inference seed), normalizer block,
/// named little-endian f64 arrays, u64 FNV-1a checksum of everything before it.
void save_checkpoint(std::ostream& out, const Model& model, const TrainConfig& train_config);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& train_config);

Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rotenc
