#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "texweave/direction.hpp"
#include "texweave/draw.hpp"
#include "texweave/losses.hpp"

namespace texweave {

// Binary container shared by checkpoints and texton dictionaries:
//
//   8 bytes   magic "TXWVDATA"
//   8 bytes   header length in bytes, little-endian uint64
//   N bytes   UTF-8 JSON header
//   ...       little-endian float64 arrays, back to back in manifest order
//
// The header is {"format": "texweave", "version": 1, "meta": {...},
// "arrays": [{"name", "shape", "offset"}]} with offsets counted in elements
// from the start of the array section.
inline constexpr int kContainerVersion = 1;

using NamedArrays = std::vector<std::pair<std::string, Tensor>>;

void write_container(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& arrays);

struct Container {
  nlohmann::json meta;
  NamedArrays arrays;

  const Tensor& array(const std::string& name) const;
};

Container read_container(const std::filesystem::path& path);

nlohmann::json to_json(const DrawConfig& config);
DrawConfig draw_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossSpec& spec);
LossSpec loss_spec_from_json(const nlohmann::json& j);

struct Checkpoint {
  DrawModel model;
  Direction direction = Direction::north;
  LossSpec loss;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Validates the container version and that every parameter matches the
// shape implied by the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace texweave
