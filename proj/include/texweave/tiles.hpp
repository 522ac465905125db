#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "texweave/direction.hpp"
#include "texweave/random.hpp"
#include "texweave/tensor.hpp"

namespace texweave {

inline constexpr std::size_t kDefaultTileSize = 28;

struct TextureImage {
  Tensor pixels;  // H x W x 3 in [0, 1]
  std::string path;
  int id = 0;
};

// Validates range and that the image admits a quintet of tile_size tiles.
TextureImage make_texture(Tensor pixels, int id, std::string path, std::size_t tile_size);
TextureImage load_texture(const std::filesystem::path& path, int id,
                          std::size_t tile_size = kDefaultTileSize);

// A center tile and its four abutting neighbors.
struct TileQuintet {
  Tensor center, north, south, east, west;
  std::size_t row = 0, col = 0;  // top-left of the center tile
  int texture_id = 0;

  const Tensor& neighbor(Direction d) const;
};

// Quintet with the center tile's top-left corner at (row, col).
TileQuintet quintet_at(const TextureImage& img, std::size_t tile_size, std::size_t row,
                       std::size_t col);

// Center origin uniform over positions leaving a full tile margin on every side.
TileQuintet sample_quintet(const TextureImage& img, std::size_t tile_size, Rng& rng);

// per_texture[i] quintets from textures[i], shuffled together.
std::vector<TileQuintet> build_epoch(const std::vector<TextureImage>& textures,
                                     std::size_t tile_size,
                                     const std::vector<std::size_t>& per_texture, Rng& rng);
std::vector<TileQuintet> build_epoch(const std::vector<TextureImage>& textures,
                                     std::size_t tile_size, std::size_t per_texture, Rng& rng);

// { "tile_size": 28, "textures": [{"path": ..., "samples_per_epoch": ...}] }
// Relative paths resolve against the config file's directory.
struct DatasetConfig {
  struct Entry {
    std::filesystem::path path;
    std::size_t samples_per_epoch = 64;
  };
  std::size_t tile_size = kDefaultTileSize;
  std::vector<Entry> textures;
};

DatasetConfig load_dataset_config(const std::filesystem::path& path);

struct Dataset {
  std::size_t tile_size = kDefaultTileSize;
  std::vector<TextureImage> textures;
  std::vector<std::size_t> samples_per_epoch;
};

Dataset load_dataset(const DatasetConfig& config);

}  // namespace texweave
