#include "texweave/tiles.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "texweave/errors.hpp"
#include "texweave/image.hpp"

namespace texweave {

TextureImage make_texture(Tensor pixels, int id, std::string path, std::size_t tile_size) {
  if (pixels.rank() != 3 || pixels.dim(2) != 3)
    throw DataError("texture must be H x W x 3, got " + shape_string(pixels.shape()));
  if (pixels.dim(0) < 3 * tile_size || pixels.dim(1) < 3 * tile_size)
    throw DataError("texture " + path + " is " + shape_string(pixels.shape()) +
                    ", smaller than 3 x tile size " + std::to_string(tile_size));
  for (double v : pixels.data())
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("texture " + path + " has values outside [0, 1]");
  return TextureImage{std::move(pixels), std::move(path), id};
}

TextureImage load_texture(const std::filesystem::path& path, int id, std::size_t tile_size) {
  return make_texture(load_png(path), id, path.string(), tile_size);
}

const Tensor& TileQuintet::neighbor(Direction d) const {
  switch (d) {
    case Direction::north: return north;
    case Direction::south: return south;
    case Direction::east: return east;
    case Direction::west: return west;
  }
  return center;
}

TileQuintet quintet_at(const TextureImage& img, std::size_t tile, std::size_t row,
                       std::size_t col) {
  const Tensor& p = img.pixels;
  if (row < tile || col < tile || row + 2 * tile > p.dim(0) || col + 2 * tile > p.dim(1))
    throw DataError("quintet at (" + std::to_string(row) + ", " + std::to_string(col) +
                    ") does not fit in " + shape_string(p.shape()));
  TileQuintet q;
  q.center = crop(p, row, col, tile, tile);
  q.north = crop(p, row - tile, col, tile, tile);
  q.south = crop(p, row + tile, col, tile, tile);
  q.west = crop(p, row, col - tile, tile, tile);
  q.east = crop(p, row, col + tile, tile, tile);
  q.row = row;
  q.col = col;
  q.texture_id = img.id;
  return q;
}

TileQuintet sample_quintet(const TextureImage& img, std::size_t tile, Rng& rng) {
  const Tensor& p = img.pixels;
  if (p.dim(0) < 3 * tile || p.dim(1) < 3 * tile)
    throw DataError("texture " + img.path + " too small for tile size " + std::to_string(tile));
  std::uniform_int_distribution<std::size_t> rows(tile, p.dim(0) - 2 * tile);
  std::uniform_int_distribution<std::size_t> cols(tile, p.dim(1) - 2 * tile);
  std::size_t r = rows(rng);
  std::size_t c = cols(rng);
  return quintet_at(img, tile, r, c);
}

std::vector<TileQuintet> build_epoch(const std::vector<TextureImage>& textures,
                                     std::size_t tile_size,
                                     const std::vector<std::size_t>& per_texture, Rng& rng) {
  if (textures.empty()) throw DataError("build_epoch: no textures");
  if (per_texture.size() != textures.size())
    throw std::invalid_argument("build_epoch: one sample count per texture required");
  std::vector<TileQuintet> epoch;
  for (std::size_t i = 0; i < textures.size(); ++i)
    for (std::size_t n = 0; n < per_texture[i]; ++n)
      epoch.push_back(sample_quintet(textures[i], tile_size, rng));
  std::shuffle(epoch.begin(), epoch.end(), rng);
  return epoch;
}

std::vector<TileQuintet> build_epoch(const std::vector<TextureImage>& textures,
                                     std::size_t tile_size, std::size_t per_texture, Rng& rng) {
  return build_epoch(textures, tile_size, std::vector<std::size_t>(textures.size(), per_texture),
                     rng);
}

DatasetConfig load_dataset_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset config " + path.string());
  DatasetConfig cfg;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    cfg.tile_size = j.value("tile_size", kDefaultTileSize);
    for (const auto& t : j.at("textures")) {
      DatasetConfig::Entry e;
      e.path = t.at("path").get<std::string>();
      if (e.path.is_relative()) e.path = path.parent_path() / e.path;
      e.samples_per_epoch = t.value("samples_per_epoch", e.samples_per_epoch);
      cfg.textures.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed dataset config " + path.string() + ": " + e.what());
  }
  if (cfg.tile_size == 0) throw DataError("dataset tile_size must be positive");
  if (cfg.textures.empty()) throw DataError("dataset config lists no textures");
  return cfg;
}

Dataset load_dataset(const DatasetConfig& config) {
  Dataset d;
  d.tile_size = config.tile_size;
  int id = 0;
  for (const auto& e : config.textures) {
    d.textures.push_back(load_texture(e.path, id++, config.tile_size));
    d.samples_per_epoch.push_back(e.samples_per_epoch);
  }
  return d;
}

}  // namespace texweave
