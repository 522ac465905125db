#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "texweave/direction.hpp"
#include "texweave/draw.hpp"

namespace texweave {

// One trained model per direction, indexed by direction_index().
struct DirectionModels {
  std::array<const DrawModel*, 4> models{};

  const DrawModel& get(Direction d) const;
};

// Tiles keyed by (row, col) offset from the center tile at (0, 0).
struct TileGrid {
  std::size_t tile_size = 0;
  std::map<std::pair<int, int>, Tensor> cells;
};

struct GenerationStep {
  int row = 0, col = 0;          // cell being generated
  int src_row = 0, src_col = 0;  // filled cell fed to the model
  Direction direction = Direction::north;  // position of (row, col) relative to the source
  std::size_t ring = 0;
  std::size_t wave = 0;  // cells of one wave depend only on earlier waves
};

// Generation order for a cells_per_side x cells_per_side grid (odd). Rings of
// growing Chebyshev radius are filled in waves; within a wave cells are in
// row-major order, and each uses its first filled neighbor in N, S, E, W order.
std::vector<GenerationStep> expansion_schedule(std::size_t cells_per_side);

struct Expansion {
  Tensor image;
  TileGrid grid;
  std::vector<GenerationStep> steps;
};

// Grows center into a target_size x target_size texture. Every generated cell
// draws its latent noise from derive_rng(seed, {row, col}). Cells within a
// wave are generated on up to `threads` threads.
Expansion expand(const Tensor& center, const DirectionModels& models, std::size_t target_size,
                 std::uint64_t seed, std::size_t threads = 1);

// Places tiles edge to edge. blend > 0 cross-fades each seam over `blend`
// pixels on either side with the mirrored pixels across it.
Tensor stitch(const TileGrid& grid, std::size_t blend = 0);

}  // namespace texweave
