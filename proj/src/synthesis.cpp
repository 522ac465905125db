#include "texweave/synthesis.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <thread>

#include "texweave/errors.hpp"
#include "texweave/image.hpp"

namespace texweave {

const DrawModel& DirectionModels::get(Direction d) const {
  const DrawModel* m = models[direction_index(d)];
  if (!m) throw std::invalid_argument(std::string("no model for direction ") + direction_name(d));
  return *m;
}

std::vector<GenerationStep> expansion_schedule(std::size_t cells_per_side) {
  if (cells_per_side % 2 == 0) throw std::invalid_argument("grid side must be odd");
  const int radius = static_cast<int>(cells_per_side / 2);
  std::set<std::pair<int, int>> filled = {{0, 0}};
  std::vector<GenerationStep> steps;
  std::size_t wave = 0;
  // Neighbor probes in N, S, E, W order; the generated cell lies in the
  // opposite direction from that neighbor.
  const std::array<std::pair<std::pair<int, int>, Direction>, 4> probes = {{
      {{-1, 0}, Direction::south},
      {{1, 0}, Direction::north},
      {{0, 1}, Direction::west},
      {{0, -1}, Direction::east},
  }};
  for (int ring = 1; ring <= radius; ++ring) {
    while (true) {
      std::vector<GenerationStep> current;
      for (int r = -ring; r <= ring; ++r)
        for (int c = -ring; c <= ring; ++c) {
          if (std::max(std::abs(r), std::abs(c)) != ring || filled.count({r, c})) continue;
          for (const auto& [offset, dir] : probes) {
            std::pair<int, int> src{r + offset.first, c + offset.second};
            if (filled.count(src)) {
              current.push_back({r, c, src.first, src.second, dir, static_cast<std::size_t>(ring), wave});
              break;
            }
          }
        }
      if (current.empty()) break;
      for (const auto& s : current) filled.insert({s.row, s.col});
      steps.insert(steps.end(), current.begin(), current.end());
      ++wave;
    }
  }
  return steps;
}

Expansion expand(const Tensor& center, const DirectionModels& models, std::size_t target_size,
                 std::uint64_t seed, std::size_t threads) {
  if (center.rank() != 3 || center.dim(0) != center.dim(1))
    throw ShapeError("center tile must be square H x W x C, got " + shape_string(center.shape()));
  const std::size_t tile = center.dim(0);
  if (target_size == 0 || target_size % tile != 0 || (target_size / tile) % 2 == 0)
    throw std::invalid_argument("target size " + std::to_string(target_size) +
                                " is not an odd multiple of the tile size " + std::to_string(tile));

  Expansion out;
  out.grid.tile_size = tile;
  out.grid.cells[{0, 0}] = center;
  out.steps = expansion_schedule(target_size / tile);

  for (const auto& s : out.steps) {
    const DrawModel& m = models.get(s.direction);
    if (m.config.tile_shape() != center.shape())
      throw ShapeError(std::string("model for ") + direction_name(s.direction) + " expects tiles " +
                       shape_string(m.config.tile_shape()) + ", center is " +
                       shape_string(center.shape()));
  }

  threads = std::max<std::size_t>(1, threads);
  std::size_t begin = 0;
  while (begin < out.steps.size()) {
    std::size_t end = begin;
    while (end < out.steps.size() && out.steps[end].wave == out.steps[begin].wave) ++end;
    std::vector<Tensor> results(end - begin);
    auto work = [&](std::size_t first, std::size_t stride) {
      for (std::size_t i = first; i < results.size(); i += stride) {
        const GenerationStep& s = out.steps[begin + i];
        Rng rng = derive_rng(seed, {s.row, s.col});
        results[i] = generate(models.get(s.direction), out.grid.cells.at({s.src_row, s.src_col}), rng);
      }
    };
    std::size_t n_threads = std::min(threads, results.size());
    if (n_threads <= 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
      for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
      const GenerationStep& s = out.steps[begin + i];
      out.grid.cells.emplace(std::pair{s.row, s.col}, std::move(results[i]));
    }
    begin = end;
  }
  out.image = stitch(out.grid);
  return out;
}

namespace {

void blend_seams(Tensor& img, std::size_t tile, std::size_t blend, bool vertical) {
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const std::size_t extent = vertical ? W : H;
  const std::size_t k = std::min(blend, tile);
  Tensor src = img;
  for (std::size_t seam = tile; seam < extent; seam += tile) {
    for (std::size_t d = 0; d < k; ++d) {
      double alpha = 0.5 * (1.0 - (static_cast<double>(d) + 0.5) / static_cast<double>(k));
      std::size_t before = seam - 1 - d, after = seam + d;
      for (std::size_t a = 0; a < (vertical ? H : W); ++a)
        for (std::size_t c = 0; c < C; ++c) {
          double& lo = vertical ? img.at(a, before, c) : img.at(before, a, c);
          double& hi = vertical ? img.at(a, after, c) : img.at(after, a, c);
          double slo = vertical ? src.at(a, before, c) : src.at(before, a, c);
          double shi = vertical ? src.at(a, after, c) : src.at(after, a, c);
          lo = (1.0 - alpha) * slo + alpha * shi;
          hi = (1.0 - alpha) * shi + alpha * slo;
        }
    }
  }
}

}  // namespace

Tensor stitch(const TileGrid& grid, std::size_t blend) {
  if (grid.cells.empty()) throw ShapeError("stitch of an empty grid");
  int rmin = grid.cells.begin()->first.first, rmax = rmin;
  int cmin = grid.cells.begin()->first.second, cmax = cmin;
  for (const auto& [pos, t] : grid.cells) {
    rmin = std::min(rmin, pos.first);
    rmax = std::max(rmax, pos.first);
    cmin = std::min(cmin, pos.second);
    cmax = std::max(cmax, pos.second);
  }
  const std::size_t rows = static_cast<std::size_t>(rmax - rmin + 1);
  const std::size_t cols = static_cast<std::size_t>(cmax - cmin + 1);
  if (grid.cells.size() != rows * cols) throw ShapeError("stitch requires a full rectangle of tiles");
  const std::size_t tile = grid.tile_size;
  const Tensor& first = grid.cells.begin()->second;
  if (first.rank() != 3 || first.dim(0) != tile || first.dim(1) != tile)
    throw ShapeError("grid tiles must be tile_size x tile_size x C");
  Tensor out({rows * tile, cols * tile, first.dim(2)});
  for (const auto& [pos, t] : grid.cells) {
    if (t.shape() != first.shape()) throw ShapeError("grid tiles differ in shape");
    paste(out, t, static_cast<std::size_t>(pos.first - rmin) * tile,
          static_cast<std::size_t>(pos.second - cmin) * tile);
  }
  if (blend > 0) {
    blend_seams(out, tile, blend, true);
    blend_seams(out, tile, blend, false);
  }
  return out;
}

}  // namespace texweave
