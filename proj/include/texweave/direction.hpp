#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <utility>

namespace texweave {

// Position of a generated tile relative to the tile it was generated from.
enum class Direction { north, south, east, west };

inline constexpr std::array<Direction, 4> kDirections = {Direction::north, Direction::south,
                                                         Direction::east, Direction::west};

inline const char* direction_name(Direction d) {
  switch (d) {
    case Direction::north: return "north";
    case Direction::south: return "south";
    case Direction::east: return "east";
    case Direction::west: return "west";
  }
  return "unknown";
}

inline Direction parse_direction(const std::string& name) {
  for (Direction d : kDirections)
    if (name == direction_name(d)) return d;
  throw std::invalid_argument("unknown direction '" + name + "'");
}

inline std::size_t direction_index(Direction d) { return static_cast<std::size_t>(d); }

// Grid offset (row, col) of the neighbor in direction d; rows grow southward.
inline std::pair<int, int> direction_offset(Direction d) {
  switch (d) {
    case Direction::north: return {-1, 0};
    case Direction::south: return {1, 0};
    case Direction::east: return {0, 1};
    case Direction::west: return {0, -1};
  }
  return {0, 0};
}

}  // namespace texweave
