#pragma once

#include <stdexcept>

namespace hamh::sim {

// Compass directions in clockwise order. An approach is named by the side of
// the intersection it enters from (traffic arriving "from N" is heading
// south).
enum class Dir : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

// Turning movements. Right turns share the outer through lane and are
// permitted in every phase.
enum class Move : int { kLeft = 0, kThrough = 1, kRight = 2 };

constexpr Dir opposite(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 2) % 4); }
constexpr Dir clockwise(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 1) % 4); }
constexpr Dir counter_clockwise(Dir d) {
  return static_cast<Dir>((static_cast<int>(d) + 3) % 4);
}

constexpr char dir_letter(Dir d) {
  switch (d) {
    case Dir::kNorth: return 'N';
    case Dir::kEast: return 'E';
    case Dir::kSouth: return 'S';
    case Dir::kWest: return 'W';
  }
  return '?';
}

inline Dir dir_from_letter(char c) {
  switch (c) {
    case 'N': return Dir::kNorth;
    case 'E': return Dir::kEast;
    case 'S': return Dir::kSouth;
    case 'W': return Dir::kWest;
    default: throw std::invalid_argument(std::string("unknown direction letter '") + c + "'");
  }
}

// Side of the intersection a vehicle leaves through after performing `turn`
// when arriving from `from`.
constexpr Dir exit_side(Dir from, Move turn) {
  const Dir heading = opposite(from);
  switch (turn) {
    case Move::kThrough: return heading;
    case Move::kLeft: return counter_clockwise(heading);
    case Move::kRight: return clockwise(heading);
  }
  return heading;
}

}  // namespace hamh::sim
