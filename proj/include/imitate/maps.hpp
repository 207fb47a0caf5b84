#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "imitate/env.hpp"

namespace imitate {

enum class MapStyle {
  kTraining,  // walls and dead-end pockets only
  kHazard,    // adds STEP barriers, scattered STEP blocks and ponds
};

inline constexpr int kDefaultMapSize = 32;

// Seeded procedural map. The spawn always faces its cave side and the
// cave is reachable by the scripted expert.
World generate_map(MapStyle style, std::uint64_t seed, int size = kDefaultMapSize);

enum class ProbeKind { kStep, kWall };

std::string_view probe_name(ProbeKind kind);

struct ProbeMap {
  World world;
  // Cells whose occupation marks the start of the problem.
  std::vector<Cell> anchors;
};

// Step probe: spawn three cells south of a STEP row spanning the room.
// Wall probe: spawn at the closed end of a dead-end corridor, facing the end.
ProbeMap make_probe_map(ProbeKind kind, std::uint64_t seed);

}  // namespace imitate
