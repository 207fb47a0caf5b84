#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imitate/actions.hpp"

namespace imitate {

enum class TileKind : std::uint8_t {
  kFree = 0,
  kWall = 1,
  kStep = 2,
  kPond = 3,
  kCave = 4,
};

// Observation channels: the five tile kinds plus UNKNOWN for masked cells.
inline constexpr int kChannels = 6;
inline constexpr std::uint8_t kUnknownChannel = 5;

inline constexpr int kViewSize = 7;
inline constexpr int kViewCells = kViewSize * kViewSize;
inline constexpr int kFeatureSize = kViewCells * kChannels + 1 + kNumActions;
static_assert(kFeatureSize == 304);

inline constexpr int kDefaultMaxTicks = 360;
inline constexpr double kSecondsPerTick = 0.5;
inline constexpr int kCameraStep = 5;
inline constexpr int kPitchLimit = 90;

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  Cell operator+(Cell o) const { return {x + o.x, y + o.y}; }
  Cell operator-(Cell o) const { return {x - o.x, y - o.y}; }
  Cell operator*(int k) const { return {x * k, y * k}; }
};

class World {
 public:
  World() = default;
  World(int width, int height, std::vector<TileKind> tiles, Cell spawn,
        std::string id = {});

  int width() const { return width_; }
  int height() const { return height_; }
  Cell spawn() const { return spawn_; }
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }
  // Out-of-map cells read as WALL.
  TileKind at(Cell c) const {
    return in_bounds(c) ? tiles_[static_cast<std::size_t>(c.y * width_ + c.x)]
                        : TileKind::kWall;
  }
  std::span<const TileKind> tiles() const { return tiles_; }
  std::size_t count(TileKind kind) const;

  // Inverse of load_map.
  std::string to_text() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<TileKind> tiles_;
  Cell spawn_;
  std::string id_;
};

World load_map(std::string_view map_text, std::string id = {});
World load_map_file(const std::string& path);

struct EnvState {
  Cell position;
  int yaw = 0;    // degrees in [0, 355], multiple of 5
  int pitch = 0;  // degrees in [-90, 90], multiple of 5
  int tick = 0;
  int pond_counter = 0;
  ActionId previous_action = ActionId::kNoop;
  std::int64_t rng_seed = 0;
  int max_ticks = kDefaultMaxTicks;
  bool terminated = false;
  bool success = false;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

// Egocentric view. Row 0 is the agent's own row, row r lies r cells ahead;
// column 3 is the facing line, higher columns lie to the agent's right.
struct Observation {
  std::array<std::uint8_t, kViewCells> cells{};
  int pitch = 0;
  ActionId prev_action = ActionId::kNoop;

  std::uint8_t cell(int row, int col) const {
    return cells[static_cast<std::size_t>(row * kViewSize + col)];
  }

  // Flattened one-hot layout: 294 raster entries (cell-major, channel-minor),
  // pitch/90, then the previous-action one-hot.
  void write_features(std::span<double> out) const;
  std::vector<double> features() const;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
  Observation observation;
  bool moved = false;
  bool intended_move = false;
  bool terminated = false;
  bool success = false;
};

// Heading index (0 = north, clockwise in 45 degree steps) for a yaw.
int heading_index(int yaw);
Cell heading_offset(int yaw);

int visible_rows(int pitch);

// Cave lies within three cells along the facing line with a clear sight line.
bool cave_in_sight(const World& world, Cell position, int yaw);

std::pair<EnvState, Observation> reset(const World& world, std::int64_t seed,
                                       int max_ticks = kDefaultMaxTicks);
std::pair<EnvState, StepResult> step(const World& world, const EnvState& state,
                                     ActionId action);
Observation observe(const EnvState& state, const World& world);

}  // namespace imitate
