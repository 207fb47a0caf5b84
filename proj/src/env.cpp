#include "imitate/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imitate/error.hpp"

namespace imitate {

namespace {

constexpr std::array<Cell, 8> kHeadings = {{
    {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1},
}};

using ViewTable = std::array<std::array<Cell, kViewCells>, 360 / kCameraStep>;

// The view turns with the exact yaw: cell (r, c) samples the tile nearest to
// r steps ahead and c - 3 steps to the right. Near-ties round up so the
// table does not depend on the last bit of sin/cos.
const ViewTable& view_offsets() {
  static const ViewTable table = [] {
    ViewTable t{};
    const auto nearest = [](double v) { return static_cast<int>(std::floor(v + 0.5 + 1e-9)); };
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double theta = static_cast<double>(k) * kCameraStep * std::numbers::pi / 180.0;
      const double s = std::sin(theta), c = std::cos(theta);
      for (int r = 0; r < kViewSize; ++r) {
        for (int col = 0; col < kViewSize; ++col) {
          const int l = col - kViewSize / 2;
          t[k][static_cast<std::size_t>(r * kViewSize + col)] = {nearest(r * s + l * c),
                                                                 nearest(-r * c + l * s)};
        }
      }
    }
    return t;
  }();
  return table;
}

char tile_char(TileKind kind) {
  switch (kind) {
    case TileKind::kFree: return '.';
    case TileKind::kWall: return '#';
    case TileKind::kStep: return 'S';
    case TileKind::kPond: return '~';
    case TileKind::kCave: return 'C';
  }
  return '?';
}

bool enterable(TileKind target, ActionId action) {
  switch (target) {
    case TileKind::kFree:
    case TileKind::kPond:
      return true;
    case TileKind::kStep:
      return action == ActionId::kJumpForward;
    case TileKind::kWall:
    case TileKind::kCave:
      return false;
  }
  return false;
}

}  // namespace

World::World(int width, int height, std::vector<TileKind> tiles, Cell spawn,
             std::string id)
    : width_(width),
      height_(height),
      tiles_(std::move(tiles)),
      spawn_(spawn),
      id_(std::move(id)) {
  if (width_ < 1 || height_ < 1 ||
      tiles_.size() != static_cast<std::size_t>(width_ * height_)) {
    throw Error(ErrorCode::kMalformedMap, "tile count does not match size");
  }
  if (!in_bounds(spawn_) || at(spawn_) != TileKind::kFree) {
    throw Error(ErrorCode::kMalformedMap, "spawn must be a FREE tile");
  }
  if (count(TileKind::kCave) == 0) {
    throw Error(ErrorCode::kMalformedMap, "map has no CAVE tile");
  }
  for (int x = 0; x < width_; ++x) {
    if (at({x, 0}) != TileKind::kWall || at({x, height_ - 1}) != TileKind::kWall)
      throw Error(ErrorCode::kMalformedMap, "border tiles must be WALL");
  }
  for (int y = 0; y < height_; ++y) {
    if (at({0, y}) != TileKind::kWall || at({width_ - 1, y}) != TileKind::kWall)
      throw Error(ErrorCode::kMalformedMap, "border tiles must be WALL");
  }
}

std::size_t World::count(TileKind kind) const {
  return static_cast<std::size_t>(std::count(tiles_.begin(), tiles_.end(), kind));
}

std::string World::to_text() const {
  std::string out;
  out.reserve(static_cast<std::size_t>((width_ + 1) * height_));
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      out += Cell{x, y} == spawn_ ? '@' : tile_char(at({x, y}));
    }
    out += '\n';
  }
  return out;
}

World load_map(std::string_view text, std::string id) {
  std::vector<std::string_view> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view row = text.substr(start, end - start);
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    rows.push_back(row);
    start = end + 1;
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw Error(ErrorCode::kMalformedMap, "empty map");

  const int width = static_cast<int>(rows.front().size());
  const int height = static_cast<int>(rows.size());
  std::vector<TileKind> tiles;
  tiles.reserve(static_cast<std::size_t>(width * height));
  int spawns = 0;
  Cell spawn;
  for (int y = 0; y < height; ++y) {
    if (static_cast<int>(rows[static_cast<std::size_t>(y)].size()) != width) {
      throw Error(ErrorCode::kMalformedMap,
                  "ragged row " + std::to_string(y));
    }
    for (int x = 0; x < width; ++x) {
      switch (rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]) {
        case '.': tiles.push_back(TileKind::kFree); break;
        case '#': tiles.push_back(TileKind::kWall); break;
        case 'S': tiles.push_back(TileKind::kStep); break;
        case '~': tiles.push_back(TileKind::kPond); break;
        case 'C': tiles.push_back(TileKind::kCave); break;
        case '@':
          tiles.push_back(TileKind::kFree);
          spawn = {x, y};
          ++spawns;
          break;
        default:
          throw Error(ErrorCode::kMalformedMap,
                      "unknown character at row " + std::to_string(y) +
                          " column " + std::to_string(x));
      }
    }
  }
  if (spawns != 1) {
    throw Error(ErrorCode::kMalformedMap,
                "expected exactly one '@', found " + std::to_string(spawns));
  }
  return World(width, height, std::move(tiles), spawn, std::move(id));
}

World load_map_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open map " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string id = path;
  if (auto slash = id.find_last_of('/'); slash != std::string::npos)
    id = id.substr(slash + 1);
  if (auto dot = id.rfind('.'); dot != std::string::npos) id.resize(dot);
  return load_map(buf.str(), id);
}

void Observation::write_features(std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < kViewCells; ++i) {
    out[static_cast<std::size_t>(i * kChannels + cells[static_cast<std::size_t>(i)])] = 1.0;
  }
  out[kViewCells * kChannels] = static_cast<double>(pitch) / kPitchLimit;
  out[static_cast<std::size_t>(kViewCells * kChannels + 1 + ordinal(prev_action))] = 1.0;
}

std::vector<double> Observation::features() const {
  std::vector<double> v(kFeatureSize);
  write_features(v);
  return v;
}

int heading_index(int yaw) { return ((yaw + 22) / 45) % 8; }

Cell heading_offset(int yaw) {
  return kHeadings[static_cast<std::size_t>(heading_index(yaw))];
}

int visible_rows(int pitch) {
  // round(7 * (1 - |p| / 90)) with halves rounded up, in integer arithmetic.
  const int remaining = kPitchLimit - std::abs(pitch);
  return (2 * kViewSize * remaining + kPitchLimit) / (2 * kPitchLimit);
}

bool cave_in_sight(const World& world, Cell position, int yaw) {
  const Cell dir = heading_offset(yaw);
  for (int k = 1; k <= 3; ++k) {
    const TileKind t = world.at(position + dir * k);
    if (t == TileKind::kCave) return true;
    if (t == TileKind::kWall) return false;
  }
  return false;
}

Observation observe(const EnvState& state, const World& world) {
  Observation obs;
  obs.pitch = state.pitch;
  obs.prev_action = state.previous_action;
  const auto& offsets = view_offsets()[static_cast<std::size_t>(state.yaw / kCameraStep)];
  const int rows = visible_rows(state.pitch);
  for (int i = 0; i < kViewCells; ++i) {
    std::uint8_t channel = kUnknownChannel;
    if (i / kViewSize < rows) {
      channel = static_cast<std::uint8_t>(world.at(state.position + offsets[static_cast<std::size_t>(i)]));
    }
    obs.cells[static_cast<std::size_t>(i)] = channel;
  }
  return obs;
}

std::pair<EnvState, Observation> reset(const World& world, std::int64_t seed,
                                       int max_ticks) {
  EnvState s;
  s.position = world.spawn();
  s.rng_seed = seed;
  s.max_ticks = max_ticks;
  s.terminated = max_ticks <= 0;
  return {s, observe(s, world)};
}

std::pair<EnvState, StepResult> step(const World& world, const EnvState& state,
                                     ActionId action) {
  if (state.terminated || state.tick >= state.max_ticks) {
    throw Error(ErrorCode::kSteppedAfterTermination,
                "episode already ended at tick " + std::to_string(state.tick));
  }
  EnvState next = state;
  StepResult result;

  if (is_move(action)) {
    result.intended_move = true;
    bool attempt = true;
    if (world.at(state.position) == TileKind::kPond) {
      next.pond_counter = state.pond_counter + 1;
      attempt = next.pond_counter >= 3;
      if (attempt) next.pond_counter = 0;
    } else {
      next.pond_counter = 0;
    }
    if (attempt) {
      const Cell dir = heading_offset(state.yaw);
      const Cell target =
          action == ActionId::kBack ? state.position - dir : state.position + dir;
      if (enterable(world.at(target), action)) {
        next.position = target;
        result.moved = true;
      }
    }
  } else {
    next.pond_counter = 0;
    switch (action) {
      case ActionId::kTurnLeft:
        next.yaw = (state.yaw + 360 - kCameraStep) % 360;
        break;
      case ActionId::kTurnRight:
        next.yaw = (state.yaw + kCameraStep) % 360;
        break;
      case ActionId::kPitchUp:
        next.pitch = std::min(state.pitch + kCameraStep, kPitchLimit);
        break;
      case ActionId::kPitchDown:
        next.pitch = std::max(state.pitch - kCameraStep, -kPitchLimit);
        break;
      case ActionId::kEndEpisode:
        next.terminated = true;
        next.success = std::abs(state.pitch) < 45 &&
                       cave_in_sight(world, state.position, state.yaw);
        break;
      default:
        break;
    }
  }

  next.previous_action = action;
  next.tick = state.tick + 1;
  if (next.tick >= next.max_ticks) next.terminated = true;

  result.terminated = next.terminated;
  result.success = next.success;
  result.observation = observe(next, world);
  return {next, result};
}

}  // namespace imitate
