#include "imitate/maps.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <string>

#include "imitate/error.hpp"
#include "imitate/expert.hpp"
#include "imitate/rng.hpp"

namespace imitate {

namespace {

class Grid {
 public:
  Grid(int w, int h) : w_(w), h_(h), tiles_(static_cast<std::size_t>(w * h), TileKind::kFree) {
    for (int x = 0; x < w; ++x) {
      set({x, 0}, TileKind::kWall);
      set({x, h - 1}, TileKind::kWall);
    }
    for (int y = 0; y < h; ++y) {
      set({0, y}, TileKind::kWall);
      set({w - 1, y}, TileKind::kWall);
    }
  }

  bool interior(Cell c) const { return c.x >= 1 && c.y >= 1 && c.x < w_ - 1 && c.y < h_ - 1; }
  TileKind at(Cell c) const { return tiles_[static_cast<std::size_t>(c.y * w_ + c.x)]; }
  void set(Cell c, TileKind t) { tiles_[static_cast<std::size_t>(c.y * w_ + c.x)] = t; }
  int width() const { return w_; }
  int height() const { return h_; }

  World build(Cell spawn, std::string id) && {
    return World(w_, h_, std::move(tiles_), spawn, std::move(id));
  }

 private:
  int w_;
  int h_;
  std::vector<TileKind> tiles_;
};

// Leaves the expert headroom under the 360-tick cap.
constexpr std::int32_t kMaxExpertCost = 300;

constexpr int kCaveCandidates = 16;

constexpr std::array<Cell, 4> kCardinal = {{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

void wall_segment(Grid& g, Rng& rng, Cell lo, Cell hi) {
  const bool horizontal = rng.bernoulli(0.5);
  const int len = rng.uniform_int(2, 4);
  Cell c{rng.uniform_int(lo.x + 2, hi.x - 2), rng.uniform_int(lo.y + 2, hi.y - 2)};
  const Cell d = horizontal ? Cell{1, 0} : Cell{0, 1};
  for (int k = 0; k < len; ++k, c = c + d) {
    if (c.x > hi.x - 2 || c.y > hi.y - 2) break;
    g.set(c, TileKind::kWall);
  }
}

bool open_around(const Grid& g, Cell c) {
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if (g.at(c + Cell{dx, dy}) != TileKind::kFree) return false;
  return true;
}

// Rooms on a 3x3 lattice. Doorways follow a random spanning tree plus one
// extra loop, so routes between the bottom and top bands wind through rooms.
struct Lattice {
  std::array<int, 4> cuts;  // wall lines, including the border
  int lo(int i) const { return cuts[static_cast<std::size_t>(i)] + 1; }
  int hi(int i) const { return cuts[static_cast<std::size_t>(i) + 1] - 1; }
};

void carve_door(Grid& g, Rng& rng, const Lattice& L, int a, int b) {
  const int ax = a % 3, ay = a / 3, bx = b % 3, by = b / 3;
  const int width = rng.uniform_int(2, 3);
  if (ay == by) {
    const int x = L.cuts[static_cast<std::size_t>(std::max(ax, bx))];
    const int y0 = rng.uniform_int(L.lo(ay), L.hi(ay) - width + 1);
    for (int k = 0; k < width; ++k) g.set({x, y0 + k}, TileKind::kFree);
  } else {
    const int y = L.cuts[static_cast<std::size_t>(std::max(ay, by))];
    const int x0 = rng.uniform_int(L.lo(ax), L.hi(ax) - width + 1);
    for (int k = 0; k < width; ++k) g.set({x0 + k, y}, TileKind::kFree);
  }
}

std::optional<World> try_generate(MapStyle style, std::uint64_t seed, int size) {
  Rng rng(seed);
  Grid g(size, size);
  const Lattice L{{0, size / 3 + rng.uniform_int(-1, 1), 2 * size / 3 + rng.uniform_int(-1, 1),
                   size - 1}};
  for (int i = 1; i <= 2; ++i) {
    for (int k = 1; k < size - 1; ++k) {
      g.set({L.cuts[static_cast<std::size_t>(i)], k}, TileKind::kWall);
      g.set({k, L.cuts[static_cast<std::size_t>(i)]}, TileKind::kWall);
    }
  }

  // Randomized DFS over rooms, then one extra door.
  std::array<bool, 9> seen{};
  std::vector<int> stack{rng.uniform_int(6, 8)};
  seen[static_cast<std::size_t>(stack.back())] = true;
  while (!stack.empty()) {
    const int r = stack.back();
    std::vector<int> next;
    if (r % 3 > 0) next.push_back(r - 1);
    if (r % 3 < 2) next.push_back(r + 1);
    if (r / 3 > 0) next.push_back(r - 3);
    if (r / 3 < 2) next.push_back(r + 3);
    std::erase_if(next, [&](int n) { return seen[static_cast<std::size_t>(n)]; });
    if (next.empty()) {
      stack.pop_back();
      continue;
    }
    const int n = next[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(next.size()) - 1))];
    carve_door(g, rng, L, r, n);
    seen[static_cast<std::size_t>(n)] = true;
    stack.push_back(n);
  }
  {
    const int r = rng.uniform_int(0, 8);
    const int n = r % 3 < 2 ? r + 1 : r - 1;
    carve_door(g, rng, L, r, n);
  }

  for (int room = 0; room < 9; ++room) {
    const Cell lo{L.lo(room % 3), L.lo(room / 3)}, hi{L.hi(room % 3), L.hi(room / 3)};
    const int clutter = rng.uniform_int(0, 2);
    for (int i = 0; i < clutter; ++i) wall_segment(g, rng, lo, hi);
  }

  if (style == MapStyle::kHazard) {
    // A STEP row across every middle-band room: no route north avoids a jump.
    const int row = rng.uniform_int(L.lo(1) + 2, L.hi(1) - 2);
    for (int x = 1; x < size - 1; ++x)
      if (g.at({x, row}) == TileKind::kFree) g.set({x, row}, TileKind::kStep);
    // Short STEP ledges scattered through the rooms.
    const int ledges = rng.uniform_int(4, 7);
    for (int i = 0; i < ledges; ++i) {
      const bool horizontal = rng.bernoulli(0.5);
      const int len = rng.uniform_int(2, 4);
      Cell c{rng.uniform_int(2, size - 3), rng.uniform_int(2, size - 3)};
      for (int k = 0; k < len && g.interior(c); ++k, c = c + (horizontal ? Cell{1, 0} : Cell{0, 1}))
        if (g.at(c) == TileKind::kFree) g.set(c, TileKind::kStep);
    }
    const int ponds = rng.uniform_int(1, 2);
    for (int i = 0; i < ponds; ++i) {
      const int w = rng.uniform_int(2, 3), h = rng.uniform_int(2, 3);
      const Cell o{rng.uniform_int(2, size - 2 - w), rng.uniform_int(2, size - 2 - h)};
      for (int dy = 0; dy < h; ++dy)
        for (int dx = 0; dx < w; ++dx)
          if (g.at(o + Cell{dx, dy}) == TileKind::kFree) g.set(o + Cell{dx, dy}, TileKind::kPond);
    }
  }

  Cell spawn;
  bool found = false;
  for (int attempt = 0; attempt < 200 && !found; ++attempt) {
    spawn = {rng.uniform_int(2, size - 3), rng.uniform_int(L.lo(2) + 1, L.hi(2) - 1)};
    found = open_around(g, spawn);
  }
  if (!found) return std::nullopt;

  // Among sampled cave sites, keep the one farthest from the spawn in expert
  // ticks that still fits under the cap.
  std::optional<Cell> best;
  std::int32_t best_cost = -1;
  for (int attempt = 0; attempt < kCaveCandidates; ++attempt) {
    const Cell cave{rng.uniform_int(1, size - 2), rng.uniform_int(L.lo(0), L.hi(0))};
    if (g.at(cave) != TileKind::kFree) continue;
    bool open = false;
    for (const Cell d : kCardinal) open |= g.at(cave + d) == TileKind::kFree;
    if (!open) continue;
    Grid trial = g;
    trial.set(cave, TileKind::kCave);
    const World world = std::move(trial).build(spawn, "");
    const auto cost = CostField(world, TileKind::kCave).cost(spawn, 0);
    if (cost != CostField::kInfinity && cost <= kMaxExpertCost && cost > best_cost) {
      best = cave;
      best_cost = cost;
    }
  }
  if (!best) return std::nullopt;
  g.set(*best, TileKind::kCave);
  return std::move(g).build(spawn, "");
}

}  // namespace

World generate_map(MapStyle style, std::uint64_t seed, int size) {
  if (size < 16) throw Error(ErrorCode::kUsage, "map size must be at least 16");
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    const std::uint64_t sub = attempt == 0 ? seed : mix_seed(seed, attempt);
    if (auto w = try_generate(style, sub, size)) {
      w->set_id((style == MapStyle::kHazard ? "hazard-" : "train-") + std::to_string(seed));
      return std::move(*w);
    }
  }
  throw Error(ErrorCode::kUnreachable, "could not generate a solvable map");
}

std::string_view probe_name(ProbeKind kind) {
  return kind == ProbeKind::kStep ? "step" : "wall";
}

ProbeMap make_probe_map(ProbeKind kind, std::uint64_t seed) {
  constexpr int kSize = 15;
  Rng rng(mix_seed(seed, kind == ProbeKind::kStep ? 1 : 2));
  Grid g(kSize, kSize);
  ProbeMap probe;
  Cell spawn;
  if (kind == ProbeKind::kStep) {
    spawn = {rng.uniform_int(4, 10), rng.uniform_int(10, 12)};
    const int step_row = spawn.y - 3;
    for (int x = 1; x < kSize - 1; ++x) {
      g.set({x, step_row}, TileKind::kStep);
      probe.anchors.push_back({x, step_row + 1});
    }
    const Cell cave{std::clamp(spawn.x + rng.uniform_int(-3, 3), 1, kSize - 2),
                    rng.uniform_int(1, step_row - 3)};
    g.set(cave, TileKind::kCave);
  } else {
    const int room_top = 8;
    const int len = rng.uniform_int(3, 6);
    spawn = {rng.uniform_int(3, 11), room_top - len};
    for (int y = 1; y < room_top; ++y)
      for (int x = 1; x < kSize - 1; ++x) g.set({x, y}, TileKind::kWall);
    for (int y = spawn.y; y < room_top; ++y) g.set({spawn.x, y}, TileKind::kFree);
    g.set({rng.uniform_int(1, kSize - 2), kSize - 2}, TileKind::kCave);
    probe.anchors.push_back(spawn);
  }
  probe.world = std::move(g).build(
      spawn, std::string("probe-") + std::string(probe_name(kind)) + "-" + std::to_string(seed));
  return probe;
}

}  // namespace imitate
