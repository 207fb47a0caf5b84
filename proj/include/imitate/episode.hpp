#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "imitate/actions.hpp"
#include "imitate/env.hpp"

namespace imitate {

enum class ControlOwner : std::uint8_t { kNovice, kExpert };

struct TickEntry {
  int tick = 0;
  ActionId action = ActionId::kNoop;
  bool moved = false;
  bool intended_move = false;
  int pitch = 0;  // pitch after the action
  Cell position;  // position after the action
  ControlOwner owner = ControlOwner::kNovice;

  friend bool operator==(const TickEntry&, const TickEntry&) = default;
};

struct EpisodeRecord {
  std::string map_id;
  std::int64_t seed = 0;
  bool success = false;
  std::vector<TickEntry> ticks;

  int length() const { return static_cast<int>(ticks.size()); }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

// Builds the tick entry for one applied step.
TickEntry make_tick_entry(const EnvState& after, ActionId action,
                          const StepResult& result, ControlOwner owner);

// JSON-lines log: header {"map":..,"seed":..}, then one object per tick.
// The terminal success flag rides on the header as "success".
void write_episode_log(std::ostream& out, const EpisodeRecord& rec);
EpisodeRecord read_episode_log(std::istream& in);
void save_episode_log(const EpisodeRecord& rec, const std::filesystem::path& path);
EpisodeRecord load_episode_log(const std::filesystem::path& path);

}  // namespace imitate
