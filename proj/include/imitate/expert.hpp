#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <vector>

#include "imitate/actions.hpp"
#include "imitate/env.hpp"
#include "imitate/episode.hpp"

namespace imitate {

// Cost-to-go over (cell, yaw) poses for reaching a pose that faces an
// adjacent tile of the target kind. Moves off a POND tile cost three ticks.
class CostField {
 public:
  static constexpr std::int32_t kInfinity = INT32_MAX;

  CostField(const World& world, TileKind target);

  std::int32_t cost(Cell c, int yaw) const;
  bool at_goal(Cell c, int yaw) const;
  TileKind target() const { return target_; }

  // Greedy descent step. Ties prefer moving, then TURN_RIGHT, then TURN_LEFT.
  ActionId next_action(Cell c, int yaw) const;

 private:
  std::size_t index(Cell c, int yaw) const;

  const World* world_;
  TileKind target_;
  std::vector<std::int32_t> cost_;
};

std::vector<ActionId> plan_path(const World& world, Cell from, int yaw,
                                TileKind to_kind);

struct ExpertConfig {
  int takeover_stuck_ticks = 10;
  int takeover_pitch_threshold = 30;
  int release_horizon = 20;
};

inline constexpr int kWallTurnMacroLength = 36;

// The interface trainers drive. Scripted and human-backed experts both fit it.
class Expert {
 public:
  virtual ~Expert() = default;

  virtual bool should_takeover(std::span<const TickEntry> recent,
                               const EnvState& state) = 0;
  virtual ActionId expert_action(const EnvState& state) = 0;
  virtual bool should_release(const EnvState& state) = 0;

  // Called with every tick applied while the expert holds control.
  virtual void notify_step(const TickEntry& entry);

  // Control transitions; trainers call these around every takeover.
  virtual void take_control(const EnvState& state);
  virtual void give_back_control();
  bool has_control() const { return has_control_; }

 protected:
  bool has_control_ = false;
};

class ScriptedExpert : public Expert {
 public:
  explicit ScriptedExpert(const World& world, ExpertConfig config = {});

  bool should_takeover(std::span<const TickEntry> recent,
                       const EnvState& state) override;
  ActionId expert_action(const EnvState& state) override;
  bool should_release(const EnvState& state) override;
  bool should_release(const EnvState& state, int plan_progress) const;
  void notify_step(const TickEntry& entry) override;

  void take_control(const EnvState& state) override;
  void give_back_control() override;

  // Plan-following action for demonstrations: no takeover bookkeeping.
  ActionId navigate(const EnvState& state) const;

  const ExpertConfig& config() const { return config_; }
  int plan_progress() const { return plan_progress_; }
  const World& world() const { return *world_; }

 private:
  const World* world_;
  ExpertConfig config_;
  CostField field_;
  std::deque<ActionId> macro_;
  bool first_decision_pending_ = false;
  int plan_progress_ = 0;
};

// Stuck rule shared by the scripted expert and the metrics: the last `ticks`
// entries all attempted a move that did not happen.
bool is_stuck(std::span<const TickEntry> recent, int ticks);

}  // namespace imitate
