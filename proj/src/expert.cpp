#include "imitate/expert.hpp"

#include <cstdlib>
#include <functional>
#include <optional>
#include <queue>
#include <tuple>

#include "imitate/error.hpp"

namespace imitate {

namespace {

constexpr int kYawSteps = 360 / kCameraStep;

bool standable(TileKind t) { return t != TileKind::kWall && t != TileKind::kCave; }

// Action needed to enter `target` from an adjacent cell, if any.
std::optional<ActionId> entry_action(TileKind target) {
  switch (target) {
    case TileKind::kFree:
    case TileKind::kPond:
      return ActionId::kForward;
    case TileKind::kStep:
      return ActionId::kJumpForward;
    default:
      return std::nullopt;
  }
}

int move_cost(TileKind from) { return from == TileKind::kPond ? 3 : 1; }

}  // namespace

CostField::CostField(const World& world, TileKind target)
    : world_(&world),
      target_(target),
      cost_(static_cast<std::size_t>(world.width() * world.height() * kYawSteps),
            kInfinity) {
  using Item = std::pair<std::int32_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;

  for (int y = 0; y < world.height(); ++y) {
    for (int x = 0; x < world.width(); ++x) {
      if (!standable(world.at({x, y}))) continue;
      for (int k = 0; k < kYawSteps; ++k) {
        const int yaw = k * kCameraStep;
        if (at_goal({x, y}, yaw)) {
          cost_[index({x, y}, yaw)] = 0;
          open.emplace(0, index({x, y}, yaw));
        }
      }
    }
  }

  const auto relax = [&](Cell c, int yaw, std::int32_t cost) {
    auto& slot = cost_[index(c, yaw)];
    if (cost < slot) {
      slot = cost;
      open.emplace(cost, index(c, yaw));
    }
  };

  // Reverse search: expand predecessors of each settled pose.
  while (!open.empty()) {
    const auto [cost, idx] = open.top();
    open.pop();
    if (cost != cost_[idx]) continue;
    const int k = static_cast<int>(idx % kYawSteps);
    const int cell = static_cast<int>(idx / kYawSteps);
    const Cell c{cell % world.width(), cell / world.width()};
    const int yaw = k * kCameraStep;

    relax(c, (yaw + kCameraStep) % 360, cost + 1);        // reached by TURN_LEFT
    relax(c, (yaw + 360 - kCameraStep) % 360, cost + 1);  // reached by TURN_RIGHT

    if (entry_action(world.at(c))) {
      const Cell prev = c - heading_offset(yaw);
      const TileKind from = world.at(prev);
      if (world.in_bounds(prev) && standable(from)) {
        relax(prev, yaw, cost + move_cost(from));
      }
    }
  }
}

std::size_t CostField::index(Cell c, int yaw) const {
  return static_cast<std::size_t>((c.y * world_->width() + c.x) * kYawSteps +
                                  yaw / kCameraStep);
}

bool CostField::at_goal(Cell c, int yaw) const {
  return world_->at(c + heading_offset(yaw)) == target_;
}

std::int32_t CostField::cost(Cell c, int yaw) const {
  if (!world_->in_bounds(c)) return kInfinity;
  return cost_[index(c, yaw)];
}

ActionId CostField::next_action(Cell c, int yaw) const {
  if (cost(c, yaw) == kInfinity) {
    throw Error(ErrorCode::kUnreachable, "no path from (" + std::to_string(c.x) +
                                             "," + std::to_string(c.y) + ")");
  }
  if (at_goal(c, yaw)) return ActionId::kEndEpisode;

  const auto add = [](std::int32_t a, std::int32_t b) -> std::int64_t {
    return b == kInfinity ? std::int64_t{kInfinity} * 2 : std::int64_t{a} + b;
  };
  std::int64_t best = std::int64_t{kInfinity} * 2;
  ActionId choice = ActionId::kTurnRight;

  const Cell target = c + heading_offset(yaw);
  if (const auto entry = entry_action(world_->at(target))) {
    const auto v = add(move_cost(world_->at(c)), cost(target, yaw));
    if (v < best) {
      best = v;
      choice = *entry;
    }
  }
  const auto right = add(1, cost(c, (yaw + kCameraStep) % 360));
  if (right < best) {
    best = right;
    choice = ActionId::kTurnRight;
  }
  const auto left = add(1, cost(c, (yaw + 360 - kCameraStep) % 360));
  if (left < best) choice = ActionId::kTurnLeft;
  return choice;
}

std::vector<ActionId> plan_path(const World& world, Cell from, int yaw,
                                TileKind to_kind) {
  const CostField field(world, to_kind);
  std::vector<ActionId> plan;
  Cell c = from;
  int y = yaw;
  for (;;) {
    const ActionId a = field.next_action(c, y);
    if (a == ActionId::kEndEpisode) {
      if (to_kind == TileKind::kCave) plan.push_back(a);
      return plan;
    }
    // A move off a pond takes three presses before the cell changes.
    const int presses = is_move(a) ? move_cost(world.at(c)) : 1;
    for (int i = 0; i < presses; ++i) plan.push_back(a);
    if (a == ActionId::kTurnRight) y = (y + kCameraStep) % 360;
    else if (a == ActionId::kTurnLeft) y = (y + 360 - kCameraStep) % 360;
    else c = c + heading_offset(y);
  }
}

bool is_stuck(std::span<const TickEntry> recent, int ticks) {
  if (ticks <= 0 || recent.size() < static_cast<std::size_t>(ticks)) return false;
  for (std::size_t i = recent.size() - static_cast<std::size_t>(ticks); i < recent.size(); ++i) {
    if (!recent[i].intended_move || recent[i].moved) return false;
  }
  return true;
}

void Expert::take_control(const EnvState&) { has_control_ = true; }
void Expert::give_back_control() { has_control_ = false; }
void Expert::notify_step(const TickEntry&) {}

ScriptedExpert::ScriptedExpert(const World& world, ExpertConfig config)
    : world_(&world), config_(config), field_(world, TileKind::kCave) {}

bool ScriptedExpert::should_takeover(std::span<const TickEntry> recent,
                                     const EnvState& state) {
  return is_stuck(recent, config_.takeover_stuck_ticks) ||
         std::abs(state.pitch) >= config_.takeover_pitch_threshold;
}

void ScriptedExpert::take_control(const EnvState& state) {
  Expert::take_control(state);
  macro_.clear();
  first_decision_pending_ = true;
  plan_progress_ = 0;
}

void ScriptedExpert::give_back_control() {
  Expert::give_back_control();
  macro_.clear();
  first_decision_pending_ = false;
  plan_progress_ = 0;
}

ActionId ScriptedExpert::navigate(const EnvState& state) const {
  return field_.next_action(state.position, state.yaw);
}

ActionId ScriptedExpert::expert_action(const EnvState& state) {
  if (!has_control_) throw Error(ErrorCode::kNotInControl, "expert_action");
  if (state.pitch != 0) {
    return state.pitch > 0 ? ActionId::kPitchDown : ActionId::kPitchUp;
  }
  if (!macro_.empty()) {
    const ActionId a = macro_.front();
    macro_.pop_front();
    return a;
  }
  const TileKind ahead = world_->at(state.position + heading_offset(state.yaw));
  // The wall-recovery turn is the opening move of a control interval only;
  // later wall contact while cornering belongs to the plan.
  if (first_decision_pending_) {
    first_decision_pending_ = false;
    if (ahead == TileKind::kWall) {
      macro_.assign(kWallTurnMacroLength - 1, ActionId::kTurnRight);
      return ActionId::kTurnRight;
    }
  }
  if (ahead == TileKind::kStep) return ActionId::kJumpForward;
  return navigate(state);
}

// Progress counts consecutive controlled ticks with the trigger cleared: level
// camera, no macro in flight, and the last move attempt not blocked.
void ScriptedExpert::notify_step(const TickEntry& entry) {
  const bool blocked = entry.intended_move && !entry.moved;
  const bool cleared = entry.pitch == 0 && macro_.empty() && !blocked &&
                       !first_decision_pending_;
  plan_progress_ = cleared ? plan_progress_ + 1 : 0;
}

bool ScriptedExpert::should_release(const EnvState& state, int plan_progress) const {
  return state.pitch == 0 && macro_.empty() &&
         plan_progress >= config_.release_horizon;
}

bool ScriptedExpert::should_release(const EnvState& state) {
  if (!has_control_) return false;
  return should_release(state, plan_progress_);
}

}  // namespace imitate
