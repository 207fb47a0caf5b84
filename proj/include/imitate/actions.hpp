#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace imitate {

// Ordinals are part of the policy output layout and of every wire format.
enum class ActionId : std::uint8_t {
  kForward = 0,
  kBack = 1,
  kTurnLeft = 2,
  kTurnRight = 3,
  kJumpForward = 4,
  kPitchUp = 5,
  kPitchDown = 6,
  kNoop = 7,
  kEndEpisode = 8,
};

inline constexpr int kNumActions = 9;

inline constexpr std::array<ActionId, kNumActions> kAllActions = {
    ActionId::kForward,     ActionId::kBack,    ActionId::kTurnLeft,
    ActionId::kTurnRight,   ActionId::kJumpForward, ActionId::kPitchUp,
    ActionId::kPitchDown,   ActionId::kNoop,    ActionId::kEndEpisode,
};

constexpr int ordinal(ActionId a) { return static_cast<int>(a); }

constexpr std::optional<ActionId> action_from_ordinal(int i) {
  if (i < 0 || i >= kNumActions) return std::nullopt;
  return static_cast<ActionId>(i);
}

std::string_view action_name(ActionId a);

// Forward-type actions try to change the agent's cell.
constexpr bool is_move(ActionId a) {
  return a == ActionId::kForward || a == ActionId::kBack ||
         a == ActionId::kJumpForward;
}

constexpr bool is_turn(ActionId a) {
  return a == ActionId::kTurnLeft || a == ActionId::kTurnRight;
}

constexpr bool is_pitch(ActionId a) {
  return a == ActionId::kPitchUp || a == ActionId::kPitchDown;
}

}  // namespace imitate
