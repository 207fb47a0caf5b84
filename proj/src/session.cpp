#include "imitate/session.hpp"

#include <cstdio>

#include "imitate/error.hpp"

namespace imitate {

using nlohmann::json;

std::optional<SessionMode> parse_session_mode(std::string_view name) {
  if (name == "hdd") return SessionMode::kHdd;
  if (name == "hg-dagger") return SessionMode::kHgDagger;
  if (name == "observe") return SessionMode::kObserve;
  return std::nullopt;
}

std::string_view session_mode_name(SessionMode mode) {
  switch (mode) {
    case SessionMode::kHdd:
      return "hdd";
    case SessionMode::kHgDagger:
      return "hg-dagger";
    case SessionMode::kObserve:
      return "observe";
  }
  return "?";
}

SessionCore::SessionCore(PolicyParams policy, World world, SessionConfig config)
    : policy_(std::move(policy)), world_(std::move(world)), config_(std::move(config)) {
  if (!config_.episode_log_dir.empty()) std::filesystem::create_directories(config_.episode_log_dir);
  begin_episode();
}

void SessionCore::begin_episode() {
  const std::int64_t seed = config_.first_seed + episode_;
  std::tie(state_, obs_) = reset(world_, seed, config_.max_ticks);
  current_ = EpisodeRecord{world_.id(), seed, false, {}};
  owner_ = ControlOwner::kNovice;
  buffer_ = Trajectory{};
}

void SessionCore::receive(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  if (line.empty()) return;
  Inbound in;
  try {
    const json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "takeover") {
      in.kind = Inbound::Kind::kTakeover;
    } else if (type == "release") {
      in.kind = Inbound::Kind::kRelease;
    } else if (type == "action") {
      const auto a = action_from_ordinal(j.at("id").get<int>());
      if (a) {
        in.kind = Inbound::Kind::kAction;
        in.action = *a;
      } else {
        in.error = "action id out of range";
      }
    } else {
      in.error = "unknown message type '" + type + "'";
    }
  } catch (const json::exception& e) {
    in.error = std::string("malformed message: ") + e.what();
  }
  inbox_.push_back(std::move(in));
}

void SessionCore::client_connected() {
  connected_ = true;
  send_map_ = true;
  disconnect_requested_ = false;
  inbox_.clear();
}

void SessionCore::client_disconnected() {
  connected_ = false;
  Inbound in;
  in.kind = Inbound::Kind::kDisconnect;
  inbox_.push_back(std::move(in));
}

bool SessionCore::finished() const {
  return config_.max_episodes > 0 && episode_ >= config_.max_episodes;
}

bool SessionCore::take_disconnect_request() {
  return std::exchange(disconnect_requested_, false);
}

void SessionCore::violation(std::vector<json>& out, const std::string& msg) {
  out.push_back({{"type", "error"}, {"msg", std::string(error_name(ErrorCode::kClientProtocolViolation)) + ": " + msg}});
  inbox_.clear();
  disconnect_requested_ = true;
}

void SessionCore::finish_release(std::vector<json>& out) {
  owner_ = ControlOwner::kNovice;
  if (buffer_.empty()) return;
  if (config_.mode == SessionMode::kHdd) {
    auto [updated, result] = correction_step(policy_, std::move(buffer_), config_.finetune);
    policy_ = std::move(updated);
    corrections_.push_back(result);
    out.push_back({{"type", "train_result"},
                   {"n", result.sample_count},
                   {"before", result.loss_before},
                   {"after", result.loss_after}});
  } else {
    aggregated_.append(buffer_);
  }
  buffer_ = Trajectory{};
}

json SessionCore::state_message(ActionId last, bool with_map) const {
  json patch = json::array();
  for (int r = 0; r < kViewSize; ++r) {
    json row = json::array();
    for (int c = 0; c < kViewSize; ++c) row.push_back(obs_.cell(r, c));
    patch.push_back(std::move(row));
  }
  json msg = {{"type", "state"},
              {"t", state_.tick},
              {"x", state_.position.x},
              {"y", state_.position.y},
              {"yaw", state_.yaw},
              {"pitch", state_.pitch},
              {"ctl", owner_ == ControlOwner::kExpert ? "E" : "N"},
              {"last", ordinal(last)},
              {"patch", std::move(patch)}};
  if (with_map) {
    json rows = json::array();
    for (int y = 0; y < world_.height(); ++y) {
      json row = json::array();
      for (int x = 0; x < world_.width(); ++x) row.push_back(static_cast<int>(world_.at({x, y})));
      rows.push_back(std::move(row));
    }
    msg["map"] = std::move(rows);
  }
  if (config_.send_probs) msg["probs"] = forward(policy_, obs_);
  return msg;
}

std::vector<json> SessionCore::tick() {
  std::vector<json> out;
  if (finished()) return out;

  bool transitioned = false;
  std::optional<ActionId> client_action;
  while (!inbox_.empty()) {
    const Inbound in = inbox_.front();
    const bool is_transition = in.kind == Inbound::Kind::kTakeover ||
                               in.kind == Inbound::Kind::kRelease ||
                               (in.kind == Inbound::Kind::kDisconnect && client_in_control());
    if (is_transition && transitioned) break;  // one control change per tick
    // An action queued ahead of a release still gets its tick.
    if (is_transition && client_action) break;
    inbox_.pop_front();
    switch (in.kind) {
      case Inbound::Kind::kInvalid:
        violation(out, in.error);
        break;
      case Inbound::Kind::kTakeover:
        if (config_.mode == SessionMode::kObserve) {
          violation(out, "observe mode accepts no control messages");
        } else if (client_in_control()) {
          violation(out, "takeover while already in control");
        } else {
          owner_ = ControlOwner::kExpert;
          buffer_ = Trajectory{{}, Source::kCorrection, episode_};
          transitioned = true;
        }
        break;
      case Inbound::Kind::kRelease:
        if (config_.mode == SessionMode::kObserve) {
          violation(out, "observe mode accepts no control messages");
        } else if (!client_in_control()) {
          violation(out, "release without takeover");
        } else {
          finish_release(out);
          transitioned = true;
        }
        break;
      case Inbound::Kind::kAction:
        if (!client_in_control()) {
          violation(out, "action without takeover");
        } else {
          client_action = in.action;
        }
        break;
      case Inbound::Kind::kDisconnect:
        if (client_in_control()) {
          finish_release(out);
          transitioned = true;
        }
        client_action.reset();
        break;
    }
    if (disconnect_requested_) break;
  }

  ActionId action = ActionId::kNoop;
  if (client_in_control()) {
    if (client_action) {
      action = *client_action;
      buffer_.transitions.push_back({obs_, action});
    }
  } else {
    action = act(policy_, obs_);
  }
  const ControlOwner acting = owner_;
  auto [next, result] = step(world_, state_, action);
  current_.ticks.push_back(make_tick_entry(next, action, result, acting));
  state_ = next;
  obs_ = result.observation;
  out.push_back(state_message(action, send_map_ && connected_));
  if (connected_) send_map_ = false;

  if (result.terminated) {
    if (client_in_control()) finish_release(out);
    current_.success = result.success;
    if (!config_.episode_log_dir.empty()) {
      char name[48];
      std::snprintf(name, sizeof name, "session_%04d.jsonl", episode_);
      save_episode_log(current_, config_.episode_log_dir / name);
    }
    out.push_back({{"type", "episode_end"}, {"success", result.success}});
    records_.push_back(std::move(current_));
    ++episode_;
    if (!finished()) begin_episode();
  }
  return out;
}

}  // namespace imitate
