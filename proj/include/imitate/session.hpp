#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "imitate/dataset.hpp"
#include "imitate/episode.hpp"
#include "imitate/policy.hpp"
#include "imitate/trainers.hpp"

namespace imitate {

enum class SessionMode { kHdd, kHgDagger, kObserve };

std::optional<SessionMode> parse_session_mode(std::string_view name);
std::string_view session_mode_name(SessionMode mode);

struct SessionConfig {
  SessionMode mode = SessionMode::kHdd;
  double tick_rate = 10.0;  // wall-clock ticks per second; 0 = unthrottled
  std::int64_t first_seed = 0;
  int max_ticks = kDefaultMaxTicks;
  int max_episodes = 0;  // 0 = run until shutdown
  FinetuneConfig finetune;
  bool send_probs = false;
  std::filesystem::path episode_log_dir;  // empty = keep records in memory only
};

// The episode loop without any transport. Inbound messages queue up and are
// consumed at the next tick boundary; every call to tick() advances exactly
// one environment step and returns the outbound messages for that tick.
//
// While the client holds control, ticks with no fresh action message apply
// NOOP and record nothing.
class SessionCore {
 public:
  SessionCore(PolicyParams policy, World world, SessionConfig config);

  // Raw NDJSON line from the client. Malformed input is a protocol violation
  // and is reported on the next tick.
  void receive(std::string_view line);
  void client_connected();
  // A disconnect while holding control counts as a release.
  void client_disconnected();

  std::vector<nlohmann::json> tick();

  bool finished() const;
  bool client_in_control() const { return owner_ == ControlOwner::kExpert; }
  // Set after a violation; the transport should drop the client.
  bool take_disconnect_request();

  const PolicyParams& policy() const { return policy_; }
  const EnvState& state() const { return state_; }
  int episode() const { return episode_; }
  std::size_t buffered() const { return buffer_.size(); }
  const std::vector<EpisodeRecord>& records() const { return records_; }
  const std::vector<CorrectionResult>& corrections() const { return corrections_; }
  // Expert labels gathered in HG-DAgger mode, for offline aggregation.
  const Dataset& aggregated() const { return aggregated_; }

 private:
  struct Inbound {
    enum class Kind { kTakeover, kRelease, kAction, kDisconnect, kInvalid };
    Kind kind = Kind::kInvalid;
    ActionId action = ActionId::kNoop;
    std::string error;
  };

  void begin_episode();
  void finish_release(std::vector<nlohmann::json>& out);
  void violation(std::vector<nlohmann::json>& out, const std::string& msg);
  nlohmann::json state_message(ActionId last, bool with_map) const;

  PolicyParams policy_;
  World world_;
  SessionConfig config_;
  EnvState state_;
  Observation obs_;
  EpisodeRecord current_;
  ControlOwner owner_ = ControlOwner::kNovice;
  std::deque<Inbound> inbox_;
  Trajectory buffer_;
  Dataset aggregated_;
  std::vector<EpisodeRecord> records_;
  std::vector<CorrectionResult> corrections_;
  int episode_ = 0;
  bool send_map_ = true;
  bool connected_ = false;
  bool disconnect_requested_ = false;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  // Invoked once after the listener is bound, with the actual port.
  std::function<void(unsigned short)> on_listening;
};

// Runs the WebSocket endpoint until the session finishes or SIGINT/SIGTERM.
// One client at a time; each WebSocket text frame carries NDJSON lines.
void serve(SessionCore& core, const SessionConfig& config, const ServeOptions& options);

}  // namespace imitate
