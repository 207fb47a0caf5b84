#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "imitate/episode.hpp"
#include "imitate/expert.hpp"
#include "imitate/maps.hpp"
#include "imitate/policy.hpp"

namespace imitate {

inline constexpr int kMinCollisionTicks = 10;  // 5 s
inline constexpr std::array<int, 9> kCollisionBucketsSeconds = {5, 10, 20, 30, 45,
                                                                60, 90, 120, 150};
using BucketCounts = std::array<int, kCollisionBucketsSeconds.size()>;

std::vector<int> default_blind_thresholds();  // 5, 10, ..., 90

struct CollisionEvent {
  int start_tick = 0;
  int duration_ticks = 0;
  double duration_seconds() const { return duration_ticks * kSecondsPerTick; }
  friend bool operator==(const CollisionEvent&, const CollisionEvent&) = default;
};

// Maximal runs of blocked move attempts lasting at least 10 ticks.
std::vector<CollisionEvent> detect_collisions(const EpisodeRecord& rec);

// Index of the bucket b with b <= seconds < next(b); nullopt below 5 s.
std::optional<std::size_t> bucket_index(double seconds);
BucketCounts severity_histogram(std::span<const CollisionEvent> events);

// Rising-edge crossings of |pitch| >= threshold, with pitch before tick 0 = 0.
std::vector<int> detect_blinded(const EpisodeRecord& rec, std::span<const int> thresholds);
std::vector<int> detect_blinded(const EpisodeRecord& rec);

int uptime(const EpisodeRecord& rec);

struct GameMetrics {
  std::string map_id;
  std::int64_t seed = 0;
  int length = 0;
  bool success = false;
  std::vector<CollisionEvent> collisions;
  BucketCounts histogram{};
  int stuck_ticks = 0;
  int uptime_ticks = 0;
  std::vector<int> blinded;

  double stuck_seconds() const { return stuck_ticks * kSecondsPerTick; }
};

GameMetrics game_metrics(const EpisodeRecord& rec);

// Something that picks an action each tick; policies and the scripted
// expert both evaluate through this.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual ActionId act(const EnvState& state, const Observation& obs) = 0;
  virtual void observe_step(const TickEntry&) {}
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(const World&)>;

ControllerFactory policy_controller(PolicyParams params);
ControllerFactory expert_controller(ExpertConfig config = {});
ControllerFactory constant_controller(ActionId action);

EpisodeRecord run_controller_episode(const ControllerFactory& make, const World& world,
                                     std::int64_t seed, int max_ticks = kDefaultMaxTicks);

struct ProbeInstance {
  std::string map_id;
  bool reached = false;
  int anchor_tick = -1;
  std::vector<ActionId> trace;      // agent actions from the anchor tick
  std::vector<ActionId> reference;  // expert actions from its anchor tick
  int matches = 0;
};

struct ProbeResult {
  ProbeKind kind = ProbeKind::kStep;
  double score = 0.0;
  int unreached = 0;
  std::vector<ProbeInstance> instances;
  std::vector<ActionId> modal_trace;
  std::vector<ActionId> reference_modal_trace;
};

inline constexpr int kProbeInstances = 20;
inline constexpr int kProbeWindow = 40;
inline constexpr std::uint64_t kProbeSeedBase = 5000;

ProbeResult probe_similarity(const ControllerFactory& agent, ProbeKind kind,
                             int instances = kProbeInstances, int window = kProbeWindow,
                             std::uint64_t seed_base = kProbeSeedBase);

// Largest |net rotation| in degrees over contiguous runs of turn actions.
int longest_turn_degrees(std::span<const ActionId> trace);

struct AgentReport {
  std::string name;
  std::vector<GameMetrics> games;
  BucketCounts total_histogram{};
  std::vector<int> total_blinded;
  double total_stuck_seconds = 0.0;
  double mean_uptime_ticks = 0.0;
  int long_collisions = 0;  // events of 60 s or more
  int games_with_collision = 0;
  int successes = 0;
  std::map<std::string, ProbeResult> probes;
};

struct MetricsReport {
  std::vector<AgentReport> agents;  // in input order

  const AgentReport& agent(const std::string& name) const;
};

// Agents must be evaluated on identical (map, seed) sequences.
MetricsReport build_report(
    const std::vector<std::pair<std::string, std::vector<EpisodeRecord>>>& records);

nlohmann::json report_to_json(const MetricsReport& report);

// Plot series: fig2_occurrences, fig3_blinded, fig4_uptime, fig5_traces.
void write_figure_csvs(const MetricsReport& report, const std::string& out_dir);

}  // namespace imitate
