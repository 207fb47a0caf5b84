#include "imitate/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "imitate/error.hpp"

namespace imitate {

using nlohmann::json;

std::vector<int> default_blind_thresholds() {
  std::vector<int> t;
  for (int d = 5; d <= 90; d += 5) t.push_back(d);
  return t;
}

std::vector<CollisionEvent> detect_collisions(const EpisodeRecord& rec) {
  std::vector<CollisionEvent> events;
  CollisionEvent run;
  const auto close = [&] {
    if (run.duration_ticks >= kMinCollisionTicks) events.push_back(run);
    run.duration_ticks = 0;
  };
  for (const auto& t : rec.ticks) {
    if (t.intended_move && !t.moved) {
      if (run.duration_ticks == 0) run.start_tick = t.tick;
      ++run.duration_ticks;
    } else {
      close();
    }
  }
  close();
  return events;
}

std::optional<std::size_t> bucket_index(double seconds) {
  std::optional<std::size_t> idx;
  for (std::size_t b = 0; b < kCollisionBucketsSeconds.size(); ++b) {
    if (seconds >= kCollisionBucketsSeconds[b]) idx = b;
  }
  return idx;
}

BucketCounts severity_histogram(std::span<const CollisionEvent> events) {
  BucketCounts h{};
  for (const auto& e : events) {
    if (const auto b = bucket_index(e.duration_seconds())) ++h[*b];
  }
  return h;
}

std::vector<int> detect_blinded(const EpisodeRecord& rec, std::span<const int> thresholds) {
  std::vector<int> counts(thresholds.size(), 0);
  int prev = 0;
  for (const auto& t : rec.ticks) {
    const int now = std::abs(t.pitch);
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (now >= thresholds[i] && std::abs(prev) < thresholds[i]) ++counts[i];
    }
    prev = now;
  }
  return counts;
}

std::vector<int> detect_blinded(const EpisodeRecord& rec) {
  const auto t = default_blind_thresholds();
  return detect_blinded(rec, t);
}

int uptime(const EpisodeRecord& rec) {
  int stuck = 0;
  for (const auto& e : detect_collisions(rec)) stuck += e.duration_ticks;
  return rec.length() - stuck;
}

GameMetrics game_metrics(const EpisodeRecord& rec) {
  GameMetrics g;
  g.map_id = rec.map_id;
  g.seed = rec.seed;
  g.length = rec.length();
  g.success = rec.success;
  g.collisions = detect_collisions(rec);
  g.histogram = severity_histogram(g.collisions);
  for (const auto& e : g.collisions) g.stuck_ticks += e.duration_ticks;
  g.uptime_ticks = g.length - g.stuck_ticks;
  g.blinded = detect_blinded(rec);
  return g;
}

namespace {

class PolicyController final : public Controller {
 public:
  explicit PolicyController(std::shared_ptr<const PolicyParams> p) : params_(std::move(p)) {}
  ActionId act(const EnvState&, const Observation& obs) override {
    return imitate::act(*params_, obs);
  }

 private:
  std::shared_ptr<const PolicyParams> params_;
};

// The scripted expert holding control for the whole episode.
class ExpertController final : public Controller {
 public:
  ExpertController(const World& world, ExpertConfig config) : expert_(world, config) {}
  ActionId act(const EnvState& state, const Observation&) override {
    if (!expert_.has_control()) expert_.take_control(state);
    return expert_.expert_action(state);
  }
  void observe_step(const TickEntry& entry) override { expert_.notify_step(entry); }

 private:
  ScriptedExpert expert_;
};

class ConstantController final : public Controller {
 public:
  explicit ConstantController(ActionId a) : action_(a) {}
  ActionId act(const EnvState&, const Observation&) override { return action_; }

 private:
  ActionId action_;
};

}  // namespace

ControllerFactory policy_controller(PolicyParams params) {
  auto shared = std::make_shared<const PolicyParams>(std::move(params));
  return [shared](const World&) { return std::make_unique<PolicyController>(shared); };
}

ControllerFactory expert_controller(ExpertConfig config) {
  return [config](const World& w) { return std::make_unique<ExpertController>(w, config); };
}

ControllerFactory constant_controller(ActionId action) {
  return [action](const World&) { return std::make_unique<ConstantController>(action); };
}

EpisodeRecord run_controller_episode(const ControllerFactory& make, const World& world,
                                     std::int64_t seed, int max_ticks) {
  auto controller = make(world);
  EpisodeRecord rec;
  rec.map_id = world.id();
  rec.seed = seed;
  auto [state, obs] = reset(world, seed, max_ticks);
  while (!state.terminated) {
    const ActionId a = controller->act(state, obs);
    auto [next, result] = step(world, state, a);
    rec.ticks.push_back(make_tick_entry(next, a, result, ControlOwner::kNovice));
    controller->observe_step(rec.ticks.back());
    state = next;
    obs = result.observation;
  }
  rec.success = state.success;
  return rec;
}

namespace {

struct AlignedTrace {
  bool reached = false;
  int anchor_tick = -1;
  std::vector<ActionId> actions;
};

// Actions from the first tick at which the agent stands on an anchor cell.
AlignedTrace aligned_trace(const EpisodeRecord& rec, const ProbeMap& probe, int window) {
  AlignedTrace out;
  const auto is_anchor = [&](Cell c) {
    return std::find(probe.anchors.begin(), probe.anchors.end(), c) != probe.anchors.end();
  };
  Cell position = probe.world.spawn();
  for (int k = 0; k < rec.length(); ++k) {
    if (!out.reached && is_anchor(position)) {
      out.reached = true;
      out.anchor_tick = k;
    }
    if (out.reached) {
      if (static_cast<int>(out.actions.size()) >= window) break;
      out.actions.push_back(rec.ticks[static_cast<std::size_t>(k)].action);
    }
    position = rec.ticks[static_cast<std::size_t>(k)].position;
  }
  return out;
}

std::vector<ActionId> modal_trace(const std::vector<std::vector<ActionId>>& traces, int window) {
  std::vector<ActionId> modal;
  for (int k = 0; k < window; ++k) {
    std::array<int, kNumActions> votes{};
    bool any = false;
    for (const auto& t : traces) {
      if (k < static_cast<int>(t.size())) {
        ++votes[static_cast<std::size_t>(ordinal(t[static_cast<std::size_t>(k)]))];
        any = true;
      }
    }
    if (!any) break;
    const auto best = std::max_element(votes.begin(), votes.end());
    modal.push_back(static_cast<ActionId>(best - votes.begin()));
  }
  return modal;
}

}  // namespace

ProbeResult probe_similarity(const ControllerFactory& agent, ProbeKind kind, int instances,
                             int window, std::uint64_t seed_base) {
  ProbeResult out;
  out.kind = kind;
  const auto reference_agent = expert_controller();
  std::vector<std::vector<ActionId>> agent_traces, reference_traces;
  long matches = 0, compared = 0;
  for (int i = 0; i < instances; ++i) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(i);
    const ProbeMap probe = make_probe_map(kind, seed);
    const auto ref = aligned_trace(
        run_controller_episode(reference_agent, probe.world, static_cast<std::int64_t>(seed)),
        probe, window);
    if (!ref.reached) {
      throw Error(ErrorCode::kProbeUnreached, "expert never reached the " +
                                                  std::string(probe_name(kind)) + " probe");
    }
    ProbeInstance inst;
    inst.map_id = probe.world.id();
    inst.reference = ref.actions;
    // An agent that never reaches the obstacle scores zero on this instance.
    const auto got = aligned_trace(
        run_controller_episode(agent, probe.world, static_cast<std::int64_t>(seed)), probe,
        window);
    inst.reached = got.reached;
    inst.anchor_tick = got.anchor_tick;
    inst.trace = got.actions;
    for (std::size_t k = 0; k < inst.reference.size(); ++k) {
      if (k < inst.trace.size() && inst.trace[k] == inst.reference[k]) ++inst.matches;
    }
    if (!inst.reached) ++out.unreached;
    matches += inst.matches;
    compared += static_cast<long>(inst.reference.size());
    agent_traces.push_back(inst.trace);
    reference_traces.push_back(inst.reference);
    out.instances.push_back(std::move(inst));
  }
  out.score = compared > 0 ? static_cast<double>(matches) / static_cast<double>(compared) : 0.0;
  out.modal_trace = modal_trace(agent_traces, window);
  out.reference_modal_trace = modal_trace(reference_traces, window);
  return out;
}

int longest_turn_degrees(std::span<const ActionId> trace) {
  int best = 0, net = 0;
  bool in_run = false;
  for (ActionId a : trace) {
    if (is_turn(a)) {
      if (!in_run) net = 0;
      in_run = true;
      net += a == ActionId::kTurnRight ? kCameraStep : -kCameraStep;
      best = std::max(best, std::abs(net));
    } else {
      in_run = false;
    }
  }
  return best;
}

const AgentReport& MetricsReport::agent(const std::string& name) const {
  for (const auto& a : agents) {
    if (a.name == name) return a;
  }
  throw Error(ErrorCode::kUsage, "no agent named " + name);
}

MetricsReport build_report(
    const std::vector<std::pair<std::string, std::vector<EpisodeRecord>>>& records) {
  MetricsReport report;
  const auto key = [](const std::vector<EpisodeRecord>& recs) {
    std::vector<std::pair<std::string, std::int64_t>> k;
    for (const auto& r : recs) k.emplace_back(r.map_id, r.seed);
    return k;
  };
  for (const auto& [name, recs] : records) {
    if (key(recs) != key(records.front().second)) {
      throw Error(ErrorCode::kMismatchedSeeds,
                  "agent " + name + " was evaluated on a different (map, seed) list");
    }
    AgentReport agent;
    agent.name = name;
    agent.total_blinded.assign(default_blind_thresholds().size(), 0);
    double uptime_sum = 0.0;
    for (const auto& r : recs) {
      auto g = game_metrics(r);
      for (std::size_t b = 0; b < g.histogram.size(); ++b) agent.total_histogram[b] += g.histogram[b];
      for (std::size_t t = 0; t < g.blinded.size(); ++t) agent.total_blinded[t] += g.blinded[t];
      agent.total_stuck_seconds += g.stuck_seconds();
      uptime_sum += g.uptime_ticks;
      for (const auto& e : g.collisions) agent.long_collisions += e.duration_seconds() >= 60.0;
      agent.games_with_collision += !g.collisions.empty();
      agent.successes += g.success;
      agent.games.push_back(std::move(g));
    }
    agent.mean_uptime_ticks = recs.empty() ? 0.0 : uptime_sum / static_cast<double>(recs.size());
    report.agents.push_back(std::move(agent));
  }
  return report;
}

namespace {

json actions_json(std::span<const ActionId> trace) {
  json arr = json::array();
  for (ActionId a : trace) arr.push_back(ordinal(a));
  return arr;
}

json histogram_json(const BucketCounts& h) {
  json j = json::object();
  for (std::size_t b = 0; b < h.size(); ++b) j[std::to_string(kCollisionBucketsSeconds[b])] = h[b];
  return j;
}

json blinded_json(const std::vector<int>& counts) {
  json j = json::object();
  const auto thresholds = default_blind_thresholds();
  for (std::size_t i = 0; i < counts.size(); ++i) j[std::to_string(thresholds[i])] = counts[i];
  return j;
}

}  // namespace

json report_to_json(const MetricsReport& report) {
  json out = json::object();
  for (const auto& a : report.agents) {
    json games = json::array();
    for (const auto& g : a.games) {
      games.push_back({{"map", g.map_id},
                       {"seed", g.seed},
                       {"ticks", g.length},
                       {"success", g.success},
                       {"collisions", g.collisions.size()},
                       {"collision_histogram", histogram_json(g.histogram)},
                       {"stuck_seconds", g.stuck_seconds()},
                       {"uptime_ticks", g.uptime_ticks},
                       {"blinded", blinded_json(g.blinded)}});
    }
    json probes = json::object();
    for (const auto& [name, p] : a.probes) {
      probes[name] = {{"score", p.score},
                      {"unreached", p.unreached},
                      {"modal_trace", actions_json(p.modal_trace)},
                      {"expert_trace", actions_json(p.reference_modal_trace)},
                      {"longest_turn_degrees", longest_turn_degrees(p.modal_trace)}};
    }
    out[a.name] = {{"games", games},
                   {"aggregate",
                    {{"collision_histogram", histogram_json(a.total_histogram)},
                     {"blinded", blinded_json(a.total_blinded)},
                     {"total_stuck_seconds", a.total_stuck_seconds},
                     {"mean_uptime_ticks", a.mean_uptime_ticks},
                     {"collisions_60s_or_more", a.long_collisions},
                     {"games_with_collision", a.games_with_collision},
                     {"successes", a.successes}}},
                   {"similarity", probes}};
  }
  return out;
}

void write_figure_csvs(const MetricsReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto open = [&](const char* name) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::trunc);
    if (!f) throw Error(ErrorCode::kIo, std::string("cannot write ") + name);
    return f;
  };
  auto fig2 = open("fig2_occurrences.csv");
  fig2 << "agent,duration_s,occurrences\n";
  for (const auto& a : report.agents)
    for (std::size_t b = 0; b < a.total_histogram.size(); ++b)
      fig2 << a.name << ',' << kCollisionBucketsSeconds[b] << ',' << a.total_histogram[b] << '\n';

  auto fig3 = open("fig3_blinded.csv");
  fig3 << "agent,threshold_deg,occurrences\n";
  const auto thresholds = default_blind_thresholds();
  for (const auto& a : report.agents)
    for (std::size_t t = 0; t < a.total_blinded.size(); ++t)
      fig3 << a.name << ',' << thresholds[t] << ',' << a.total_blinded[t] << '\n';

  auto fig4 = open("fig4_uptime.csv");
  fig4 << "agent,game,uptime_ticks,episode_ticks\n";
  for (const auto& a : report.agents)
    for (std::size_t g = 0; g < a.games.size(); ++g)
      fig4 << a.name << ',' << g << ',' << a.games[g].uptime_ticks << ',' << a.games[g].length << '\n';

  auto fig5 = open("fig5_traces.csv");
  fig5 << "agent,probe,tick,modal_action,expert_action\n";
  for (const auto& a : report.agents) {
    for (const auto& [name, p] : a.probes) {
      const std::size_t n = std::max(p.modal_trace.size(), p.reference_modal_trace.size());
      for (std::size_t k = 0; k < n; ++k) {
        fig5 << a.name << ',' << name << ',' << k << ',';
        if (k < p.modal_trace.size()) fig5 << ordinal(p.modal_trace[k]);
        fig5 << ',';
        if (k < p.reference_modal_trace.size()) fig5 << ordinal(p.reference_modal_trace[k]);
        fig5 << '\n';
      }
    }
  }
}

}  // namespace imitate
