#include "imitate/trainers.hpp"


#include <algorithm>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "imitate/error.hpp"
#include "imitate/rng.hpp"

namespace imitate {

using nlohmann::json;

void TrainingLog::epoch(int epoch, double loss, const char* phase) {
  if (!out_) return;
  *out_ << json{{"event", "epoch"}, {"phase", phase}, {"epoch", epoch}, {"loss", loss}}.dump()
        << '\n';
}

void TrainingLog::iteration(int iteration, std::size_t dataset_size, std::size_t added) {
  if (!out_) return;
  *out_ << json{{"event", "iteration"},
                {"iteration", iteration},
                {"dataset_size", dataset_size},
                {"added", added}}
               .dump()
        << '\n';
}

void TrainingLog::correction(int game, int tick, const CorrectionResult& r) {
  if (!out_) return;
  *out_ << json{{"event", "correction"}, {"game", game},           {"tick", tick},
                {"n", r.sample_count},    {"before", r.loss_before}, {"after", r.loss_after}}
               .dump()
        << '\n';
}

void TrainingLog::game(int game, const EpisodeRecord& rec, int takeovers) {
  if (!out_) return;
  *out_ << json{{"event", "game"},      {"game", game},         {"map", rec.map_id},
                {"ticks", rec.length()}, {"success", rec.success}, {"takeovers", takeovers}}
               .dump()
        << '\n';
}

void TrainingLog::note(const char* key, double value) {
  if (!out_) return;
  *out_ << json{{"event", "note"}, {"key", key}, {"value", value}}.dump() << '\n';
}

ExpertFactory scripted_expert_factory(ExpertConfig config) {
  return [config](const World& w) { return std::make_unique<ScriptedExpert>(w, config); };
}

Batch make_batch(std::span<const Transition> transitions) {
  Batch b;
  b.observations.resize(static_cast<Eigen::Index>(transitions.size()), kFeatureSize);
  b.labels.reserve(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    transitions[i].observation.write_features(
        std::span<double>(b.observations.row(static_cast<Eigen::Index>(i)).data(), kFeatureSize));
    b.labels.push_back(transitions[i].action);
  }
  return b;
}

Batch make_batch(const Dataset& d, std::span<const std::size_t> rows) {
  Batch b;
  b.observations.resize(static_cast<Eigen::Index>(rows.size()), kFeatureSize);
  b.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d[rows[i]].observation.write_features(
        std::span<double>(b.observations.row(static_cast<Eigen::Index>(i)).data(), kFeatureSize));
    b.labels.push_back(d[rows[i]].action);
  }
  return b;
}

TrainResult train_bc(const PolicyParams& params, const Dataset& d, const TrainConfig& cfg,
                     TrainingLog* log) {
  if (d.empty()) throw Error(ErrorCode::kEmptyDataset, "cannot train on an empty dataset");
  if (cfg.epochs < 1 || cfg.minibatch_size < 1)
    throw Error(ErrorCode::kUsage, "epochs and minibatch size must be positive");

  TrainResult out{params, {}};
  OptState opt = make_opt_state(out.params, cfg.learning_rate);
  std::vector<std::size_t> order(d.size());
  const auto batch = static_cast<std::size_t>(cfg.minibatch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.next() % i);
      std::swap(order[i - 1], order[j]);
    }
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t n = std::min(batch, order.size() - start);
      const Batch b = make_batch(d, std::span(order).subspan(start, n));
      const auto lg = loss_and_grad(out.params, b);
      total += lg.loss * static_cast<double>(n);
      optimizer_step(out.params, lg.grads, opt);
    }
    const double mean = total / static_cast<double>(order.size());
    out.loss_curve.push_back(mean);
    if (log) log->epoch(epoch, mean, "train");
  }
  return out;
}

EpisodeRecord run_policy_episode(const PolicyParams& params, const World& world,
                                 std::int64_t seed, int max_ticks,
                                 std::vector<Observation>* visited) {
  EpisodeRecord rec;
  rec.map_id = world.id();
  rec.seed = seed;
  auto [state, obs] = reset(world, seed, max_ticks);
  while (!state.terminated) {
    if (visited) visited->push_back(obs);
    const ActionId a = act(params, obs);
    auto [next, result] = step(world, state, a);
    rec.ticks.push_back(make_tick_entry(next, a, result, ControlOwner::kNovice));
    state = next;
    obs = result.observation;
  }
  rec.success = state.success;
  return rec;
}

namespace {

// One game with an expert able to seize control. `policy` is re-read every
// tick so release handlers may replace it mid-episode.
template <typename OnTakeover, typename OnExpertTick, typename OnRelease>
EpisodeRecord controlled_episode(const PolicyParams& policy, const World& world,
                                 std::int64_t seed, int max_ticks, Expert& expert,
                                 OnTakeover on_takeover, OnExpertTick on_expert_tick,
                                 OnRelease on_release) {
  EpisodeRecord rec;
  rec.map_id = world.id();
  rec.seed = seed;
  auto [state, obs] = reset(world, seed, max_ticks);
  while (!state.terminated) {
    if (!expert.has_control() && expert.should_takeover(rec.ticks, state)) {
      expert.take_control(state);
      on_takeover(state);
    }
    const bool expert_tick = expert.has_control();
    const ActionId a = expert_tick ? expert.expert_action(state) : act(policy, obs);
    if (expert_tick) on_expert_tick(obs, a);
    auto [next, result] = step(world, state, a);
    const TickEntry entry = make_tick_entry(
        next, a, result, expert_tick ? ControlOwner::kExpert : ControlOwner::kNovice);
    rec.ticks.push_back(entry);
    if (expert_tick) expert.notify_step(entry);
    state = next;
    obs = result.observation;
    if (expert.has_control() && (state.terminated || expert.should_release(state))) {
      expert.give_back_control();
      on_release(state);
    }
  }
  rec.success = state.success;
  return rec;
}

TrainConfig iteration_config(const TrainConfig& base, const FinetuneConfig& cfg, int iteration) {
  TrainConfig c = base;
  c.epochs = cfg.epochs_per_iteration;
  c.shuffle_seed = mix_seed(base.shuffle_seed, static_cast<std::uint64_t>(iteration) + 1);
  return c;
}

void check_finetune(const FinetuneConfig& cfg, std::span<const World> maps) {
  if (cfg.iterations < 1 || cfg.epochs_per_iteration < 1 || cfg.games < 1 ||
      cfg.correction_passes < 1) {
    throw Error(ErrorCode::kUsage, "fine-tuning counts must be positive");
  }
  if (maps.empty()) throw Error(ErrorCode::kUsage, "no fine-tuning maps");
}

}  // namespace

DaggerResult run_dagger(const PolicyParams& params, const PolicyParams& frozen_bc,
                        const Dataset& d_bc, std::span<const World> maps,
                        const FinetuneConfig& cfg, const TrainConfig& train_cfg,
                        TrainingLog* log) {
  check_finetune(cfg, maps);
  DaggerResult out{params, d_bc, {}, {}};
  for (int i = 0; i < cfg.iterations; ++i) {
    const World& world = maps[static_cast<std::size_t>(i) % maps.size()];
    std::vector<Observation> visited;
    auto rec = run_policy_episode(out.params, world, i, cfg.max_ticks, &visited);
    if (visited.empty()) {
      throw Error(ErrorCode::kEmptyRollout, "rollout on " + world.id() + " produced no ticks");
    }
    Trajectory traj;
    traj.source = Source::kNovice;
    traj.episode_id = i;
    traj.transitions.reserve(visited.size());
    for (const auto& o : visited) traj.transitions.push_back({o, act(frozen_bc, o)});
    out.dataset = merge(out.dataset, traj);
    if (log) {
      log->game(i, rec, 0);
      log->iteration(i, out.dataset.size(), traj.size());
    }
    out.params = train_bc(out.params, out.dataset, iteration_config(train_cfg, cfg, i), log).params;
    out.added.push_back(std::move(traj));
    out.records.push_back(std::move(rec));
  }
  return out;
}

HgDaggerResult run_hg_dagger(const PolicyParams& params, const ExpertFactory& make_expert,
                             const Dataset& d_bc, std::span<const World> maps,
                             const FinetuneConfig& cfg, const TrainConfig& train_cfg,
                             TrainingLog* log) {
  check_finetune(cfg, maps);
  HgDaggerResult out{params, 0.0, {}, d_bc, {}, {}};
  constexpr int kRolloutsPerIteration = 1;
  int rollouts = 0;
  for (int i = 0; i < cfg.iterations; ++i) {
    for (int j = 0; j < kRolloutsPerIteration; ++j, ++rollouts) {
      const World& world = maps[static_cast<std::size_t>(rollouts) % maps.size()];
      auto expert = make_expert(world);
      Trajectory d_j;
      d_j.source = Source::kCorrection;
      d_j.episode_id = rollouts;
      std::vector<DoubtRecord> doubts;
      auto rec = controlled_episode(
          out.params, world, rollouts, cfg.max_ticks, *expert,
          [&](const EnvState& s) { doubts.push_back({s.tick, rollouts}); },
          [&](const Observation& o, ActionId a) { d_j.transitions.push_back({o, a}); },
          [](const EnvState&) {});
      out.dataset = merge(out.dataset, d_j);
      out.state.doubt_log.insert(out.state.doubt_log.end(), doubts.begin(), doubts.end());
      if (log) {
        log->game(rollouts, rec, static_cast<int>(doubts.size()));
        log->iteration(i, out.dataset.size(), d_j.size());
      }
      out.added.push_back(std::move(d_j));
      out.records.push_back(std::move(rec));
    }
    out.params = train_bc(out.params, out.dataset, iteration_config(train_cfg, cfg, i), log).params;
  }
  // Doubt-to-threshold map: mean takeovers per rollout. Reported only.
  out.state.risk_threshold =
      static_cast<double>(out.state.doubt_log.size()) / static_cast<double>(rollouts);
  out.risk_threshold = out.state.risk_threshold;
  if (log) log->note("risk_threshold", out.risk_threshold);
  return out;
}

std::pair<PolicyParams, CorrectionResult> correction_step(const PolicyParams& params,
                                                          Trajectory&& d_exp,
                                                          const FinetuneConfig& cfg) {
  if (d_exp.empty()) throw Error(ErrorCode::kEmptyCorrection, "correction has no samples");
  if (d_exp.source != Source::kCorrection)
    throw Error(ErrorCode::kUsage, "correction_step needs a CORRECTION trajectory");
  const Batch batch = make_batch(d_exp.transitions);
  CorrectionResult result;
  result.sample_count = d_exp.size();
  d_exp.transitions.clear();
  d_exp.transitions.shrink_to_fit();

  PolicyParams updated = params;
  OptState opt = make_opt_state(updated, cfg.correction_learning_rate);
  result.loss_before = batch_loss(updated, batch);
  for (int pass = 0; pass < cfg.correction_passes; ++pass) {
    const auto lg = loss_and_grad(updated, batch);
    optimizer_step(updated, lg.grads, opt);
  }
  result.loss_after = batch_loss(updated, batch);
  return {std::move(updated), result};
}

HddResult run_hdd(const PolicyParams& params, const ExpertFactory& make_expert,
                  std::span<const World> maps, const FinetuneConfig& cfg, TrainingLog* log) {
  check_finetune(cfg, maps);
  HddResult out{params, {}, {}, 0};
  for (int game = 0; game < cfg.games; ++game) {
    const World& world = maps[static_cast<std::size_t>(game) % maps.size()];
    auto expert = make_expert(world);
    Trajectory d_exp;
    int takeovers = 0;
    auto rec = controlled_episode(
        out.params, world, game, cfg.max_ticks, *expert,
        [&](const EnvState&) {
          ++takeovers;
          d_exp = Trajectory{{}, Source::kCorrection, game};
        },
        [&](const Observation& o, ActionId a) { d_exp.transitions.push_back({o, a}); },
        [&](const EnvState& s) {
          if (d_exp.empty()) return;
          out.corrective_transitions += d_exp.size();
          auto [updated, result] = correction_step(out.params, std::move(d_exp), cfg);
          out.params = std::move(updated);
          out.corrections.push_back(result);
          if (log) log->correction(game, s.tick, result);
        });
    if (log) log->game(game, rec, takeovers);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace imitate
