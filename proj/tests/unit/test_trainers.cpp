#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "../oracles/grad_check.hpp"
#include "imitate/error.hpp"
#include "imitate/maps.hpp"
#include "imitate/trainers.hpp"

using namespace imitate;

namespace {

const World& room() {
  static const World w = load_map(
      "#######\n"
      "#..C..#\n"
      "#.....#\n"
      "#.....#\n"
      "#.....#\n"
      "#..@..#\n"
      "#######",
      "room");
  return w;
}

// Always FORWARD: the zero head makes all logits tie.
PolicyParams forward_policy() {
  auto p = init_params(3);
  p.layers.back().weights.setZero();
  return p;
}

class NeverExpert : public Expert {
 public:
  bool should_takeover(std::span<const TickEntry>, const EnvState&) override { return false; }
  ActionId expert_action(const EnvState&) override { return ActionId::kNoop; }
  bool should_release(const EnvState&) override { return false; }
};

class AlwaysExpert : public Expert {
 public:
  bool should_takeover(std::span<const TickEntry>, const EnvState&) override { return true; }
  ActionId expert_action(const EnvState&) override { return ActionId::kTurnLeft; }
  bool should_release(const EnvState&) override { return false; }
};

// Takes over once at tick 5 and releases after 20 controlled ticks.
class OnceExpert : public Expert {
 public:
  bool should_takeover(std::span<const TickEntry>, const EnvState& s) override {
    return !done_ && s.tick == 5;
  }
  ActionId expert_action(const EnvState&) override { return ActionId::kTurnLeft; }
  void notify_step(const TickEntry&) override { ++steps_; }
  bool should_release(const EnvState&) override {
    if (steps_ < 20) return false;
    done_ = true;
    return true;
  }

 private:
  int steps_ = 0;
  bool done_ = false;
};

template <typename E>
ExpertFactory factory() {
  return [](const World&) { return std::make_unique<E>(); };
}

Dataset tiny_dataset(std::uint64_t seed, int n) {
  Rng rng(seed);
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    t.transitions.push_back(
        {oracle::random_observation(rng), static_cast<ActionId>(rng.uniform_int(0, kNumActions - 1))});
  }
  Dataset d;
  d.append(t);
  return d;
}

FinetuneConfig small_finetune(int iterations, int games) {
  FinetuneConfig c;
  c.iterations = iterations;
  c.games = games;
  c.epochs_per_iteration = 1;
  return c;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kUsage;
}

}  // namespace

TEST_CASE("one epoch on one element lowers its loss") {
  const auto d = tiny_dataset(5, 1);
  const auto p = init_params(1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 1e-4;
  const auto r = train_bc(p, d, cfg);
  REQUIRE(r.loss_curve.size() == 1);
  CHECK(std::isfinite(r.loss_curve[0]));
  const auto b = make_batch(d.transitions());
  CHECK(batch_loss(r.params, b) < batch_loss(p, b));
}

TEST_CASE("train_bc is deterministic and logs every epoch") {
  const auto d = tiny_dataset(6, 200);
  TrainConfig cfg;
  cfg.epochs = 4;
  std::ostringstream log_a;
  TrainingLog log(&log_a);
  const auto a = train_bc(init_params(2), d, cfg, &log);
  const auto b = train_bc(init_params(2), d, cfg);
  CHECK(serialize_params(a.params) == serialize_params(b.params));
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.loss_curve.size() == 4);
  std::size_t lines = 0;
  for (char c : log_a.str()) lines += c == '\n';
  CHECK(lines == 4);

  cfg.shuffle_seed = 1;
  CHECK(serialize_params(train_bc(init_params(2), d, cfg).params) != serialize_params(a.params));
  CHECK(code_of([&] { train_bc(init_params(2), Dataset{}, cfg); }) == ErrorCode::kEmptyDataset);
}

TEST_CASE("DAgger relabels with the frozen policy") {
  const auto d_bc = tiny_dataset(7, 50);
  const auto p = init_params(4);
  const std::vector<World> maps{room()};
  const auto r = run_dagger(p, p, d_bc, maps, small_finetune(1, 1), TrainConfig{});
  REQUIRE(r.added.size() == 1);
  REQUIRE(r.added[0].size() == r.records[0].ticks.size());
  // Iteration 1 rolls out the frozen policy itself.
  for (std::size_t i = 0; i < r.added[0].size(); ++i) CHECK(r.added[0].transitions[i].action == r.records[0].ticks[i].action);
  CHECK(r.dataset.size() == d_bc.size() + r.added[0].size());
  CHECK(r.dataset.checksum_prefix(d_bc.size()) == d_bc.checksum());
  CHECK(r.dataset.count(Source::kNovice) == r.added[0].size());

  const auto again = run_dagger(p, p, d_bc, maps, small_finetune(1, 1), TrainConfig{});
  CHECK(serialize_params(again.params) == serialize_params(r.params));
}

TEST_CASE("empty rollouts are rejected") {
  const std::vector<World> maps{room()};
  auto cfg = small_finetune(1, 1);
  cfg.max_ticks = 0;
  const auto d = tiny_dataset(1, 5);
  CHECK(code_of([&] { run_dagger(init_params(1), init_params(1), d, maps, cfg, TrainConfig{}); }) ==
        ErrorCode::kEmptyRollout);
}

TEST_CASE("HG-DAgger with an idle expert keeps D") {
  const auto d_bc = tiny_dataset(8, 40);
  const std::vector<World> maps{room()};
  const auto r = run_hg_dagger(forward_policy(), factory<NeverExpert>(), d_bc, maps, small_finetune(3, 1), TrainConfig{});
  CHECK(r.dataset.size() == d_bc.size());
  CHECK(r.dataset.checksum() == d_bc.checksum());
  CHECK(r.state.doubt_log.empty());
  CHECK(r.risk_threshold == 0.0);
}

TEST_CASE("HG-DAgger under full expert control records every tick") {
  const auto d_bc = tiny_dataset(9, 40);
  const std::vector<World> maps{room()};
  const auto r = run_hg_dagger(forward_policy(), factory<AlwaysExpert>(), d_bc, maps, small_finetune(1, 1), TrainConfig{});
  CHECK(r.dataset.size() == d_bc.size() + kDefaultMaxTicks);
  CHECK(r.dataset.count(Source::kCorrection) == static_cast<std::size_t>(kDefaultMaxTicks));
  CHECK(r.dataset.checksum_prefix(d_bc.size()) == d_bc.checksum());
  CHECK(r.state.doubt_log.size() == 1);
  for (std::size_t i = d_bc.size(); i < r.dataset.size(); ++i) CHECK(r.dataset[i].action == ActionId::kTurnLeft);
}

TEST_CASE("HG-DAgger doubt log counts takeovers") {
  const auto d_bc = tiny_dataset(10, 40);
  const std::vector<World> maps{room()};
  const auto r = run_hg_dagger(forward_policy(), factory<OnceExpert>(), d_bc, maps, small_finetune(2, 1), TrainConfig{});
  std::size_t takeovers = 0, expert_ticks = 0;
  for (const auto& rec : r.records) {
    ControlOwner prev = ControlOwner::kNovice;
    for (const auto& t : rec.ticks) {
      if (t.owner == ControlOwner::kExpert && prev == ControlOwner::kNovice) ++takeovers;
      expert_ticks += t.owner == ControlOwner::kExpert;
      prev = t.owner;
    }
  }
  CHECK(r.state.doubt_log.size() == takeovers);
  CHECK(r.dataset.size() - d_bc.size() == expert_ticks);
  CHECK(r.risk_threshold == doctest::Approx(static_cast<double>(takeovers) / 2));
}

TEST_CASE("correction_step descends and consumes its input") {
  Rng rng(12);
  Trajectory t;
  t.source = Source::kCorrection;
  for (int i = 0; i < 20; ++i) t.transitions.push_back({oracle::random_observation(rng), ActionId::kTurnRight});
  const auto p = init_params(5);
  auto [q, r] = correction_step(p, std::move(t), FinetuneConfig{});
  CHECK(r.sample_count == 20);
  CHECK(r.loss_after < r.loss_before);
  CHECK(t.transitions.empty());
  CHECK(t.transitions.capacity() == 0);

  Trajectory empty;
  empty.source = Source::kCorrection;
  CHECK(code_of([&] { correction_step(p, std::move(empty), FinetuneConfig{}); }) == ErrorCode::kEmptyCorrection);
  Trajectory wrong;
  wrong.transitions.push_back({Observation{}, ActionId::kNoop});
  CHECK(code_of([&] { correction_step(p, std::move(wrong), FinetuneConfig{}); }) == ErrorCode::kUsage);
}

TEST_CASE("a singleton correction is learned") {
  Rng rng(13);
  int agree = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto obs = oracle::random_observation(rng);
    const auto label = static_cast<ActionId>(rng.uniform_int(0, kNumActions - 1));
    Trajectory t;
    t.source = Source::kCorrection;
    t.transitions.push_back({obs, label});
    const auto p = init_params(rng.next());
    auto [q, r] = correction_step(p, std::move(t), FinetuneConfig{});
    agree += act(q, obs) == label;
  }
  CHECK(agree == 20);
}

TEST_CASE("HDD: no takeover leaves the policy untouched") {
  const std::vector<World> maps{room()};
  const auto p = forward_policy();
  const auto r = run_hdd(p, factory<NeverExpert>(), maps, small_finetune(1, 3));
  CHECK(serialize_params(r.params) == serialize_params(p));
  CHECK(r.corrections.empty());
  CHECK(r.corrective_transitions == 0);
  CHECK(r.records.size() == 3);
}

TEST_CASE("HDD: one 20-tick takeover gives one correction") {
  const std::vector<World> maps{room()};
  const auto d_bc = tiny_dataset(14, 30);
  const Digest before = d_bc.checksum();
  std::ostringstream sink;
  TrainingLog log(&sink);
  const auto r = run_hdd(forward_policy(), factory<OnceExpert>(), maps, small_finetune(1, 1), &log);
  REQUIRE(r.corrections.size() == 1);
  CHECK(r.corrections[0].sample_count == 20);
  CHECK(r.corrections[0].loss_after < r.corrections[0].loss_before);
  CHECK(r.corrective_transitions == 20);
  CHECK(d_bc.checksum() == before);
  CHECK(d_bc.count(Source::kCorrection) == 0);
  CHECK(sink.str().find("\"correction\"") != std::string::npos);
}

TEST_CASE("scripted HDD run on a hazard map") {
  const std::vector<World> maps{generate_map(MapStyle::kHazard, 200)};
  auto cfg = small_finetune(1, 2);
  // An untrained policy stalls quickly, so the scripted gates fire.
  const auto r = run_hdd(init_params(21), scripted_expert_factory(), maps, cfg);
  CHECK(!r.corrections.empty());
  std::size_t total = 0;
  for (const auto& c : r.corrections) {
    CHECK(c.sample_count >= 1);
    CHECK(c.loss_after < c.loss_before);
    total += c.sample_count;
  }
  CHECK(total == r.corrective_transitions);
}
