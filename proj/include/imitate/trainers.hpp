#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "imitate/dataset.hpp"
#include "imitate/episode.hpp"
#include "imitate/expert.hpp"
#include "imitate/policy.hpp"

namespace imitate {

struct TrainConfig {
  int epochs = 150;
  int minibatch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t shuffle_seed = 0;
};

struct FinetuneConfig {
  int iterations = 15;
  int epochs_per_iteration = 5;
  int games = 58;
  int correction_passes = 5;
  double correction_learning_rate = 1e-3;
  int max_ticks = kDefaultMaxTicks;
};

struct CorrectionResult {
  std::size_t sample_count = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
};

struct DoubtRecord {
  int tick = 0;
  int rollout = 0;
};

struct HgDaggerState {
  std::vector<DoubtRecord> doubt_log;
  double risk_threshold = 0.0;
};

// JSON-lines sink for training events. A null stream discards everything.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(std::ostream* out) : out_(out) {}

  void epoch(int epoch, double loss, const char* phase);
  void iteration(int iteration, std::size_t dataset_size, std::size_t added);
  void correction(int game, int tick, const CorrectionResult& r);
  void game(int game, const EpisodeRecord& rec, int takeovers);
  void note(const char* key, double value);

 private:
  std::ostream* out_ = nullptr;
};

using ExpertFactory = std::function<std::unique_ptr<Expert>(const World&)>;
ExpertFactory scripted_expert_factory(ExpertConfig config = {});

// Packs dataset rows into a feature batch.
Batch make_batch(std::span<const Transition> transitions);
Batch make_batch(const Dataset& d, std::span<const std::size_t> rows);

struct TrainResult {
  PolicyParams params;
  std::vector<double> loss_curve;
};

TrainResult train_bc(const PolicyParams& params, const Dataset& d, const TrainConfig& cfg,
                     TrainingLog* log = nullptr);

// Policy-only rollout; optionally collects every observation the policy acted on.
EpisodeRecord run_policy_episode(const PolicyParams& params, const World& world,
                                 std::int64_t seed, int max_ticks = kDefaultMaxTicks,
                                 std::vector<Observation>* visited = nullptr);

struct DaggerResult {
  PolicyParams params;
  Dataset dataset;
  std::vector<Trajectory> added;
  std::vector<EpisodeRecord> records;
};

DaggerResult run_dagger(const PolicyParams& params, const PolicyParams& frozen_bc,
                        const Dataset& d_bc, std::span<const World> maps,
                        const FinetuneConfig& cfg, const TrainConfig& train_cfg,
                        TrainingLog* log = nullptr);

struct HgDaggerResult {
  PolicyParams params;
  double risk_threshold = 0.0;
  HgDaggerState state;
  Dataset dataset;
  std::vector<Trajectory> added;
  std::vector<EpisodeRecord> records;
};

HgDaggerResult run_hg_dagger(const PolicyParams& params, const ExpertFactory& expert,
                             const Dataset& d_bc, std::span<const World> maps,
                             const FinetuneConfig& cfg, const TrainConfig& train_cfg,
                             TrainingLog* log = nullptr);

// Trains on the correction alone and consumes it: `d_exp` is empty on return.
std::pair<PolicyParams, CorrectionResult> correction_step(const PolicyParams& params,
                                                          Trajectory&& d_exp,
                                                          const FinetuneConfig& cfg);

struct HddResult {
  PolicyParams params;
  std::vector<CorrectionResult> corrections;
  std::vector<EpisodeRecord> records;
  std::size_t corrective_transitions = 0;
};

HddResult run_hdd(const PolicyParams& params, const ExpertFactory& expert,
                  std::span<const World> maps, const FinetuneConfig& cfg,
                  TrainingLog* log = nullptr);

}  // namespace imitate
