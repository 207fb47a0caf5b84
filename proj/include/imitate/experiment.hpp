#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "imitate/dataset.hpp"
#include "imitate/error.hpp"
#include "imitate/expert.hpp"
#include "imitate/metrics.hpp"
#include "imitate/policy.hpp"
#include "imitate/trainers.hpp"

namespace imitate {

// Everything needed to rerun the pipeline. Map entries are either a map file
// path (relative to the manifest's base directory) or a generator spec
// "train:<seed>" / "hazard:<seed>".
struct ExperimentManifest {
  std::uint64_t seed = 13;
  std::vector<std::string> training_maps;
  std::vector<std::string> finetune_maps;
  std::vector<std::string> eval_maps;
  std::vector<std::int64_t> eval_seeds;
  int probe_instances = kProbeInstances;
  std::uint64_t probe_seed_base = kProbeSeedBase;
  int dataset_games = 310;
  double noise_rate = 0.05;
  TrainConfig train;
  FinetuneConfig finetune;
  ExpertConfig expert;
  std::string output_dir = "out";
  std::filesystem::path base_dir = ".";  // not serialized
};

ExperimentManifest default_manifest();

nlohmann::json manifest_to_json(const ExperimentManifest& m);
// Missing keys keep their defaults; unknown keys are a usage error.
ExperimentManifest manifest_from_json(const nlohmann::json& j, ExperimentManifest base = default_manifest());
ExperimentManifest load_manifest(const std::filesystem::path& path);

// Hex FNV-1a over the canonical JSON form, output_dir excluded.
std::string manifest_digest(const ExperimentManifest& m);

World resolve_map(std::string_view spec, const std::filesystem::path& base_dir = ".");
std::vector<World> resolve_maps(const std::vector<std::string>& specs,
                                const std::filesystem::path& base_dir = ".");

// 0 ok, 2 usage, 3 data, 4 protocol.
int exit_code_for(ErrorCode code);

enum class FinetuneAlgo { kDagger, kHgDagger, kHdd };
std::optional<FinetuneAlgo> parse_algo(std::string_view name);
std::string_view algo_name(FinetuneAlgo algo);

// Policy files get a JSON sidecar "<file>.json" with provenance and extras.
void write_policy_artifact(const PolicyParams& params, const std::filesystem::path& path,
                           const std::string& provenance, const nlohmann::json& extra);

BcDatasetResult run_make_dataset(const ExperimentManifest& m, const std::filesystem::path& out_dir);

TrainResult run_train_bc(const ExperimentManifest& m, const Dataset& d_bc,
                         const std::filesystem::path& policy_out,
                         const std::filesystem::path& log_out);

struct FinetuneOutcome {
  PolicyParams params;
  std::size_t bc_size = 0;
  std::size_t final_size = 0;  // |D| after aggregation; |D_BC| for HDD
  Digest bc_digest_before = 0;
  Digest bc_digest_after = 0;
  bool bc_prefix_intact = true;
  std::size_t added_transitions = 0;
  std::size_t persisted_corrections = 0;
  std::vector<CorrectionResult> corrections;
  double risk_threshold = 0.0;
};

// Aggregated datasets (DAgger, HG-DAgger) are written next to the policy as
// "<policy stem>_dataset/"; HDD writes none.
FinetuneOutcome run_finetune(const ExperimentManifest& m, FinetuneAlgo algo,
                             const PolicyParams& bc, const Dataset& d_bc,
                             const std::filesystem::path& policy_out,
                             const std::filesystem::path& log_out);

struct NamedPolicy {
  std::string name;
  PolicyParams params;
};

// Fixed-seed games on the evaluation maps plus both probes for every agent.
// `games` <= 0 uses every evaluation map.
MetricsReport run_evaluate(const ExperimentManifest& m, const std::vector<NamedPolicy>& agents,
                           int games = 0);

void write_report(const MetricsReport& report, const std::string& provenance,
                  const std::filesystem::path& report_path,
                  const std::filesystem::path& figures_dir);

struct StageTimes {
  double dataset = 0.0;
  double train_bc = 0.0;
  double dagger = 0.0;
  double hg_dagger = 0.0;
  double hdd = 0.0;
  double evaluate = 0.0;
};

struct PipelineResult {
  BcDatasetResult dataset;
  TrainResult bc;
  FinetuneOutcome dagger;
  FinetuneOutcome hg_dagger;
  FinetuneOutcome hdd;
  MetricsReport report;
  StageTimes seconds;
};

// make-dataset, train-bc, the three fine-tunes and evaluate, with the default
// artifact layout under `root`.
PipelineResult run_pipeline(const ExperimentManifest& m, const std::filesystem::path& root);

}  // namespace imitate
