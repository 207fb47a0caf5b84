#include "imitate/experiment.hpp"

#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "imitate/maps.hpp"

namespace imitate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> generated(std::string_view kind, int first, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(std::string(kind) + ":" + std::to_string(first + i));
  return out;
}

template <class T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

void write_provenance_line(std::ostream& out, const std::string& provenance) {
  out << json{{"event", "manifest"}, {"digest", provenance}}.dump() << '\n';
}

}  // namespace

ExperimentManifest default_manifest() {
  ExperimentManifest m;
  m.training_maps = generated("train", 1, 20);
  m.finetune_maps = generated("hazard", 200, 10);
  // The first evaluation map is checked in; the rest are generated.
  m.eval_maps = {"maps/eval-900.txt"};
  for (auto& s : generated("hazard", 901, 19)) m.eval_maps.push_back(s);
  for (int i = 0; i < 20; ++i) m.eval_seeds.push_back(100 + i);
  m.train.shuffle_seed = m.seed;
  return m;
}

json manifest_to_json(const ExperimentManifest& m) {
  return {{"seed", m.seed},
          {"training_maps", m.training_maps},
          {"finetune_maps", m.finetune_maps},
          {"eval_maps", m.eval_maps},
          {"eval_seeds", m.eval_seeds},
          {"probe_instances", m.probe_instances},
          {"probe_seed_base", m.probe_seed_base},
          {"dataset_games", m.dataset_games},
          {"noise_rate", m.noise_rate},
          {"train",
           {{"epochs", m.train.epochs},
            {"minibatch_size", m.train.minibatch_size},
            {"learning_rate", m.train.learning_rate},
            {"shuffle_seed", m.train.shuffle_seed}}},
          {"finetune",
           {{"iterations", m.finetune.iterations},
            {"epochs_per_iteration", m.finetune.epochs_per_iteration},
            {"games", m.finetune.games},
            {"correction_passes", m.finetune.correction_passes},
            {"correction_learning_rate", m.finetune.correction_learning_rate},
            {"max_ticks", m.finetune.max_ticks}}},
          {"expert",
           {{"takeover_stuck_ticks", m.expert.takeover_stuck_ticks},
            {"takeover_pitch_threshold", m.expert.takeover_pitch_threshold},
            {"release_horizon", m.expert.release_horizon}}},
          {"output_dir", m.output_dir}};
}

ExperimentManifest manifest_from_json(const json& j, ExperimentManifest m) {
  if (!j.is_object()) throw Error(ErrorCode::kUsage, "manifest must be a JSON object");
  const json known = manifest_to_json(m);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::kUsage, "unknown manifest key '" + key + "'");
    if (!known.at(key).is_object()) continue;
    if (!value.is_object()) throw Error(ErrorCode::kUsage, "manifest key '" + key + "' must be an object");
    for (const auto& [sub, ignored] : value.items()) {
      if (!known.at(key).contains(sub))
        throw Error(ErrorCode::kUsage, "unknown manifest key '" + key + "." + sub + "'");
    }
  }
  try {
    take(j, "seed", m.seed);
    take(j, "training_maps", m.training_maps);
    take(j, "finetune_maps", m.finetune_maps);
    take(j, "eval_maps", m.eval_maps);
    take(j, "eval_seeds", m.eval_seeds);
    take(j, "probe_instances", m.probe_instances);
    take(j, "probe_seed_base", m.probe_seed_base);
    take(j, "dataset_games", m.dataset_games);
    take(j, "noise_rate", m.noise_rate);
    take(j, "output_dir", m.output_dir);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      take(t, "epochs", m.train.epochs);
      take(t, "minibatch_size", m.train.minibatch_size);
      take(t, "learning_rate", m.train.learning_rate);
      take(t, "shuffle_seed", m.train.shuffle_seed);
    } else if (j.contains("seed")) {
      m.train.shuffle_seed = m.seed;
    }
    if (j.contains("finetune")) {
      const auto& f = j.at("finetune");
      take(f, "iterations", m.finetune.iterations);
      take(f, "epochs_per_iteration", m.finetune.epochs_per_iteration);
      take(f, "games", m.finetune.games);
      take(f, "correction_passes", m.finetune.correction_passes);
      take(f, "correction_learning_rate", m.finetune.correction_learning_rate);
      take(f, "max_ticks", m.finetune.max_ticks);
    }
    if (j.contains("expert")) {
      const auto& e = j.at("expert");
      take(e, "takeover_stuck_ticks", m.expert.takeover_stuck_ticks);
      take(e, "takeover_pitch_threshold", m.expert.takeover_pitch_threshold);
      take(e, "release_horizon", m.expert.release_horizon);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kUsage, std::string("manifest: ") + e.what());
  }
  if (m.eval_seeds.size() < m.eval_maps.size()) {
    throw Error(ErrorCode::kUsage, "manifest needs one evaluation seed per evaluation map");
  }
  return m;
}

ExperimentManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kUsage, "manifest " + path.string() + ": " + e.what());
  }
  auto m = manifest_from_json(j);
  m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return m;
}

std::string manifest_digest(const ExperimentManifest& m) {
  // Where artifacts land is not part of what produced them.
  json j = manifest_to_json(m);
  j.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return digest_hex(h);
}

World resolve_map(std::string_view spec, const fs::path& base_dir) {
  const auto colon = spec.find(':');
  if (colon != std::string_view::npos) {
    const auto kind = spec.substr(0, colon);
    const std::string num(spec.substr(colon + 1));
    std::uint64_t seed = 0;
    try {
      std::size_t used = 0;
      seed = std::stoull(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kUsage, "bad map seed in '" + std::string(spec) + "'");
    }
    if (kind == "train") return generate_map(MapStyle::kTraining, seed);
    if (kind == "hazard") return generate_map(MapStyle::kHazard, seed);
    throw Error(ErrorCode::kUsage, "unknown map generator '" + std::string(kind) + "'");
  }
  const fs::path p(spec);
  return load_map_file((p.is_absolute() ? p : base_dir / p).string());
}

std::vector<World> resolve_maps(const std::vector<std::string>& specs, const fs::path& base_dir) {
  std::vector<World> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(resolve_map(s, base_dir));
  return out;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
      return 2;
    case ErrorCode::kEndpointUnavailable:
    case ErrorCode::kClientProtocolViolation:
      return 4;
    default:
      return 3;
  }
}

std::optional<FinetuneAlgo> parse_algo(std::string_view name) {
  if (name == "dagger") return FinetuneAlgo::kDagger;
  if (name == "hg-dagger") return FinetuneAlgo::kHgDagger;
  if (name == "hdd") return FinetuneAlgo::kHdd;
  return std::nullopt;
}

std::string_view algo_name(FinetuneAlgo algo) {
  switch (algo) {
    case FinetuneAlgo::kDagger:
      return "dagger";
    case FinetuneAlgo::kHgDagger:
      return "hg-dagger";
    case FinetuneAlgo::kHdd:
      return "hdd";
  }
  return "?";
}

void write_policy_artifact(const PolicyParams& params, const fs::path& path,
                           const std::string& provenance, const json& extra) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_params(params, path);
  json side = extra.is_object() ? extra : json::object();
  side["manifest_digest"] = provenance;
  auto out = open_out(path.string() + ".json");
  out << side.dump(2) << '\n';
}

BcDatasetResult run_make_dataset(const ExperimentManifest& m, const fs::path& out_dir) {
  const auto maps = resolve_maps(m.training_maps, m.base_dir);
  auto result = generate_bc_dataset(maps, m.dataset_games, m.noise_rate, m.seed);
  DatasetManifest dm;
  dm.maps = m.training_maps;
  dm.seed = m.seed;
  dm.source = std::string(source_name(Source::kBaselineExpert));
  dm.provenance = manifest_digest(m);
  write_dataset_dir(out_dir, result.dataset, result.trajectories, result.records, dm);
  return result;
}

TrainResult run_train_bc(const ExperimentManifest& m, const Dataset& d_bc,
                         const fs::path& policy_out, const fs::path& log_out) {
  const auto provenance = manifest_digest(m);
  auto log_file = open_out(log_out);
  write_provenance_line(log_file, provenance);
  TrainingLog log(&log_file);
  auto result = train_bc(init_params(m.seed), d_bc, m.train, &log);
  write_policy_artifact(result.params, policy_out, provenance,
                        {{"kind", "bc"}, {"loss_curve", result.loss_curve}});
  return result;
}

FinetuneOutcome run_finetune(const ExperimentManifest& m, FinetuneAlgo algo,
                             const PolicyParams& bc, const Dataset& d_bc,
                             const fs::path& policy_out, const fs::path& log_out) {
  const auto provenance = manifest_digest(m);
  const auto maps = resolve_maps(m.finetune_maps, m.base_dir);
  auto log_file = open_out(log_out);
  write_provenance_line(log_file, provenance);
  TrainingLog log(&log_file);

  FinetuneOutcome out;
  out.bc_size = d_bc.size();
  out.bc_digest_before = d_bc.checksum();
  TrainConfig per_iteration = m.train;
  per_iteration.epochs = m.finetune.epochs_per_iteration;

  const auto persist_aggregate = [&](const Dataset& d, const std::vector<Trajectory>& added) {
    out.final_size = d.size();
    out.bc_prefix_intact = d.checksum_prefix(d_bc.size()) == out.bc_digest_before;
    for (const auto& t : added) out.added_transitions += t.size();
    DatasetManifest dm;
    dm.maps = m.finetune_maps;
    dm.seed = m.seed;
    dm.source = std::string(algo_name(algo));
    dm.provenance = provenance;
    const fs::path dir = policy_out.parent_path() / (policy_out.stem().string() + "_dataset");
    // Only the appended trajectories get episode files; the base dataset is
    // referenced by digest.
    Dataset appended;
    for (const auto& t : added) appended.append(t);
    write_dataset_dir(dir, appended, added, {}, dm);
    auto side = open_out(dir / "base.json");
    side << json{{"base_digest", digest_hex(out.bc_digest_before)},
                 {"base_size", d_bc.size()},
                 {"aggregate_digest", digest_hex(d.checksum())},
                 {"aggregate_size", d.size()}}
                .dump(2)
         << '\n';
  };

  json extra = {{"kind", algo_name(algo)}};
  switch (algo) {
    case FinetuneAlgo::kDagger: {
      auto r = run_dagger(bc, bc, d_bc, maps, m.finetune, per_iteration, &log);
      persist_aggregate(r.dataset, r.added);
      out.params = std::move(r.params);
      break;
    }
    case FinetuneAlgo::kHgDagger: {
      auto r = run_hg_dagger(bc, scripted_expert_factory(m.expert), d_bc, maps, m.finetune,
                             per_iteration, &log);
      persist_aggregate(r.dataset, r.added);
      out.risk_threshold = r.risk_threshold;
      extra["risk_threshold"] = r.risk_threshold;
      extra["takeovers"] = r.state.doubt_log.size();
      out.params = std::move(r.params);
      break;
    }
    case FinetuneAlgo::kHdd: {
      auto r = run_hdd(bc, scripted_expert_factory(m.expert), maps, m.finetune, &log);
      out.final_size = d_bc.size();
      out.added_transitions = r.corrective_transitions;
      out.corrections = std::move(r.corrections);
      out.params = std::move(r.params);
      extra["corrections"] = out.corrections.size();
      extra["corrective_transitions"] = r.corrective_transitions;
      break;
    }
  }
  out.bc_digest_after = d_bc.checksum();
  out.persisted_corrections = d_bc.count(Source::kCorrection);
  extra["dataset_ratio"] = static_cast<double>(out.final_size) / static_cast<double>(out.bc_size);
  extra["base_digest"] = digest_hex(out.bc_digest_before);
  write_policy_artifact(out.params, policy_out, provenance, extra);
  return out;
}

MetricsReport run_evaluate(const ExperimentManifest& m, const std::vector<NamedPolicy>& agents,
                           int games) {
  auto maps = resolve_maps(m.eval_maps, m.base_dir);
  if (games > 0) {
    if (static_cast<std::size_t>(games) > maps.size()) {
      throw Error(ErrorCode::kUsage, "asked for " + std::to_string(games) + " games but only " +
                                         std::to_string(maps.size()) + " evaluation maps");
    }
    maps.resize(static_cast<std::size_t>(games));
  }
  std::vector<std::pair<std::string, std::vector<EpisodeRecord>>> records;
  for (const auto& agent : agents) {
    const auto controller = policy_controller(agent.params);
    std::vector<EpisodeRecord> recs;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      recs.push_back(run_controller_episode(controller, maps[i], m.eval_seeds[i]));
    }
    records.emplace_back(agent.name, std::move(recs));
  }
  auto report = build_report(records);
  for (std::size_t a = 0; a < agents.size(); ++a) {
    const auto controller = policy_controller(agents[a].params);
    for (const auto kind : {ProbeKind::kStep, ProbeKind::kWall}) {
      report.agents[a].probes[std::string(probe_name(kind))] = probe_similarity(
          controller, kind, m.probe_instances, kProbeWindow, m.probe_seed_base);
    }
  }
  return report;
}

void write_report(const MetricsReport& report, const std::string& provenance,
                  const fs::path& report_path, const fs::path& figures_dir) {
  json j = report_to_json(report);
  for (auto& [name, entry] : j.items()) entry["manifest_digest"] = provenance;
  auto out = open_out(report_path);
  out << j.dump(2) << '\n';
  write_figure_csvs(report, figures_dir.string());
  auto stamp = open_out(figures_dir / "manifest_digest.txt");
  stamp << provenance << '\n';
}

PipelineResult run_pipeline(const ExperimentManifest& m, const fs::path& root) {
  using clock = std::chrono::steady_clock;
  auto mark = clock::now();
  const auto lap = [&mark] {
    const auto now = clock::now();
    return std::chrono::duration<double>(now - std::exchange(mark, now)).count();
  };
  const auto policy = [&](std::string_view name) {
    return root / "policies" / (std::string(name) + ".bin");
  };
  const auto log = [&](std::string_view name) { return root / "logs" / (std::string(name) + ".jsonl"); };

  PipelineResult r;
  r.dataset = run_make_dataset(m, root / "dataset");
  r.seconds.dataset = lap();
  r.bc = run_train_bc(m, r.dataset.dataset, policy("bc"), log("bc"));
  r.seconds.train_bc = lap();
  const auto& d = r.dataset.dataset;
  r.dagger = run_finetune(m, FinetuneAlgo::kDagger, r.bc.params, d, policy("dagger"), log("dagger"));
  r.seconds.dagger = lap();
  r.hg_dagger =
      run_finetune(m, FinetuneAlgo::kHgDagger, r.bc.params, d, policy("hg-dagger"), log("hg-dagger"));
  r.seconds.hg_dagger = lap();
  r.hdd = run_finetune(m, FinetuneAlgo::kHdd, r.bc.params, d, policy("hdd"), log("hdd"));
  r.seconds.hdd = lap();
  r.report = run_evaluate(m, {{"bc", r.bc.params},
                              {"dagger", r.dagger.params},
                              {"hg-dagger", r.hg_dagger.params},
                              {"hdd", r.hdd.params}});
  write_report(r.report, manifest_digest(m), root / "report.json", root / "figures");
  r.seconds.evaluate = lap();
  return r;
}

}  // namespace imitate
