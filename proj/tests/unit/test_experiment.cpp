#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "imitate/experiment.hpp"
#include "imitate/maps.hpp"

using namespace imitate;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kIo;
}

ExperimentManifest tiny_manifest() {
  ExperimentManifest m = default_manifest();
  m.base_dir = IMITATE_SOURCE_DIR;
  m.training_maps = {"train:1", "train:2"};
  m.finetune_maps = {"hazard:200"};
  m.eval_maps = {"maps/eval-900.txt", "hazard:901"};
  m.eval_seeds = {100, 101};
  m.probe_instances = 2;
  m.dataset_games = 4;
  m.train.epochs = 2;
  m.finetune.iterations = 2;
  m.finetune.epochs_per_iteration = 1;
  m.finetune.games = 2;
  return m;
}

}  // namespace

TEST_CASE("default manifest values") {
  const auto m = default_manifest();
  CHECK(m.seed == 13);
  CHECK(m.training_maps.size() == 20);
  CHECK(m.finetune_maps.size() == 10);
  CHECK(m.eval_maps.size() == 20);
  CHECK(m.eval_maps.front() == "maps/eval-900.txt");
  CHECK(m.eval_seeds.size() == 20);
  CHECK(m.eval_seeds.front() == 100);
  CHECK(m.train.epochs == 150);
  CHECK(m.finetune.iterations == 15);
  CHECK(m.finetune.games == 58);
  CHECK(m.finetune.epochs_per_iteration == 5);
  CHECK(m.noise_rate == 0.05);
}

TEST_CASE("manifest JSON round trip and digest") {
  auto m = default_manifest();
  m.finetune.games = 7;
  m.expert.release_horizon = 15;
  const auto back = manifest_from_json(manifest_to_json(m));
  CHECK(manifest_to_json(back) == manifest_to_json(m));
  CHECK(manifest_digest(back) == manifest_digest(m));
  CHECK(manifest_digest(m) != manifest_digest(default_manifest()));
  CHECK(manifest_digest(m).size() == 16);

  auto moved = m;
  moved.output_dir = "elsewhere";
  CHECK(manifest_digest(moved) == manifest_digest(m));

  // Partial configs keep defaults for missing keys.
  const auto partial = manifest_from_json(json{{"seed", 5}});
  CHECK(partial.seed == 5);
  CHECK(partial.train.epochs == 150);
}

TEST_CASE("bad manifests are usage errors") {
  CHECK(code_of([] { manifest_from_json(json{{"bogus", 1}}); }) == ErrorCode::kUsage);
  CHECK(code_of([] { manifest_from_json(json{{"train", {{"epochz", 3}}}}); }) == ErrorCode::kUsage);
  CHECK(code_of([] {
          manifest_from_json(json{{"eval_maps", {"hazard:1", "hazard:2"}}, {"eval_seeds", {1}}});
        }) == ErrorCode::kUsage);
  CHECK(code_of([] { load_manifest("/nonexistent/manifest.json"); }) == ErrorCode::kIo);
}

TEST_CASE("manifest files resolve maps relative to themselves") {
  const auto dir = fs::temp_directory_path() / "imitate_test_manifest";
  fs::remove_all(dir);
  fs::create_directories(dir / "maps");
  fs::copy_file(IMITATE_SOURCE_DIR "/maps/eval-900.txt", dir / "maps" / "x.txt");
  std::ofstream(dir / "m.json") << json{{"eval_maps", {"maps/x.txt"}}, {"eval_seeds", {3}}}.dump();
  const auto m = load_manifest(dir / "m.json");
  CHECK(m.base_dir == dir);
  const auto maps = resolve_maps(m.eval_maps, m.base_dir);
  REQUIRE(maps.size() == 1);
  CHECK(maps[0].to_text() == load_map_file(IMITATE_SOURCE_DIR "/maps/eval-900.txt").to_text());
}

TEST_CASE("map specs") {
  CHECK(resolve_map("train:3").to_text() == generate_map(MapStyle::kTraining, 3).to_text());
  CHECK(resolve_map("hazard:901").to_text() == generate_map(MapStyle::kHazard, 901).to_text());
  // The checked-in fixture is the generated map it was frozen from.
  CHECK(resolve_map("maps/eval-900.txt", IMITATE_SOURCE_DIR).to_text() ==
        generate_map(MapStyle::kHazard, 900).to_text());
  CHECK(code_of([] { resolve_map("lava:1"); }) == ErrorCode::kUsage);
  CHECK(code_of([] { resolve_map("train:x"); }) == ErrorCode::kUsage);
  CHECK(code_of([] { resolve_map("no/such/map.txt"); }) != ErrorCode::kUsage);
}

TEST_CASE("exit codes and algorithm names") {
  CHECK(exit_code_for(ErrorCode::kUsage) == 2);
  CHECK(exit_code_for(ErrorCode::kBadMagic) == 3);
  CHECK(exit_code_for(ErrorCode::kTruncatedFile) == 3);
  CHECK(exit_code_for(ErrorCode::kMalformedMap) == 3);
  CHECK(exit_code_for(ErrorCode::kEndpointUnavailable) == 4);
  CHECK(exit_code_for(ErrorCode::kClientProtocolViolation) == 4);
  for (auto a : {FinetuneAlgo::kDagger, FinetuneAlgo::kHgDagger, FinetuneAlgo::kHdd})
    CHECK(parse_algo(algo_name(a)) == a);
  CHECK_FALSE(parse_algo("bc").has_value());
}

TEST_CASE("small pipeline: layout, provenance and dataset semantics") {
  const auto m = tiny_manifest();
  const auto root = fs::temp_directory_path() / "imitate_test_pipeline";
  fs::remove_all(root);
  const auto r = run_pipeline(m, root);
  const auto digest = manifest_digest(m);

  for (const char* f : {"policies/bc.bin", "policies/dagger.bin", "policies/hg-dagger.bin", "policies/hdd.bin",
                        "policies/bc.bin.json", "report.json", "dataset/manifest.json", "figures/fig2_occurrences.csv",
                        "figures/manifest_digest.txt", "logs/bc.jsonl"}) {
    CHECK_MESSAGE(fs::exists(root / f), f);
  }
  CHECK_FALSE(fs::exists(root / "policies" / "hdd_dataset"));
  CHECK(fs::exists(root / "policies" / "dagger_dataset" / "manifest.json"));

  std::ifstream sidecar(root / "policies" / "hdd.bin.json");
  CHECK(json::parse(sidecar).at("manifest_digest") == digest);
  std::ifstream report(root / "report.json");
  const auto rj = json::parse(report);
  for (const auto& [name, agent] : rj.items()) CHECK(agent.at("manifest_digest") == digest);
  std::ifstream log(root / "logs" / "bc.jsonl");
  std::string first;
  std::getline(log, first);
  CHECK(json::parse(first).at("digest") == digest);

  CHECK(r.bc.loss_curve.size() == 2);
  CHECK(r.hdd.bc_digest_before == r.hdd.bc_digest_after);
  CHECK(r.hdd.persisted_corrections == 0);
  CHECK(r.hdd.final_size == r.hdd.bc_size);
  for (const auto* f : {&r.dagger, &r.hg_dagger}) {
    CHECK(f->bc_prefix_intact);
    CHECK(f->final_size == f->bc_size + f->added_transitions);
  }
  CHECK(r.report.agents.size() == 4);
  for (const auto& a : r.report.agents) {
    CHECK(a.games.size() == 2);
    CHECK(a.probes.size() == 2);
  }

  // Reading the dataset back gives the stored digest.
  DatasetManifest dm;
  const auto d = read_dataset_dir(root / "dataset", &dm);
  CHECK(dm.digest == digest_hex(d.checksum()));
  CHECK(dm.provenance == digest);
}
