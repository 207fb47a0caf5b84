#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "imitate/dataset.hpp"
#include "imitate/error.hpp"
#include "imitate/maps.hpp"

using namespace imitate;
namespace fs = std::filesystem;

namespace {

std::vector<World> training_maps(int n) {
  std::vector<World> out;
  for (int i = 1; i <= n; ++i) out.push_back(generate_map(MapStyle::kTraining, static_cast<std::uint64_t>(i)));
  return out;
}

Trajectory tagged(std::initializer_list<ActionId> actions, Source src) {
  Trajectory t;
  t.source = src;
  int k = 0;
  for (ActionId a : actions) {
    Observation o;
    o.pitch = 5 * (k++ % 3);
    o.cells[static_cast<std::size_t>(k % kViewCells)] = 2;
    t.transitions.push_back({o, a});
  }
  return t;
}

}  // namespace

TEST_CASE("noise 0 stores exactly the executed expert action") {
  const auto maps = training_maps(3);
  const auto r = generate_bc_dataset(maps, 6, 0.0, 13);
  std::size_t row = 0;
  for (std::size_t e = 0; e < r.records.size(); ++e) {
    for (const auto& tick : r.records[e].ticks) {
      CHECK(r.dataset[row].action == tick.action);
      CHECK(r.dataset.source(row) == Source::kBaselineExpert);
      ++row;
    }
  }
  CHECK(row == r.dataset.size());
}

TEST_CASE("noise 1 labels are uniform over the nine actions") {
  const auto maps = training_maps(4);
  const auto r = generate_bc_dataset(maps, 160, 1.0, 7);
  constexpr std::size_t n = 10000;
  REQUIRE(r.dataset.size() >= n);
  std::array<double, kNumActions> counts{};
  for (std::size_t i = 0; i < n; ++i) counts[static_cast<std::size_t>(ordinal(r.dataset[i].action))] += 1;
  const double expected = static_cast<double>(n) / kNumActions;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 8 degrees of freedom, p = 0.001.
  CHECK(chi2 < 26.12);
}

TEST_CASE("default-style dataset: size and gap labels") {
  const auto maps = training_maps(20);
  const auto r = generate_bc_dataset(maps, 50, 0.05, 13);
  std::size_t total = 0;
  for (const auto& rec : r.records) total += rec.ticks.size();
  CHECK(r.dataset.size() == total);

  std::size_t row = 0, noisy_gap = 0;
  for (std::size_t e = 0; e < r.records.size(); ++e) {
    for (const auto& tick : r.records[e].ticks) {
      // The expert itself never pitches or jumps on hazard-free maps.
      CHECK_FALSE(is_pitch(tick.action));
      CHECK(tick.action != ActionId::kJumpForward);
      const ActionId label = r.dataset[row++].action;
      if (is_pitch(label) || label == ActionId::kJumpForward) {
        CHECK(label != tick.action);
        ++noisy_gap;
      }
    }
  }
  const auto clean = generate_bc_dataset(maps, 50, 0.0, 13);
  for (const auto& t : clean.dataset.transitions()) {
    CHECK_FALSE(is_pitch(t.action));
    CHECK(t.action != ActionId::kJumpForward);
  }
  // Gap labels can only come from noise: rate 0.05 * 3/9, checked within 4 sd.
  const double rate = 0.05 * 3 / 9;
  const double mean = rate * static_cast<double>(total);
  CHECK(static_cast<double>(noisy_gap) < mean + 4 * std::sqrt(mean * (1 - rate)));
}

TEST_CASE("generation is deterministic per seed") {
  const auto maps = training_maps(2);
  const auto a = generate_bc_dataset(maps, 4, 0.05, 99);
  const auto b = generate_bc_dataset(maps, 4, 0.05, 99);
  const auto c = generate_bc_dataset(maps, 4, 0.05, 100);
  CHECK(a.dataset.checksum() == b.dataset.checksum());
  CHECK(a.dataset.checksum() != c.dataset.checksum());
}

TEST_CASE("hazard maps are refused") {
  const std::vector<World> maps{generate_map(MapStyle::kHazard, 200)};
  try {
    generate_bc_dataset(maps, 1, 0.0, 1);
    FAIL("expected MapContainsHazard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMapContainsHazard);
  }
}

TEST_CASE("merge keeps the original as an exact prefix") {
  Dataset d;
  d.append(tagged({ActionId::kForward, ActionId::kTurnLeft, ActionId::kNoop}, Source::kBaselineExpert));
  const Digest before = d.checksum();

  const auto same = merge(d, Trajectory{});
  CHECK(same.size() == d.size());
  CHECK(same.checksum() == before);

  const auto grown = merge(d, tagged({ActionId::kJumpForward, ActionId::kBack}, Source::kNovice));
  CHECK(grown.size() == 5);
  CHECK(grown.checksum_prefix(d.size()) == before);
  CHECK(d.checksum() == before);
  CHECK(d.size() == 3);
  CHECK(grown.source(3) == Source::kNovice);
  CHECK(grown.count(Source::kNovice) == 2);
  CHECK(grown.count(Source::kCorrection) == 0);
}

TEST_CASE("checksum is order sensitive and stable") {
  Dataset a, b;
  a.append(tagged({ActionId::kForward, ActionId::kTurnRight}, Source::kBaselineExpert));
  b.append(tagged({ActionId::kForward, ActionId::kTurnRight}, Source::kBaselineExpert));
  CHECK(a.checksum() == b.checksum());
  CHECK(checksum(a) == a.checksum());

  auto t = tagged({ActionId::kForward, ActionId::kTurnRight}, Source::kBaselineExpert);
  std::swap(t.transitions[0], t.transitions[1]);
  Dataset swapped;
  swapped.append(t);
  CHECK(swapped.checksum() != a.checksum());
  CHECK(digest_hex(a.checksum()).size() == 16);
}

TEST_CASE("observation text encoding round-trips") {
  Observation o;
  for (std::size_t i = 0; i < o.cells.size(); ++i) o.cells[i] = static_cast<std::uint8_t>(i % kChannels);
  o.pitch = -45;
  o.prev_action = ActionId::kPitchDown;
  CHECK(decode_observation(encode_observation(o)) == o);
}

TEST_CASE("dataset directories round-trip") {
  const auto maps = training_maps(2);
  const auto r = generate_bc_dataset(maps, 3, 0.05, 21);
  const auto dir = fs::temp_directory_path() / "imitate_test_dataset";
  fs::remove_all(dir);
  DatasetManifest base;
  base.maps = {"train:1", "train:2"};
  base.seed = 21;
  base.source = "scripted";
  base.provenance = "abc123";
  write_dataset_dir(dir, r.dataset, r.trajectories, r.records, base);

  DatasetManifest m;
  const auto back = read_dataset_dir(dir, &m);
  CHECK(back.size() == r.dataset.size());
  CHECK(back.checksum() == r.dataset.checksum());
  CHECK(m.transition_count == r.dataset.size());
  CHECK(m.digest == digest_hex(r.dataset.checksum()));
  CHECK(m.episode_files.size() == 3);
  CHECK(m.provenance == "abc123");
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == r.dataset[i]);
}
