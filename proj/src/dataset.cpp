#include "imitate/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "imitate/error.hpp"
#include "imitate/expert.hpp"
#include "imitate/rng.hpp"

namespace imitate {

using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv(std::uint64_t& h, std::uint8_t byte) {
  h ^= byte;
  h *= kFnvPrime;
}

void fnv_transition(std::uint64_t& h, const Transition& t, Source s) {
  for (std::uint8_t c : t.observation.cells) fnv(h, c);
  const auto pitch = static_cast<std::uint8_t>(t.observation.pitch + 128);
  fnv(h, pitch);
  fnv(h, static_cast<std::uint8_t>(t.observation.prev_action));
  fnv(h, static_cast<std::uint8_t>(t.action));
  fnv(h, static_cast<std::uint8_t>(s));
}

Source parse_source(const std::string& name) {
  if (name == "BASELINE_EXPERT") return Source::kBaselineExpert;
  if (name == "NOVICE") return Source::kNovice;
  if (name == "CORRECTION") return Source::kCorrection;
  throw Error(ErrorCode::kIo, "unknown source " + name);
}

}  // namespace

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kBaselineExpert: return "BASELINE_EXPERT";
    case Source::kNovice: return "NOVICE";
    case Source::kCorrection: return "CORRECTION";
  }
  return "?";
}

std::string digest_hex(Digest d) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

void Dataset::append(const Trajectory& t) {
  transitions_.insert(transitions_.end(), t.transitions.begin(), t.transitions.end());
  provenance_.insert(provenance_.end(), t.transitions.size(), t.source);
}

Digest Dataset::checksum_prefix(std::size_t count) const {
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < count && i < transitions_.size(); ++i)
    fnv_transition(h, transitions_[i], provenance_[i]);
  return h;
}

std::size_t Dataset::count(Source s) const {
  return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), s));
}

Digest checksum(const Dataset& d) { return d.checksum(); }

Dataset merge(const Dataset& d, const Trajectory& t) {
  Dataset out = d;
  out.append(t);
  return out;
}

BcDatasetResult generate_bc_dataset(std::span<const World> training_maps, int games,
                                    double noise_rate, std::uint64_t seed,
                                    int max_ticks) {
  if (training_maps.empty()) throw Error(ErrorCode::kUsage, "no training maps");
  for (const auto& w : training_maps) {
    if (w.count(TileKind::kStep) > 0 || w.count(TileKind::kPond) > 0) {
      throw Error(ErrorCode::kMapContainsHazard,
                  "training map " + w.id() + " contains STEP or POND tiles");
    }
  }
  BcDatasetResult out;
  for (int g = 0; g < games; ++g) {
    const World& world = training_maps[static_cast<std::size_t>(g) % training_maps.size()];
    const ScriptedExpert expert(world);
    Rng noise(mix_seed(seed, static_cast<std::uint64_t>(g)));
    const std::int64_t episode_seed = static_cast<std::int64_t>(mix_seed(seed, 1000 + g) >> 1);
    auto [state, obs] = reset(world, episode_seed, max_ticks);

    Trajectory traj;
    traj.source = Source::kBaselineExpert;
    traj.episode_id = g;
    EpisodeRecord rec;
    rec.map_id = world.id();
    rec.seed = episode_seed;
    std::vector<ActionId> labels;

    while (!state.terminated) {
      // Demonstrations never touch the camera: pitch stays at zero.
      const ActionId executed = expert.navigate(state);
      ActionId label = executed;
      if (noise.bernoulli(noise_rate)) {
        label = static_cast<ActionId>(noise.uniform_int(0, kNumActions - 1));
      }
      traj.transitions.push_back({obs, label});
      labels.push_back(label);
      auto [next, result] = step(world, state, executed);
      rec.ticks.push_back(make_tick_entry(next, executed, result, ControlOwner::kExpert));
      state = next;
      obs = result.observation;
    }
    rec.success = state.success;
    out.dataset.append(traj);
    out.trajectories.push_back(std::move(traj));
    out.records.push_back(std::move(rec));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

std::string encode_observation(const Observation& obs) {
  std::string s;
  s.reserve(kViewCells + 8);
  for (std::uint8_t c : obs.cells) s += static_cast<char>('0' + c);
  s += '|';
  s += std::to_string(obs.pitch);
  s += '|';
  s += std::to_string(ordinal(obs.prev_action));
  return s;
}

Observation decode_observation(std::string_view text) {
  Observation obs;
  const auto bad = [&] { return Error(ErrorCode::kIo, "bad observation " + std::string(text)); };
  if (text.size() < kViewCells + 4 || text[kViewCells] != '|') throw bad();
  for (int i = 0; i < kViewCells; ++i) {
    const int c = text[static_cast<std::size_t>(i)] - '0';
    if (c < 0 || c >= kChannels) throw bad();
    obs.cells[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c);
  }
  const std::string rest(text.substr(kViewCells + 1));
  const auto bar = rest.find('|');
  if (bar == std::string::npos) throw bad();
  try {
    obs.pitch = std::stoi(rest.substr(0, bar));
    const auto a = action_from_ordinal(std::stoi(rest.substr(bar + 1)));
    if (!a) throw bad();
    obs.prev_action = *a;
  } catch (const std::logic_error&) {
    throw bad();
  }
  return obs;
}

void write_dataset_dir(const std::filesystem::path& dir, const Dataset& d,
                       std::span<const Trajectory> trajectories,
                       std::span<const EpisodeRecord> records,
                       const DatasetManifest& manifest_base) {
  std::filesystem::create_directories(dir);
  DatasetManifest manifest = manifest_base;
  manifest.episode_files.clear();
  manifest.transition_count = d.size();
  manifest.digest = digest_hex(d.checksum());

  char name[64];
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    std::snprintf(name, sizeof name, "episode_%04zu.jsonl", i);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write dataset episode");
    const EpisodeRecord* rec =
        i < records.size() && records[i].ticks.size() == traj.size() ? &records[i] : nullptr;
    json header = {{"map", rec ? rec->map_id : std::string()},
                   {"seed", rec ? rec->seed : 0},
                   {"success", rec ? rec->success : false},
                   {"source", source_name(traj.source)},
                   {"episode", traj.episode_id}};
    out << header.dump() << '\n';
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const auto& tr = traj.transitions[k];
      json line;
      if (rec) {
        const auto& t = rec->ticks[k];
        line = {{"t", t.tick},         {"a", ordinal(t.action)}, {"moved", t.moved},
                {"im", t.intended_move}, {"pitch", t.pitch},     {"x", t.position.x},
                {"y", t.position.y},     {"ctl", t.owner == ControlOwner::kExpert ? "E" : "N"}};
      } else {
        line = {{"t", k}, {"a", ordinal(tr.action)}};
      }
      line["o"] = encode_observation(tr.observation);
      line["lbl"] = ordinal(tr.action);
      out << line.dump() << '\n';
    }
    manifest.episode_files.emplace_back(name);
  }

  json m = {{"maps", manifest.maps},
            {"seed", manifest.seed},
            {"source", manifest.source},
            {"transition_count", manifest.transition_count},
            {"digest", manifest.digest},
            {"episodes", manifest.episode_files}};
  if (!manifest.provenance.empty()) m["manifest_digest"] = manifest.provenance;
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest");
  out << m.dump(2) << '\n';
}

Dataset read_dataset_dir(const std::filesystem::path& dir, DatasetManifest* manifest_out) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorCode::kIo, "no manifest.json in " + dir.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("manifest: ") + e.what());
  }
  DatasetManifest manifest;
  manifest.maps = m.value("maps", std::vector<std::string>{});
  manifest.seed = m.value("seed", std::uint64_t{0});
  manifest.source = m.value("source", std::string());
  manifest.transition_count = m.at("transition_count").get<std::size_t>();
  manifest.digest = m.at("digest").get<std::string>();
  manifest.episode_files = m.at("episodes").get<std::vector<std::string>>();
  manifest.provenance = m.value("manifest_digest", std::string());

  Dataset d;
  for (const auto& file : manifest.episode_files) {
    std::ifstream ep(dir / file);
    if (!ep) throw Error(ErrorCode::kIo, "missing dataset episode " + file);
    std::string line;
    std::getline(ep, line);
    const json header = json::parse(line);
    Trajectory traj;
    traj.source = parse_source(header.at("source").get<std::string>());
    traj.episode_id = header.value("episode", std::int64_t{0});
    while (std::getline(ep, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const auto label = action_from_ordinal(j.at("lbl").get<int>());
      if (!label) throw Error(ErrorCode::kIo, "bad label in " + file);
      traj.transitions.push_back({decode_observation(j.at("o").get<std::string>()), *label});
    }
    d.append(traj);
  }
  if (d.size() != manifest.transition_count || digest_hex(d.checksum()) != manifest.digest) {
    throw Error(ErrorCode::kIo, "dataset in " + dir.string() + " does not match its manifest digest");
  }
  if (manifest_out) *manifest_out = std::move(manifest);
  return d;
}

}  // namespace imitate
