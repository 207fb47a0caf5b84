#include "imitate/episode.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "imitate/error.hpp"

namespace imitate {

using nlohmann::json;

TickEntry make_tick_entry(const EnvState& after, ActionId action,
                          const StepResult& result, ControlOwner owner) {
  TickEntry e;
  e.tick = after.tick - 1;
  e.action = action;
  e.moved = result.moved;
  e.intended_move = result.intended_move;
  e.pitch = after.pitch;
  e.position = after.position;
  e.owner = owner;
  return e;
}

void write_episode_log(std::ostream& out, const EpisodeRecord& rec) {
  json header = {{"map", rec.map_id}, {"seed", rec.seed}, {"success", rec.success}};
  out << header.dump() << '\n';
  for (const auto& t : rec.ticks) {
    json line = {{"t", t.tick},
                 {"a", ordinal(t.action)},
                 {"moved", t.moved},
                 {"im", t.intended_move},
                 {"pitch", t.pitch},
                 {"x", t.position.x},
                 {"y", t.position.y},
                 {"ctl", t.owner == ControlOwner::kExpert ? "E" : "N"}};
    out << line.dump() << '\n';
  }
}

EpisodeRecord read_episode_log(std::istream& in) {
  EpisodeRecord rec;
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIo, "episode log line " + std::to_string(line_no) +
                                      ": " + e.what());
    }
    if (!have_header) {
      rec.map_id = j.at("map").is_string() ? j.at("map").get<std::string>()
                                           : j.at("map").dump();
      rec.seed = j.at("seed").get<std::int64_t>();
      rec.success = j.value("success", false);
      have_header = true;
      continue;
    }
    TickEntry t;
    t.tick = j.at("t").get<int>();
    const auto a = action_from_ordinal(j.at("a").get<int>());
    if (!a) throw Error(ErrorCode::kIo, "bad action id on line " + std::to_string(line_no));
    t.action = *a;
    t.moved = j.at("moved").get<bool>();
    t.intended_move = j.at("im").get<bool>();
    t.pitch = j.at("pitch").get<int>();
    t.position = {j.at("x").get<int>(), j.at("y").get<int>()};
    t.owner = j.at("ctl").get<std::string>() == "E" ? ControlOwner::kExpert
                                                   : ControlOwner::kNovice;
    rec.ticks.push_back(t);
  }
  if (!have_header) throw Error(ErrorCode::kIo, "episode log has no header");
  return rec;
}

void save_episode_log(const EpisodeRecord& rec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_episode_log(out, rec);
}

EpisodeRecord load_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  return read_episode_log(in);
}

}  // namespace imitate
