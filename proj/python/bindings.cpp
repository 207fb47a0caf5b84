#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "imitate/env.hpp"
#include "imitate/experiment.hpp"
#include "imitate/expert.hpp"
#include "imitate/maps.hpp"
#include "imitate/metrics.hpp"
#include "imitate/policy.hpp"

namespace py = pybind11;
using namespace imitate;

namespace {

// JSON crosses the boundary as text; Python parses it with the json module.
std::string dump(const nlohmann::json& j) { return j.dump(); }

MapStyle parse_style(const std::string& s) {
  if (s == "training") return MapStyle::kTraining;
  if (s == "hazard") return MapStyle::kHazard;
  throw Error(ErrorCode::kUsage, "map style must be 'training' or 'hazard'");
}

py::dict step_dict(const EnvState& s, const StepResult& r) {
  py::dict d;
  d["x"] = s.position.x;
  d["y"] = s.position.y;
  d["yaw"] = s.yaw;
  d["pitch"] = s.pitch;
  d["tick"] = s.tick;
  d["moved"] = r.moved;
  d["intended_move"] = r.intended_move;
  d["terminated"] = r.terminated;
  d["success"] = r.success;
  d["features"] = r.observation.features();
  return d;
}

// Stateful wrapper over the pure reset/step pair.
class Env {
 public:
  Env(World world, std::int64_t seed, int max_ticks) : world_(std::move(world)) {
    std::tie(state_, obs_) = reset(world_, seed, max_ticks);
  }

  py::dict step(int action) {
    const auto a = action_from_ordinal(action);
    if (!a) throw Error(ErrorCode::kUsage, "action ordinal out of range");
    auto [next, r] = imitate::step(world_, state_, *a);
    state_ = next;
    obs_ = r.observation;
    return step_dict(state_, r);
  }

  std::vector<double> features() const { return obs_.features(); }
  int expert_action() const { return ordinal(ScriptedExpert(world_).navigate(state_)); }
  const EnvState& state() const { return state_; }
  const Observation& observation() const { return obs_; }

 private:
  World world_;
  EnvState state_;
  Observation obs_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grid-cave imitation learning: environment, policy, expert and metrics.";

  static py::exception<Error> error(m, "ImitateError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::enum_<ActionId>(m, "Action")
      .value("FORWARD", ActionId::kForward)
      .value("BACK", ActionId::kBack)
      .value("TURN_LEFT", ActionId::kTurnLeft)
      .value("TURN_RIGHT", ActionId::kTurnRight)
      .value("JUMP_FORWARD", ActionId::kJumpForward)
      .value("PITCH_UP", ActionId::kPitchUp)
      .value("PITCH_DOWN", ActionId::kPitchDown)
      .value("NOOP", ActionId::kNoop)
      .value("END_EPISODE", ActionId::kEndEpisode);

  m.attr("FEATURE_SIZE") = kFeatureSize;
  m.attr("NUM_ACTIONS") = kNumActions;
  m.attr("MAX_TICKS") = kDefaultMaxTicks;

  py::class_<World>(m, "World")
      .def_property_readonly("width", &World::width)
      .def_property_readonly("height", &World::height)
      .def_property_readonly("id", &World::id)
      .def_property_readonly("spawn", [](const World& w) { return py::make_tuple(w.spawn().x, w.spawn().y); })
      .def("to_text", &World::to_text);

  m.def("load_map", [](const std::string& text, const std::string& id) { return load_map(text, id); },
        py::arg("text"), py::arg("id") = "");
  m.def("load_map_file", &load_map_file, py::arg("path"));
  m.def("generate_map", [](const std::string& style, std::uint64_t seed) {
    return generate_map(parse_style(style), seed);
  }, py::arg("style"), py::arg("seed"));
  m.def("resolve_map", [](const std::string& spec, const std::filesystem::path& base) { return resolve_map(spec, base); },
        py::arg("spec"), py::arg("base_dir") = ".");

  py::class_<Env>(m, "Env")
      .def(py::init<World, std::int64_t, int>(), py::arg("world"), py::arg("seed") = 0,
           py::arg("max_ticks") = kDefaultMaxTicks)
      .def("step", &Env::step, py::arg("action"))
      .def("features", &Env::features)
      .def("expert_action", &Env::expert_action)
      .def_property_readonly("tick", [](const Env& e) { return e.state().tick; })
      .def_property_readonly("pitch", [](const Env& e) { return e.state().pitch; })
      .def_property_readonly("yaw", [](const Env& e) { return e.state().yaw; })
      .def_property_readonly("position", [](const Env& e) { return py::make_tuple(e.state().position.x, e.state().position.y); })
      .def_property_readonly("terminated", [](const Env& e) { return e.state().terminated; })
      .def_property_readonly("view", [](const Env& e) {
        std::vector<std::vector<int>> rows(kViewSize, std::vector<int>(kViewSize));
        for (int r = 0; r < kViewSize; ++r)
          for (int c = 0; c < kViewSize; ++c) rows[r][c] = e.observation().cell(r, c);
        return rows;
      });

  py::class_<PolicyParams>(m, "Policy")
      .def_static("init", &init_params, py::arg("seed"))
      .def_static("load", &load_params, py::arg("path"))
      .def("save", [](const PolicyParams& p, const std::filesystem::path& path) { save_params(p, path); })
      .def("forward", [](const PolicyParams& p, const std::vector<double>& x) {
        if (x.size() != kFeatureSize) throw Error(ErrorCode::kShapeMismatch, "expected 304 features");
        const auto probs = forward(p, std::span<const double>(x));
        return std::vector<double>(probs.begin(), probs.end());
      }, py::arg("features"))
      .def("act", [](const PolicyParams& p, const std::vector<double>& x) {
        if (x.size() != kFeatureSize) throw Error(ErrorCode::kShapeMismatch, "expected 304 features");
        const auto probs = forward(p, std::span<const double>(x));
        return ordinal(argmax_action(probs));
      }, py::arg("features"))
      .def("to_bytes", [](const PolicyParams& p) {
        const auto b = serialize_params(p);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def_property_readonly("layer_dims", &PolicyParams::layer_dims)
      .def_property_readonly("parameter_count", &PolicyParams::parameter_count);

  m.def("plan_path", [](const World& w, int x, int y, int yaw) {
    std::vector<int> out;
    for (ActionId a : plan_path(w, {x, y}, yaw, TileKind::kCave)) out.push_back(ordinal(a));
    return out;
  }, py::arg("world"), py::arg("x"), py::arg("y"), py::arg("yaw") = 0);

  m.def("episode_metrics", [](const std::filesystem::path& log) {
    const auto g = game_metrics(load_episode_log(log));
    py::dict d;
    d["length"] = g.length;
    d["success"] = g.success;
    d["stuck_ticks"] = g.stuck_ticks;
    d["uptime_ticks"] = g.uptime_ticks;
    d["collisions"] = g.collisions.size();
    d["histogram"] = std::vector<int>(g.histogram.begin(), g.histogram.end());
    d["blinded"] = g.blinded;
    return d;
  }, py::arg("log_path"));

  m.def("default_manifest", [] { return dump(manifest_to_json(default_manifest())); });
  m.def("manifest_digest", [](const std::string& manifest_json) {
    return manifest_digest(manifest_from_json(nlohmann::json::parse(manifest_json)));
  }, py::arg("manifest_json"));
  m.def("run_pipeline", [](const std::string& manifest_json, const std::filesystem::path& base_dir,
                           const std::filesystem::path& root) {
    auto man = manifest_from_json(nlohmann::json::parse(manifest_json));
    man.base_dir = base_dir;
    py::gil_scoped_release release;
    const auto r = run_pipeline(man, root);
    return dump(report_to_json(r.report));
  }, py::arg("manifest_json"), py::arg("base_dir"), py::arg("root"));
}
