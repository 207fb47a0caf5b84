#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <future>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "imitate/error.hpp"
#include "imitate/session.hpp"

using namespace imitate;
using nlohmann::json;

namespace {

World room() {
  return load_map(
      "#######\n"
      "#..C..#\n"
      "#.....#\n"
      "#.....#\n"
      "#.....#\n"
      "#..@..#\n"
      "#######",
      "room");
}

// FORWARD on every tick: walks into the cave's blocked cell and stays.
PolicyParams forward_policy() {
  auto p = init_params(3);
  p.layers.back().weights.setZero();
  return p;
}

SessionConfig config(SessionMode mode, int max_ticks = 120, int episodes = 0) {
  SessionConfig c;
  c.mode = mode;
  c.max_ticks = max_ticks;
  c.max_episodes = episodes;
  c.tick_rate = 0;
  return c;
}

std::vector<json> of_type(const std::vector<json>& msgs, const char* type) {
  std::vector<json> out;
  for (const auto& m : msgs)
    if (m.at("type") == type) out.push_back(m);
  return out;
}

std::string action_line(int id) { return json{{"type", "action"}, {"id", id}}.dump(); }

}  // namespace

TEST_CASE("observe mode runs episodes like a headless rollout") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kObserve, 30, 2));
  std::vector<json> all;
  int states = 0;
  while (!core.finished()) {
    auto msgs = core.tick();
    states += static_cast<int>(of_type(msgs, "state").size());
    all.insert(all.end(), msgs.begin(), msgs.end());
  }
  CHECK(states == 60);
  CHECK(of_type(all, "episode_end").size() == 2);
  REQUIRE(core.records().size() == 2);
  CHECK(core.records()[0].length() == 30);
  CHECK(core.records()[1].seed == 1);
  CHECK(core.tick().empty());
}

TEST_CASE("state messages count up once per tick") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  core.client_connected();
  const auto first = core.tick();
  REQUIRE(first.size() == 1);
  CHECK(first[0].at("t") == 1);
  CHECK(first[0].contains("map"));
  CHECK(first[0].at("patch").size() == 7);
  CHECK(first[0].at("ctl") == "N");
  for (int t = 2; t < 10; ++t) {
    const auto m = core.tick();
    CHECK(m.at(0).at("t") == t);
    CHECK_FALSE(m.at(0).contains("map"));
  }
}

TEST_CASE("action without takeover is a violation and is ignored") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  core.client_connected();
  core.receive(action_line(2));
  const auto msgs = core.tick();
  const auto errs = of_type(msgs, "error");
  REQUIRE(errs.size() == 1);
  CHECK(errs[0].at("msg").get<std::string>().starts_with("ClientProtocolViolation"));
  CHECK(core.take_disconnect_request());
  CHECK_FALSE(core.take_disconnect_request());
  CHECK(of_type(msgs, "state").at(0).at("last") == ordinal(ActionId::kForward));
}

TEST_CASE("other violations") {
  for (const std::string line : {std::string("{not json"), action_line(9), std::string(R"({"type":"fly"})"),
                                 std::string(R"({"type":"release"})")}) {
    SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
    core.client_connected();
    core.receive(line);
    CHECK_MESSAGE(of_type(core.tick(), "error").size() == 1, line);
  }
  SessionCore observe(forward_policy(), room(), config(SessionMode::kObserve));
  observe.receive(R"({"type":"takeover"})");
  CHECK(of_type(observe.tick(), "error").size() == 1);

  SessionCore twice(forward_policy(), room(), config(SessionMode::kHdd));
  twice.receive(R"({"type":"takeover"})");
  twice.tick();
  twice.receive(R"({"type":"takeover"})");
  CHECK(of_type(twice.tick(), "error").size() == 1);
  CHECK(twice.client_in_control());
}

TEST_CASE("HDD: takeover, 20 actions, release gives one train_result") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  core.client_connected();
  core.tick();
  core.receive(R"({"type":"takeover"})");
  core.receive(action_line(2));
  const int before_tick = core.state().tick;
  std::vector<int> sent{2};
  auto m = core.tick();
  CHECK(m.at(0).at("ctl") == "E");
  for (int i = 1; i < 20; ++i) {
    const int id = i % 8;
    sent.push_back(id);
    core.receive(action_line(id));
    core.tick();
  }
  CHECK(core.buffered() == 20);
  // An idle controlled tick applies NOOP and records nothing.
  core.tick();
  CHECK(core.buffered() == 20);

  core.receive(R"({"type":"release"})");
  const auto out = core.tick();
  const auto results = of_type(out, "train_result");
  REQUIRE(results.size() == 1);
  CHECK(results[0].at("n") == 20);
  CHECK(results[0].at("after").get<double>() < results[0].at("before").get<double>());
  CHECK(core.buffered() == 0);
  CHECK_FALSE(core.client_in_control());
  CHECK(core.corrections().size() == 1);
  CHECK(core.state().tick == before_tick + 22);

  // Recorded labels are exactly the client's actions.
  std::vector<int> recorded;
  while (!core.records().size()) core.tick();
  for (const auto& t : core.records()[0].ticks)
    if (t.owner == ControlOwner::kExpert && t.action != ActionId::kNoop) recorded.push_back(ordinal(t.action));
  std::vector<int> sent_non_noop;
  for (int id : sent)
    if (id != ordinal(ActionId::kNoop)) sent_non_noop.push_back(id);
  CHECK(recorded == sent_non_noop);
}

TEST_CASE("empty takeover is a silent no-op") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  const auto bytes = serialize_params(core.policy());
  core.receive(R"({"type":"takeover"})");
  core.tick();
  core.receive(R"({"type":"release"})");
  const auto out = core.tick();
  CHECK(of_type(out, "train_result").empty());
  CHECK(of_type(out, "error").empty());
  CHECK(serialize_params(core.policy()) == bytes);
}

TEST_CASE("two cycles give two independent results") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  std::vector<json> results;
  for (int cycle = 0; cycle < 2; ++cycle) {
    core.receive(R"({"type":"takeover"})");
    for (int i = 0; i < 5 + cycle; ++i) {
      core.receive(action_line(3));
      core.tick();
    }
    core.receive(R"({"type":"release"})");
    for (const auto& r : of_type(core.tick(), "train_result")) results.push_back(r);
  }
  REQUIRE(results.size() == 2);
  CHECK(results[0].at("n") == 5);
  CHECK(results[1].at("n") == 6);
}

TEST_CASE("an action queued with a release is applied before the release") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  core.receive(R"({"type":"takeover"})");
  core.receive(action_line(2));
  core.tick();
  core.receive(action_line(3));
  core.receive(R"({"type":"release"})");
  CHECK(of_type(core.tick(), "train_result").empty());
  CHECK(core.buffered() == 2);
  const auto out = of_type(core.tick(), "train_result");
  REQUIRE(out.size() == 1);
  CHECK(out[0].at("n") == 2);
}

TEST_CASE("one control transition per tick") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  core.receive(R"({"type":"takeover"})");
  core.receive(R"({"type":"release"})");
  core.tick();
  CHECK(core.client_in_control());
  core.tick();
  CHECK_FALSE(core.client_in_control());
}

TEST_CASE("disconnect while in control trains the partial buffer") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHdd));
  core.client_connected();
  core.receive(R"({"type":"takeover"})");
  for (int i = 0; i < 4; ++i) {
    core.receive(action_line(2));
    core.tick();
  }
  core.client_disconnected();
  const auto out = core.tick();
  REQUIRE(of_type(out, "train_result").size() == 1);
  CHECK(of_type(out, "train_result")[0].at("n") == 4);
  CHECK_FALSE(core.client_in_control());
}

TEST_CASE("HG-DAgger mode aggregates instead of training") {
  SessionCore core(forward_policy(), room(), config(SessionMode::kHgDagger));
  const auto bytes = serialize_params(core.policy());
  core.receive(R"({"type":"takeover"})");
  for (int i = 0; i < 7; ++i) {
    core.receive(action_line(3));
    core.tick();
  }
  core.receive(R"({"type":"release"})");
  CHECK(of_type(core.tick(), "train_result").empty());
  CHECK(core.aggregated().size() == 7);
  CHECK(core.aggregated().count(Source::kCorrection) == 7);
  CHECK(serialize_params(core.policy()) == bytes);
}

TEST_CASE("episode end releases control and logs the episode") {
  const auto dir = std::filesystem::temp_directory_path() / "imitate_test_session_logs";
  std::filesystem::remove_all(dir);
  auto cfg = config(SessionMode::kHdd, 10, 1);
  cfg.episode_log_dir = dir;
  SessionCore core(forward_policy(), room(), cfg);
  core.receive(R"({"type":"takeover"})");
  std::vector<json> all;
  while (!core.finished()) {
    core.receive(action_line(2));
    auto m = core.tick();
    all.insert(all.end(), m.begin(), m.end());
  }
  CHECK(of_type(all, "train_result").size() == 1);
  CHECK(of_type(all, "episode_end").size() == 1);
  const auto rec = load_episode_log(dir / "session_0000.jsonl");
  CHECK(rec.length() == 10);
  CHECK(rec == core.records()[0]);
}

TEST_CASE("WebSocket round trip") {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  namespace net = boost::asio;
  using tcp = net::ip::tcp;

  auto cfg = config(SessionMode::kHdd, 100, 1);
  cfg.tick_rate = 20;
  SessionCore core(forward_policy(), room(), cfg);
  std::promise<unsigned short> port_promise;
  ServeOptions opts;
  opts.port = 0;
  opts.on_listening = [&](unsigned short p) { port_promise.set_value(p); };
  std::jthread server([&] { serve(core, cfg, opts); });
  const unsigned short port = port_promise.get_future().get();

  net::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/");
  const auto read = [&] {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  const auto send = [&](const std::string& line) { ws.write(net::buffer(line + "\n")); };

  json first = read();
  CHECK(first.at("type") == "state");
  CHECK(first.contains("map"));
  send(R"({"type":"takeover"})");
  std::vector<int> sent;
  int state_seen = 0;
  // One action per received state keeps actions on distinct ticks.
  while (static_cast<int>(sent.size()) < 20) {
    const json m = read();
    if (m.at("type") != "state") continue;
    ++state_seen;
    if (m.at("ctl") != "E" && !sent.empty()) FAIL("lost control");
    const int id = 2 + static_cast<int>(sent.size()) % 2;
    sent.push_back(id);
    send(action_line(id));
  }
  send(R"({"type":"release"})");
  json result;
  while (true) {
    const json m = read();
    if (m.at("type") == "train_result") {
      result = m;
      break;
    }
  }
  CHECK(result.at("n") == 20);
  CHECK(result.at("after").get<double>() < result.at("before").get<double>());
  ws.close(websocket::close_code::normal);
  server.join();

  std::vector<int> recorded;
  for (const auto& t : core.records().at(0).ticks)
    if (t.owner == ControlOwner::kExpert && t.action != ActionId::kNoop) recorded.push_back(ordinal(t.action));
  CHECK(recorded == sent);
  CHECK(core.corrections().size() == 1);
}

TEST_CASE("busy port is reported") {
  namespace net = boost::asio;
  net::io_context ioc;
  net::ip::tcp::acceptor blocker(ioc, {net::ip::make_address("127.0.0.1"), 0});
  auto cfg = config(SessionMode::kObserve, 5, 1);
  SessionCore core(forward_policy(), room(), cfg);
  ServeOptions opts;
  opts.port = blocker.local_endpoint().port();
  try {
    serve(core, cfg, opts);
    FAIL("expected EndpointUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEndpointUnavailable);
  }
}
