#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "bciwalk/error.hpp"
#include "bciwalk/telemetry.hpp"
#include "bciwalk/telemetry_server.hpp"
#include "fixtures.hpp"

using namespace bciwalk;
using namespace std::chrono_literals;

namespace {

class Client {
 public:
  explicit Client(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    timeval tv{2, 0};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
  ~Client() { ::close(fd_); }

  void send_line(const std::string& s) {
    const std::string line = s + "\n";
    REQUIRE(::send(fd_, line.data(), line.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(line.size()));
  }

  // Next full line, or empty on timeout.
  std::string read_line() {
    while (true) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      char tmp[4096];
      const ssize_t n = ::recv(fd_, tmp, sizeof tmp, 0);
      if (n <= 0) return {};
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  std::string buf_;
};

std::vector<TelemetryMessage> every_message_type() {
  SessionResult r;
  r.stops_score = 9.5;
  r.completion_time_s = 230.0;
  r.finished = true;
  r.npc_credits.assign(10, 0.95);
  r.dwells = {{0, 20.0, 22.0, 1.0}};
  r.events = {{EventKind::Transition, 1.0, 1.0, BrainState::Walk},
              {EventKind::FalsePositive, 3.0, 4.5, BrainState::Walk}};
  CalibrationReport cal = calibrate(std::vector<double>{0.1, 0.2, 0.8, 0.9},
                                    std::vector<BrainState>{BrainState::Idle, BrainState::Idle,
                                                            BrainState::Walk, BrainState::Walk});
  return {
      telemetry::session_start(0.0, "session", Track::make_default(), FsmConfig{}, ScoringConfig{}),
      telemetry::posterior(0.5, 1, 0.7, 0.6, BrainState::Walk),
      telemetry::posterior(0.5, 1, 0.7, 0.6, std::nullopt),
      telemetry::state(0.5, BrainState::Idle, BrainState::Walk),
      telemetry::calibration_histogram(2.0, cal, true),
      telemetry::avatar_position(0.5, 0.5, BrainState::Walk),
      telemetry::npc_status(21.0, 0, 0.5, 1.0, true),
      telemetry::score(21.0, 0.5, 0),
      telemetry::session_end(230.0, r),
      telemetry::threshold_update(0.0, 0.4, 0.62, true, "config"),
      telemetry::threshold_update(5.0, 0.7, 0.3, false, "operator", "t_idle must not exceed t_walk"),
      telemetry::control(6.0, "pause", true),
  };
}

}  // namespace

TEST_CASE("every outgoing message matches the published schema") {
  const auto& schema = testing::telemetry_schema();
  for (const auto& m : every_message_type()) {
    CAPTURE(m.type);
    const auto j = nlohmann::json::parse(m.to_line());
    CHECK(testing::schema_violation(schema, j) == "");
  }
}

TEST_CASE("schema rejects malformed messages") {
  const auto& schema = testing::telemetry_schema();
  CHECK(testing::schema_violation(schema, nlohmann::json::parse(R"({"type":"bogus","session_time_s":0,"payload":{}})")) != "");
  CHECK(testing::schema_violation(schema, nlohmann::json::parse(R"({"type":"state","session_time_s":0,"payload":{"state":"run"}})")) != "");
  CHECK(testing::schema_violation(schema, nlohmann::json::parse(R"({"type":"control","session_time_s":0,"payload":{}})")) != "");
  CHECK(testing::schema_violation(schema, nlohmann::json::parse(R"({"type":"threshold_update","session_time_s":1,"payload":{"t_idle":0.3,"t_walk":0.7}})")) == "");
}

TEST_CASE("message envelope") {
  const auto m = telemetry::state(1.5, BrainState::Idle, BrainState::Walk);
  const std::string line = m.to_line();
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.rfind(R"({"type":"state","session_time_s":1.5,"payload":)", 0) == 0);
  const auto back = TelemetryMessage::parse(line);
  CHECK(back.type == "state");
  CHECK(back.payload == m.payload);
  CHECK_THROWS_AS(TelemetryMessage::parse("{not json"), FormatError);
  CHECK_THROWS_AS(TelemetryMessage::parse("[1,2]"), FormatError);
  CHECK_THROWS_AS(TelemetryMessage::parse(R"({"type":"x","payload":3})"), FormatError);
}

TEST_CASE("operator actions") {
  auto a = parse_action(TelemetryMessage::parse(R"({"type":"threshold_update","payload":{"t_idle":0.3,"t_walk":0.7}})"));
  REQUIRE(a);
  CHECK(a->kind == OperatorAction::Kind::SetThresholds);
  CHECK(a->t_idle == 0.3);
  CHECK(a->t_walk == 0.7);
  for (const char* act : {"start", "pause", "reset"}) {
    const auto c = parse_action(TelemetryMessage::parse(std::string(R"({"type":"control","payload":{"action":")") + act + "\"}}"));
    REQUIRE(c);
    CHECK(to_string(c->kind) == act);
  }
  CHECK_FALSE(parse_action(telemetry::score(0, 0, 0)));
  CHECK_THROWS_AS(parse_action(TelemetryMessage::parse(R"({"type":"control","payload":{"action":"fly"}})")), FormatError);
  CHECK_THROWS_AS(parse_action(TelemetryMessage::parse(R"({"type":"threshold_update","payload":{"t_idle":"a"}})")), FormatError);
}

TEST_CASE("log round-trip") {
  std::stringstream ss;
  StreamSink sink(ss);
  const auto msgs = every_message_type();
  for (const auto& m : msgs) sink.publish(m);
  ss << "\n";
  const auto back = read_telemetry_log(ss);
  REQUIRE(back.size() == msgs.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    CHECK(back[i].type == msgs[i].type);
    CHECK(back[i].payload == msgs[i].payload);
  }
  std::stringstream bad("{\"type\":\"state\"}\nnope\n");
  CHECK_THROWS_AS(read_telemetry_log(bad), FormatError);
}

TEST_CASE("loopback server: publish, actions and round-trip latency") {
  TelemetryServer server("127.0.0.1", 0);
  REQUIRE(server.port() != 0);
  Client client(server.port());
  REQUIRE(server.wait_for_clients(1, 2000ms));

  server.publish(telemetry::score(1.0, 2.0, 2));
  const auto line = client.read_line();
  REQUIRE_FALSE(line.empty());
  CHECK(TelemetryMessage::parse(line).type == "score");

  const auto t0 = std::chrono::steady_clock::now();
  client.send_line(R"({"type":"threshold_update","session_time_s":1,"payload":{"t_idle":0.35,"t_walk":0.65}})");
  std::vector<OperatorAction> got;
  while (got.empty() && std::chrono::steady_clock::now() - t0 < 2s) {
    got = server.poll_actions();
    if (got.empty()) std::this_thread::sleep_for(1ms);
  }
  REQUIRE(got.size() == 1);
  server.publish(telemetry::threshold_update(1.0, got[0].t_idle, got[0].t_walk, true, "operator"));
  const auto ack = client.read_line();
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  REQUIRE_FALSE(ack.empty());
  const auto msg = TelemetryMessage::parse(ack);
  CHECK(msg.type == "threshold_update");
  CHECK(msg.payload["t_idle"] == 0.35);
  CHECK(testing::schema_violation(testing::telemetry_schema(), nlohmann::json::parse(ack)) == "");
  CHECK(elapsed < 200ms);
}

TEST_CASE("malformed client lines are counted and ignored") {
  TelemetryServer server("127.0.0.1", 0);
  Client client(server.port());
  REQUIRE(server.wait_for_clients(1, 2000ms));
  client.send_line("garbage");
  client.send_line(R"({"type":"control","payload":{"action":"dance"}})");
  client.send_line(R"({"type":"control","payload":{"action":"pause"}})");
  std::vector<OperatorAction> got;
  for (int i = 0; i < 2000 && got.empty(); ++i) {
    got = server.poll_actions();
    if (got.empty()) std::this_thread::sleep_for(1ms);
  }
  REQUIRE(got.size() == 1);
  CHECK(got[0].kind == OperatorAction::Kind::Pause);
  CHECK(server.malformed_lines() == 2);
  server.publish(telemetry::score(0, 0, 0));
  CHECK_FALSE(client.read_line().empty());
}

TEST_CASE("publishing never blocks without or with a stalled client") {
  TelemetryServer server("127.0.0.1", 0, 16);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) server.publish(telemetry::score(i, 0, 0));
  Client stalled(server.port());
  REQUIRE(server.wait_for_clients(1, 2000ms));
  const std::string big(8192, 'x');
  for (int i = 0; i < 5000; ++i) server.publish(telemetry::control(i, "start", false, big));
  CHECK(std::chrono::steady_clock::now() - t0 < 5s);
  CHECK(server.dropped_lines() > 0);
  server.stop();
}
