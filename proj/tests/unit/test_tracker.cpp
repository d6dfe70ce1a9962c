#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <fstream>

#include "readtrace/session.hpp"
#include "readtrace/tracker.hpp"
#include "support.hpp"

using namespace readtrace;
using testing::Gen;

namespace {

std::string line(double x, double y, TimestampMs t, double dur = 200) {
  FixationEvent f;
  f.screenPoint = {x, y};
  f.durationMs = dur;
  f.timestampMs = t;
  return toJson(f).dump();
}

std::vector<FixationEvent> fixationsOf(const std::vector<ProviderMessage>& msgs) {
  std::vector<FixationEvent> out;
  for (const auto& m : msgs)
    if (const auto* f = std::get_if<FixationEvent>(&m)) out.push_back(*f);
  return out;
}

template <typename T>
std::size_t countOf(const std::vector<ProviderMessage>& msgs) {
  return static_cast<std::size_t>(
      std::count_if(msgs.begin(), msgs.end(), [](const ProviderMessage& m) { return std::holds_alternative<T>(m); }));
}

// Exposes the protected reporting helpers.
class ManualProvider final : public EyeDataProvider {
 public:
  ManualProvider() : EyeDataProvider("manual") {}
  void start() override { markStarted(); }
  void stop() override { markStopped(); }
  using EyeDataProvider::eyeConnectionChange;
  using EyeDataProvider::eyeStateChange;
  using EyeDataProvider::sendFixations;
};

struct RecordingDelegate final : FixationDelegate {
  std::vector<std::string> calls;
  void sendFixations(std::span<const FixationEvent> f) override { calls.push_back("fix" + std::to_string(f.size())); }
  void eyeStateChange(bool lost, TimestampMs) override { calls.push_back(lost ? "lost" : "regained"); }
  void eyeConnectionChange(bool available) override { calls.push_back(available ? "up" : "down"); }
};

// Loopback server: each accepted connection receives the next payload and is closed; then the listener goes away.
class LoopbackServer {
 public:
  explicit LoopbackServer(std::vector<std::string> payloads) : payloads_(std::move(payloads)) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(fd_, 4) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] {
      for (const auto& p : payloads_) {
        int c = ::accept(fd_, nullptr, nullptr);
        if (c < 0) return;
        std::size_t sent = 0;
        while (sent < p.size()) {
          auto n = ::send(c, p.data() + sent, p.size() - sent, MSG_NOSIGNAL);
          if (n <= 0) break;
          sent += static_cast<std::size_t>(n);
        }
        ::close(c);
      }
      closeListener();
    });
  }
  ~LoopbackServer() {
    closeListener();
    if (thread_.joinable()) thread_.join();
  }
  std::uint16_t port() const { return port_; }

 private:
  void closeListener() {
    int fd = fd_.exchange(-1);
    if (fd < 0) return;
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }

  std::vector<std::string> payloads_;
  std::atomic<int> fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

std::uint16_t closedPort() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

DocumentLayout onePage() {
  PageLayout page{{612, 792}, "", {}};
  page.textBlocks.push_back(TextBlock{Rect({72, 600}, {468, 120}, 0), "alpha beta", true, true});
  page.textBlocks.push_back(TextBlock{Rect({72, 300}, {468, 200}, 0), "gamma delta", true, true});
  return DocumentLayout({page, page}, "one", 10);
}

SyntheticScript dwellScript(int fixations) {
  SyntheticScript s;
  s.viewport = {{0, 0}, {612, 792}, 1.0};
  s.steps.push_back(SyntheticScript::Dwell{0, std::nullopt, Rect({100, 320}, {200, 150}, 0), fixations});
  s.steps.push_back(SyntheticScript::Pause{1000});
  s.steps.push_back(SyntheticScript::Dwell{0, std::size_t{0}, std::nullopt, 4});
  return s;
}

}  // namespace

TEST_CASE("fixation wire format") {
  FixationEvent f;
  f.screenPoint = {1.5, 2.25};
  f.durationMs = 180;
  f.pupilSize = 3.5;
  f.eyeDistanceCm = 58;
  f.timestampMs = 1234;
  CHECK(fixationFromJson(toJson(f)) == f);
  f.eyeDistanceCm.reset();
  CHECK(parseFixationLine(toJson(f).dump()) == f);
  CHECK_THROWS_AS(parseFixationLine("{\"y\":1,\"durationMs\":1,\"tMs\":0}"), ParseError);
  CHECK_THROWS_AS(parseFixationLine("{\"x\":1,\"y\":1,\"durationMs\":0,\"tMs\":0}"), ParseError);
  CHECK_THROWS_AS(parseFixationLine("{\"x\":1,\"y\":1,\"durationMs\":5,\"tMs\":0.5}"), ParseError);
  CHECK_THROWS_AS(parseFixationLine("{\"x\":1,\"y\":1,\"durationMs\":5,\"tMs\":0,\"distanceCm\":-2}"), ParseError);
  CHECK_THROWS_AS(parseFixationLine("nope"), ParseError);
}

TEST_CASE("eyes-lost detector") {
  EyesLostDetector d(8000);
  FixationEvent f;
  f.durationMs = 200;
  f.timestampMs = 0;
  CHECK(d.observe(f).empty());
  f.timestampMs = 8200;  // gap of exactly the threshold after the first ends
  CHECK(d.observe(f).empty());
  f.timestampMs = 20000;
  auto t = d.observe(f);
  REQUIRE(t.size() == 2);
  CHECK(t[0].eyesLost);
  CHECK(t[0].at == 8400 + 8000);
  CHECK_FALSE(t[1].eyesLost);
  CHECK(t[1].at == 20000);
}

TEST_CASE("provider contract: no callbacks outside start/stop; eye state is edge-triggered") {
  ManualProvider p;
  RecordingDelegate d;
  p.setDelegate(&d);
  FixationEvent f;
  f.durationMs = 100;
  p.sendFixations(std::span(&f, 1));
  p.eyeConnectionChange(true);
  CHECK(d.calls.empty());

  p.start();
  p.eyeStateChange(true, 0);  // not available yet: lost cannot be reported
  p.eyeConnectionChange(true);
  p.eyeConnectionChange(true);
  p.eyeStateChange(true, 1);
  p.eyeStateChange(true, 2);
  CHECK(p.state().eyesLost);
  CHECK(p.state().available);
  p.eyeStateChange(false, 3);
  p.eyeStateChange(false, 4);
  p.sendFixations(std::span(&f, 1));
  p.stop();
  CHECK_FALSE(p.state().available);
  p.sendFixations(std::span(&f, 1));
  p.eyeConnectionChange(false);
  CHECK(d.calls == std::vector<std::string>{"up", "lost", "regained", "fix1"});
}

TEST_CASE("replay source") {
  SUBCASE("three fixations as fast as possible") {
    ReplaySource src({line(1, 1, 0), line(2, 2, 300), line(3, 3, 600)});
    auto msgs = collectAll(src);
    auto fixes = fixationsOf(msgs);
    REQUIRE(fixes.size() == 3);
    CHECK(fixes[0].screenPoint.x == 1);
    CHECK(fixes[2].timestampMs == 600);
    CHECK(std::get<ConnectionMessage>(msgs.front()).available);
    CHECK(std::holds_alternative<EndOfStreamMessage>(msgs.back()));
    CHECK(countOf<EyeStateMessage>(msgs) == 0);
  }
  SUBCASE("a long gap reports lost then regained") {
    ReplaySource src({line(1, 1, 0), line(2, 2, 20000)});
    auto msgs = collectAll(src);
    std::vector<std::string> order;
    for (const auto& m : msgs) {
      if (std::holds_alternative<FixationEvent>(m)) order.push_back("fix");
      if (const auto* s = std::get_if<EyeStateMessage>(&m)) order.push_back(s->eyesLost ? "lost" : "regained");
    }
    CHECK(order == std::vector<std::string>{"fix", "lost", "regained", "fix"});
  }
  SUBCASE("empty input ends at once") {
    ReplaySource src({});
    auto msgs = collectAll(src);
    CHECK(fixationsOf(msgs).empty());
    CHECK(std::holds_alternative<EndOfStreamMessage>(msgs.back()));
  }
  SUBCASE("a malformed line reports an error and stops") {
    ReplaySource src({line(1, 1, 0), "{broken", line(3, 3, 600)});
    auto msgs = collectAll(src);
    CHECK(fixationsOf(msgs).size() == 1);
    CHECK(countOf<ErrorMessage>(msgs) == 1);
    CHECK(std::holds_alternative<EndOfStreamMessage>(msgs.back()));
  }
  SUBCASE("finite speed paces the stream") {
    ReplaySource src({line(1, 1, 0), line(2, 2, 1000), line(3, 3, 2000)}, 10.0);
    const auto begin = std::chrono::steady_clock::now();
    auto msgs = collectAll(src);
    const auto elapsed = std::chrono::steady_clock::now() - begin;
    CHECK(fixationsOf(msgs).size() == 3);
    CHECK(elapsed >= std::chrono::milliseconds(190));
  }
  SUBCASE("stop halts delivery") {
    std::vector<std::string> lines;
    for (int i = 0; i < 100; ++i) lines.push_back(line(i, i, i * 1000));
    ReplaySource src(lines, 20.0);
    QueueingDelegate d;
    src.setDelegate(&d);
    src.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(120));
    src.stop();
    const auto delivered = d.queue().size();
    std::this_thread::sleep_for(std::chrono::milliseconds(120));
    CHECK(d.queue().size() == delivered);
    CHECK(delivered < 100);
  }
  CHECK_THROWS(ReplaySource::fromFile(testing::fixture("missing.jsonl")));
}

TEST_CASE("socket source") {
  SocketSourceOptions fast;
  fast.maxReconnectAttempts = 0;
  fast.initialBackoffMs = 10;

  SUBCASE("100 fixations arrive in order, then the disconnect is signalled") {
    std::string payload;
    for (int i = 0; i < 100; ++i) payload += line(i, 2 * i, 100 * i) + "\n";
    LoopbackServer server({payload});
    SocketSource src("127.0.0.1", server.port(), fast);
    auto msgs = collectAll(src);
    auto fixes = fixationsOf(msgs);
    REQUIRE(fixes.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(fixes[static_cast<std::size_t>(i)].timestampMs == 100 * i);
    CHECK(src.delivered() == 100);
    CHECK(src.dropped() == 0);
    std::vector<bool> connection;
    for (const auto& m : msgs)
      if (const auto* c = std::get_if<ConnectionMessage>(&m)) connection.push_back(c->available);
    CHECK(connection == std::vector<bool>{true, false});
  }
  SUBCASE("a garbage line is dropped and counted") {
    LoopbackServer server({line(1, 1, 0) + "\n<<garbage>>\n" + line(2, 2, 100) + "\n"});
    SocketSource src("127.0.0.1", server.port(), fast);
    auto msgs = collectAll(src);
    CHECK(fixationsOf(msgs).size() == 2);
    CHECK(src.received() == 3);
    CHECK(src.dropped() == 1);
  }
  SUBCASE("lines split across reads are reassembled") {
    std::string payload;
    for (int i = 0; i < 2000; ++i) payload += line(i * 1.25, i * 0.5, i) + "\n";
    LoopbackServer server({payload});
    SocketSource src("127.0.0.1", server.port(), fast);
    CHECK(fixationsOf(collectAll(src)).size() == 2000);
  }
  SUBCASE("reconnects after the server closes") {
    LoopbackServer server({line(1, 1, 0) + "\n", line(2, 2, 100) + "\n"});
    SocketSourceOptions retry = fast;
    retry.maxReconnectAttempts = 2;
    SocketSource src("127.0.0.1", server.port(), retry);
    auto msgs = collectAll(src);
    CHECK(fixationsOf(msgs).size() == 2);
    const auto transitions = countOf<ConnectionMessage>(msgs);
    CHECK(transitions >= 4);
    CHECK(transitions % 2 == 0);
    CHECK(std::holds_alternative<EndOfStreamMessage>(msgs.back()));
  }
  SUBCASE("connection refused: never available, gives up after bounded retries") {
    SocketSourceOptions retry = fast;
    retry.maxReconnectAttempts = 3;
    SocketSource src("127.0.0.1", closedPort(), retry);
    const auto begin = std::chrono::steady_clock::now();
    auto msgs = collectAll(src);
    CHECK(std::chrono::steady_clock::now() - begin < std::chrono::seconds(5));
    CHECK(countOf<ConnectionMessage>(msgs) == 0);
    CHECK(std::holds_alternative<EndOfStreamMessage>(msgs.back()));
    CHECK_FALSE(src.state().available);
  }
}

TEST_CASE("synthetic source") {
  auto layout = onePage();
  const ViewportState view{{0, 0}, {612, 792}, 1.0};

  SUBCASE("dwelling on a rect puts the fixations inside it") {
    auto fixes = generateFixations(layout, dwellScript(3), 1);
    REQUIRE(fixes.size() == 7);
    const Rect target({100, 320}, {200, 150}, 0);
    for (int i = 0; i < 3; ++i) {
      auto p = screenToPage(fixes[static_cast<std::size_t>(i)].screenPoint, view, layout);
      REQUIRE(p);
      CHECK(p->pageIndex == 0);
      CHECK(target.contains(p->point));
    }
    CHECK(fixes[3].timestampMs - fixes[2].timestampMs >= 1000);
  }
  SUBCASE("same seed, same stream; new seed, new stream with the same totals") {
    auto a = generateFixations(layout, dwellScript(6), 5);
    CHECK(a == generateFixations(layout, dwellScript(6), 5));
    CHECK(a != generateFixations(layout, dwellScript(6), 6));
    double meanDuration = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto f = generateFixations(layout, dwellScript(6), seed);
      REQUIRE(f.size() == 10);
      double total = 0;
      for (const auto& x : f) total += x.durationMs;
      meanDuration += total / 10 / 100;
    }
    CHECK(meanDuration == doctest::Approx(230).epsilon(0.05));
  }
  SUBCASE("the threaded source reports the generated stream") {
    SyntheticSource src(layout, dwellScript(5), 9);
    auto fixes = fixationsOf(collectAll(src));
    CHECK(fixes == generateFixations(layout, dwellScript(5), 9));
  }
  SUBCASE("scripts referencing missing targets fail before start") {
    auto s = dwellScript(2);
    s.steps.push_back(SyntheticScript::Dwell{0, std::size_t{7}, std::nullopt, 1});
    CHECK_THROWS_AS(SyntheticSource(layout, s, 1), ScriptError);
    auto off = dwellScript(2);
    off.steps.push_back(SyntheticScript::Dwell{3, std::size_t{0}, std::nullopt, 1});
    CHECK_THROWS_AS(generateFixations(layout, off, 1), ScriptError);
    auto hidden = dwellScript(2);
    hidden.steps.push_back(SyntheticScript::Dwell{1, std::size_t{0}, std::nullopt, 1});  // page 1 is off-screen
    CHECK_THROWS_AS(generateFixations(layout, hidden, 1), ScriptError);
  }
  SUBCASE("script json") {
    auto s = loadScript(testing::fixture("reading_script.json"));
    CHECK(s.startMs == 2500);
    CHECK(s.steps.size() == 7);
    CHECK(s.sdFixationMs == 50);
    CHECK_THROWS_AS(scriptFromJson(Json{{"steps", Json::array()}}), ScriptError);
    CHECK_THROWS_AS(scriptFromJson(Json::parse(R"({"viewport":{"width":10,"height":10},"steps":[{"page":0}]})")),
                    ScriptError);
    CHECK_THROWS_AS(loadScript(testing::fixture("nope.json")), ScriptError);
  }
}

TEST_CASE("provider output is in timestamp order") {
  auto layout = loadLayout(testing::fixture("paper_layout.json"));
  auto script = loadScript(testing::fixture("reading_script.json"));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSource src(layout, script, seed);
    TimestampMs last = 0;
    for (const auto& m : collectAll(src)) {
      TimestampMs t = last;
      if (const auto* f = std::get_if<FixationEvent>(&m)) t = f->timestampMs;
      if (const auto* s = std::get_if<EyeStateMessage>(&m)) t = s->at;
      REQUIRE(t >= last);
      last = t;
    }
  }
}

TEST_CASE("bounded queue drops the oldest fixation, never control messages") {
  ProviderQueue q(3);
  FixationEvent f;
  f.durationMs = 1;
  f.timestampMs = 1;
  q.push(f);
  q.push(ConnectionMessage{true});
  f.timestampMs = 2;
  q.push(f);
  f.timestampMs = 3;
  q.push(f);  // drops fixation 1
  CHECK(q.dropped() == 1);
  CHECK(q.size() == 3);
  CHECK(std::holds_alternative<ConnectionMessage>(*q.pop()));
  CHECK(std::get<FixationEvent>(*q.pop()).timestampMs == 2);

  ProviderQueue control(1);
  control.push(EndOfStreamMessage{});
  control.push(ErrorMessage{"x"});  // nothing droppable: grows
  CHECK(control.size() == 2);
  CHECK(control.dropped() == 0);

  ProviderQueue empty(2);
  CHECK_FALSE(empty.pop(std::chrono::milliseconds(10)));
  empty.close();
  CHECK_FALSE(empty.pop());
}

TEST_CASE("bounded queue under concurrent producers keeps per-producer order") {
  ProviderQueue q(1 << 16);
  constexpr int kProducers = 4, kEach = 2000;
  std::vector<std::thread> producers;
  for (int p = 0; p < kProducers; ++p) {
    producers.emplace_back([&q, p] {
      for (int i = 0; i < kEach; ++i) {
        FixationEvent f;
        f.durationMs = 1;
        f.screenPoint = {double(p), 0};
        f.timestampMs = i;
        q.push(f);
      }
    });
  }
  std::vector<TimestampMs> last(kProducers, -1);
  int seen = 0;
  while (seen < kProducers * kEach) {
    auto m = q.pop(std::chrono::milliseconds(2000));
    REQUIRE(m);
    const auto& f = std::get<FixationEvent>(*m);
    auto& prev = last[static_cast<std::size_t>(f.screenPoint.x)];
    REQUIRE(f.timestampMs == prev + 1);
    prev = f.timestampMs;
    ++seen;
  }
  for (auto& t : producers) t.join();
}

TEST_CASE("serial lane runs tasks in order and reports failures at drain") {
  SerialLane lane;
  std::vector<int> order;
  for (int i = 0; i < 100; ++i) lane.post([&order, i] { order.push_back(i); });
  lane.drain();
  REQUIRE(order.size() == 100);
  CHECK(std::is_sorted(order.begin(), order.end()));
  lane.post([] { throw std::runtime_error("boom"); });
  CHECK_THROWS_AS(lane.drain(), std::runtime_error);
  lane.post([&order] { order.push_back(100); });
  lane.drain();
  CHECK(order.back() == 100);
}
