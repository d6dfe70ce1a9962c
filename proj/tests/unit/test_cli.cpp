#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "readtrace/server.hpp"
#include "readtrace/store.hpp"
#include "support.hpp"

using namespace readtrace;
using testing::TempDir;

namespace {

struct Outcome {
  int exit = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI with a clean READTRACE_* environment plus `env`.
Outcome run(const std::vector<std::string>& args, const std::vector<std::string>& env = {}) {
  TempDir scratch;
  std::string cmd = "env";
  for (const char* v : {"CONFIG", "SEED", "DATA_DIR", "STORE_URL", "USER", "PASSWORD", "MIN_READ_SEC", "MAX_READ_SEC"})
    cmd += std::string(" -u READTRACE_") + v;
  for (const auto& e : env) cmd += " " + quote(e);
  cmd += " " + quote(READTRACE_CLI);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>" + quote((scratch / "err").string());
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = ::pclose(pipe);
  o.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.err = slurp(scratch / "err");
  return o;
}

Json jsonOf(const Outcome& o) {
  INFO(o.out);
  INFO(o.err);
  REQUIRE(o.exit == 0);
  return Json::parse(o.out);
}

std::vector<std::string> sessionRun(const std::filesystem::path& dataDir) {
  return {"session", "run", "--local", "--json", "--data-dir", dataDir.string(),
          "--layout", testing::fixture("paper_layout.json").string(), "--trace",
          testing::fixture("session_trace.jsonl").string()};
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).exit == 2);
  CHECK(run({"frobnicate"}).exit == 2);
  CHECK(run({"session"}).exit == 2);
  CHECK(run({"experiment", "run", "--nperm", "0"}).exit == 2);
  CHECK(run({"experiment", "run", "--forward-rule", "sideways", "--nperm", "1"}).exit == 2);
  CHECK(run({"--help"}).exit == 0);
}

TEST_CASE("url parse") {
  auto j = jsonOf(run({"url", "parse", "--json",
                       "peyedf://reader/Users/marco/Downloads/Yan%20et%20al%202007.pdf?rect=(200,400,200,100)&page=3"}));
  CHECK(j["mode"] == "reader");
  CHECK(j["target"] == "/Users/marco/Downloads/Yan et al 2007.pdf");
  CHECK(j["page"] == 3);
  CHECK(j["focus"]["rect"]["w"] == 200);
  auto text = run({"url", "parse", "peyedf://refinder/4c12e273e7be240f9eca1f?point=(200,200)&page=1"});
  CHECK(text.exit == 0);
  CHECK(text.out.find("sessionId") != std::string::npos);
  auto bad = run({"url", "parse", "peyedf://reader/a.pdf?rect=(1,2,3,4)"});
  CHECK(bad.exit == 2);
  CHECK(bad.err.find("page") != std::string::npos);
  CHECK(run({"url", "parse", "\x01\xff garbage"}).exit == 2);
}

TEST_CASE("session run, extract and import") {
  TempDir dir;
  auto j = jsonOf(run(sessionRun(dir.path())));
  const std::string sid = j["sessionId"];
  REQUIRE(j["events"].size() == 3);
  CHECK(j["events"][0]["@type"] == kReadingEventType);
  CHECK(j["events"][1]["@type"] == kReadingEventType);
  CHECK(j["events"][2]["@type"] == kSummaryReadingEventType);
  CHECK(j["events"][0]["start"] == 2000);
  CHECK(j["events"][0]["end"] == 10000);

  const auto file = dir / "export.json";
  auto extracted = run({"extract-json", "--local", "--data-dir", dir.path().string(), "--session", sid, "-o",
                        file.string()});
  CHECK(extracted.exit == 0);
  const auto exported = Json::parse(slurp(file));
  REQUIRE(exported.size() == 3);

  auto imported = jsonOf(run({"import-json", "--local", "--json", "--data-dir", dir.path().string(), file.string()}));
  REQUIRE(imported.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    auto a = exported[i], b = imported[i];
    CHECK(a["id"] != b["id"]);
    a.erase("id");
    b.erase("id");
    CHECK(a == b);
  }
  DimeStore store(dir.path());
  CHECK(store.eventCount() == 6);

  SUBCASE("failures exit with 1") {
    CHECK(run({"extract-json", "--local", "--data-dir", dir.path().string(), "--session", "nobody"}).exit == 1);
    TempDir empty;
    CHECK(run({"import-json", "--local", "--data-dir", empty.path().string(), file.string()}).exit == 1);
    CHECK(run({"import-json", "--local", "--data-dir", dir.path().string(), (dir / "missing.json").string()}).exit == 1);
  }
  SUBCASE("refinder dispatch finds the session") {
    auto d = jsonOf(run({"url", "dispatch", "--local", "--json", "--data-dir", dir.path().string(),
                         "peyedf://refinder/" + sid + "?page=0"}));
    CHECK(d["sessionEvents"].size() == 6);  // originals plus the imported copies
    CHECK(d["focus"]["kind"] == "pageTop");
    CHECK(d.contains("report"));
    CHECK(run({"url", "dispatch", "--local", "--data-dir", dir.path().string(), "peyedf://refinder/abcdef"}).exit == 1);
  }
}

TEST_CASE("configuration precedence: flag, environment, file, default") {
  TempDir dir;
  const auto config = dir / "config.json";
  {
    std::ofstream(config) << Json{{"seed", 3}, {"dataDir", (dir / "from-config").string()}}.dump();
  }
  auto sessionOf = [&](std::vector<std::string> extra, std::vector<std::string> env) {
    std::vector<std::string> args = {"session", "run", "--local", "--json", "--layout",
                                     testing::fixture("paper_layout.json").string(), "--trace",
                                     testing::fixture("session_trace.jsonl").string()};
    args.insert(args.end(), extra.begin(), extra.end());
    env.push_back("HOME=" + dir.path().string());
    return jsonOf(run(args, env))["sessionId"].get<std::string>();
  };
  CHECK(sessionOf({}, {}) == SessionIdGenerator(1).next());
  CHECK(std::filesystem::exists(dir / ".dime" / "records.jsonl"));
  CHECK(sessionOf({"--config", config.string()}, {}) == SessionIdGenerator(3).next());
  CHECK(std::filesystem::exists(dir / "from-config" / "records.jsonl"));
  CHECK(sessionOf({}, {"READTRACE_CONFIG=" + config.string()}) == SessionIdGenerator(3).next());
  CHECK(sessionOf({"--config", config.string()}, {"READTRACE_SEED=5"}) == SessionIdGenerator(5).next());
  CHECK(sessionOf({"--config", config.string(), "--seed", "7"}, {"READTRACE_SEED=5"}) == SessionIdGenerator(7).next());
  CHECK(sessionOf({"--session-id", "chosen"}, {"READTRACE_SEED=5"}) == "chosen");

  auto base = sessionRun(dir / "x");
  CHECK(run(base, {"READTRACE_SEED=abc"}).exit == 2);
  auto missing = base;
  missing.insert(missing.end(), {"--config", (dir / "nope.json").string()});
  CHECK(run(missing).exit == 2);
  CHECK(run(base, {"READTRACE_MIN_READ_SEC=-1"}).exit != 0);

  // A longer entry delay from the environment moves the first event's start.
  auto slow = jsonOf(run(sessionRun(dir / "y"), {"READTRACE_MIN_READ_SEC=4"}));
  CHECK(slow["events"][0]["start"] == 4000);
  auto flagWins = base;
  flagWins.insert(flagWins.end(), {"--min-read-sec", "3"});
  CHECK(jsonOf(run(flagWins, {"READTRACE_MIN_READ_SEC=4"}))["events"][0]["start"] == 3000);
}

TEST_CASE("talking to a store over HTTP") {
  TempDir dir;
  DimeStore store(dir.path());
  ServerOptions opts;
  opts.port = 0;
  DimeServer server(store, opts);
  const int port = server.start();
  const std::string url = "http://127.0.0.1:" + std::to_string(port);

  std::vector<std::string> args = {"session", "run", "--json", "--store-url", url, "--layout",
                                   testing::fixture("paper_layout.json").string(), "--trace",
                                   testing::fixture("session_trace.jsonl").string(), "--tracker",
                                   "replay:" + testing::fixture("fixations.jsonl").string()};
  auto j = jsonOf(run(args));
  CHECK(j["events"].size() >= 2);
  CHECK(store.eventCount() == j["events"].size());

  auto wrong = args;
  wrong.insert(wrong.end(), {"--password", "nope"});
  CHECK(run(wrong).exit == 1);
  CHECK(run(args, {"READTRACE_PASSWORD=nope"}).exit == 1);

  SUBCASE("a busy port cannot be served") {
    auto busy = run({"serve", "--local", "--data-dir", (dir / "other").string(), "--port", std::to_string(port)});
    CHECK(busy.exit == 1);
  }
  server.stop();
  CHECK(run(args).exit == 1);
}

TEST_CASE("experiment commands") {
  TempDir dir;
  CHECK(run({"experiment", "synthesize", "--seed", "4", "-o", (dir / "study").string()}).exit == 0);
  const auto results = dir / "results.json";
  auto r = jsonOf(run({"experiment", "run", "--json", "--data", (dir / "study").string(), "--nperm", "3", "--permute",
                       "All", "-o", results.string()}));
  CHECK(r["records"] == 336);
  CHECK(slurp(results) == r.dump(2) + "\n");
  auto report = run({"experiment", "report", results.string()});
  CHECK(report.exit == 0);
  CHECK(report.out.find("All") != std::string::npos);
  CHECK(run({"experiment", "report", (dir / "none.json").string()}).exit == 1);
}
