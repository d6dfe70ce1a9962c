// readtrace: command-line front end for the store, session engine, URL
// handler and the synthetic comprehension experiment.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "readtrace/analytics/experiment.hpp"
#include "readtrace/analytics/refinder.hpp"
#include "readtrace/layout.hpp"
#include "readtrace/serialize.hpp"
#include "readtrace/server.hpp"
#include "readtrace/session.hpp"
#include "readtrace/store.hpp"
#include "readtrace/tracker.hpp"
#include "readtrace/url.hpp"

namespace fs = std::filesystem;
using namespace readtrace;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Settings shared by several commands. Each is resolved as
// flag > READTRACE_* environment variable > config file > default.
struct Settings {
  std::optional<std::string> configFile;
  std::optional<std::string> storeUrl, user, password, dataDir;
  std::optional<std::uint64_t> seed;
  std::optional<double> pointsPerCm, eyeDistanceCm, minReadSec, maxReadSec;
  bool json = false;
  bool local = false;
};

class Resolver {
 public:
  explicit Resolver(const Settings& s) : s_(s) {
    std::optional<std::string> path = s.configFile;
    if (!path) path = env("CONFIG");
    if (path) {
      std::ifstream in(*path);
      if (!in) throw UsageError("cannot read config file '" + *path + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      file_ = parseJson(ss.str(), "config");
      if (!file_.is_object()) throw UsageError("config file must hold a JSON object");
    }
  }

  std::string storeUrl() const { return text(s_.storeUrl, "STORE_URL", "storeUrl", "http://localhost:8080"); }
  std::string user() const { return text(s_.user, "USER", "user", "Test1"); }
  std::string password() const { return text(s_.password, "PASSWORD", "password", "123456"); }
  fs::path dataDir() const { return text(s_.dataDir, "DATA_DIR", "dataDir", DimeStore::defaultDataDir().string()); }
  std::uint64_t seed() const {
    if (s_.seed) return *s_.seed;
    if (auto e = env("SEED")) return parseNumber<std::uint64_t>(*e, "READTRACE_SEED");
    if (file_.contains("seed")) return file_.at("seed").get<std::uint64_t>();
    return 1;
  }

  ViewGeometry geometry() const {
    ViewGeometry g;
    g.pointsPerCentimeter = number(s_.pointsPerCm, "POINTS_PER_CM", "pointsPerCm", g.pointsPerCentimeter);
    g.eyeDistanceCm = number(s_.eyeDistanceCm, "EYE_DISTANCE_CM", "eyeDistanceCm", g.eyeDistanceCm);
    g.validate();
    return g;
  }

  TimerConfig timers() const {
    TimerConfig t;
    t.minReadTimeSec = number(s_.minReadSec, "MIN_READ_SEC", "minReadSec", t.minReadTimeSec);
    t.maxReadTimeSec = number(s_.maxReadSec, "MAX_READ_SEC", "maxReadSec", t.maxReadTimeSec);
    t.validate();
    return t;
  }

  std::unique_ptr<DimeApi> store() const {
    if (s_.local) return std::make_unique<DimeStore>(dataDir());
    return std::make_unique<DimeClient>(storeUrl(), user(), password());
  }

 private:
  static std::optional<std::string> env(const char* name) {
    const std::string full = std::string("READTRACE_") + name;
    if (const char* v = std::getenv(full.c_str()); v && *v) return std::string(v);
    return std::nullopt;
  }

  template <typename T>
  static T parseNumber(const std::string& text, const std::string& what) {
    std::istringstream in(text);
    T v{};
    if (!(in >> v) || !in.eof()) throw UsageError(what + ": not a number: '" + text + "'");
    return v;
  }

  std::string text(const std::optional<std::string>& flag, const char* envName, const char* key,
                    const std::string& fallback) const {
    if (flag) return *flag;
    if (auto e = env(envName)) return *e;
    if (file_.contains(key)) return file_.at(key).get<std::string>();
    return fallback;
  }

  double number(const std::optional<double>& flag, const char* envName, const char* key, double fallback) const {
    if (flag) return *flag;
    if (auto e = env(envName)) return parseNumber<double>(*e, std::string("READTRACE_") + envName);
    if (file_.contains(key)) return file_.at(key).get<double>();
    return fallback;
  }

  const Settings& s_;
  Json file_ = Json::object();
};

std::string readFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeFile(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed for " + p.string());
}

Json eventArray(const std::vector<AnyEvent>& events) {
  Json arr = Json::array();
  for (const auto& e : events) arr.push_back(toJson(e));
  return arr;
}

// ---------------------------------------------------------------------------
// serve

volatile std::sig_atomic_t gStop = 0;
extern "C" void onSignal(int) { gStop = 1; }

int cmdServe(const Resolver& r, const std::string& host, int port) {
  const auto dir = r.dataDir();
  DimeStore store(dir);
  ServerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.username = r.user();
  opts.password = r.password();
  DimeServer server(store, opts);
  const int bound = server.bind();

  std::signal(SIGINT, onSignal);
  std::signal(SIGTERM, onSignal);
  std::thread worker([&] { server.run(); });
  std::cout << "store started on http://" << host << ":" << bound << " (data " << dir.string() << ", "
            << store.elementCount() << " elements, " << store.eventCount() << " events)" << std::endl;
  while (!gStop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  worker.join();
  std::cout << "store stopped" << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// session run

std::vector<ProviderMessage> trackerMessages(const std::string& spec, const DocumentLayout& layout,
                                             std::uint64_t seed) {
  if (spec.empty() || spec == "none") return {};
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (arg.empty()) throw UsageError("--tracker expects none, replay:FILE, synthetic:SCRIPT or socket:HOST:PORT");
  std::unique_ptr<EyeDataProvider> source;
  if (kind == "replay") {
    source = ReplaySource::fromFile(arg);
  } else if (kind == "synthetic") {
    source = std::make_unique<SyntheticSource>(layout, loadScript(arg), seed);
  } else if (kind == "socket") {
    const auto c = arg.rfind(':');
    if (c == std::string::npos) throw UsageError("socket tracker needs HOST:PORT");
    int port = 0;
    try {
      port = std::stoi(arg.substr(c + 1));
    } catch (const std::exception&) {
      throw UsageError("bad port in '" + arg + "'");
    }
    if (port <= 0 || port > 65535) throw UsageError("bad port in '" + arg + "'");
    source = std::make_unique<SocketSource>(arg.substr(0, c), static_cast<std::uint16_t>(port));
  } else {
    throw UsageError("unknown tracker kind '" + kind + "'");
  }
  return collectAll(*source);
}

struct SessionArgs {
  std::string layout, trace, tracker = "none", sessionId, uri;
};

int cmdSessionRun(const Resolver& r, bool json, const SessionArgs& a) {
  const auto layoutPath = fs::absolute(a.layout).lexically_normal();
  const auto layout = loadLayout(layoutPath);
  const auto trace = loadTrace(a.trace);
  const auto seed = r.seed();
  const auto messages = trackerMessages(a.tracker, layout, seed);

  SessionConfig config;
  config.timers = r.timers();
  config.geometry = r.geometry();

  auto store = r.store();
  const auto doc = store->postElement(layout.toDocument(a.uri.empty() ? layoutPath.string() : a.uri));
  const std::string sessionId = a.sessionId.empty() ? SessionIdGenerator(seed).next() : a.sessionId;
  const auto result = replaySession(layout, *doc.id, sessionId, trace, messages, config);

  std::vector<AnyEvent> posted;
  for (const auto& e : result.events) posted.push_back(store->postEvent(e));

  if (json) {
    std::cout << Json{{"sessionId", sessionId},
                      {"documentId", *doc.id},
                      {"droppedFixations", result.droppedFixations},
                      {"events", eventArray(posted)}}
                     .dump(2)
              << "\n";
    return 0;
  }
  int reading = 0, summaries = 0;
  for (const auto& e : posted) (std::holds_alternative<ReadingEvent>(e) ? reading : summaries)++;
  std::cout << "session " << sessionId << " on document " << *doc.id << " (" << layout.title() << ")\n"
            << "  posted " << reading << " reading events and " << summaries << " summary\n";
  if (result.droppedFixations > 0) std::cout << "  dropped " << result.droppedFixations << " off-screen fixations\n";
  return 0;
}

// ---------------------------------------------------------------------------
// extract-json / import-json

int cmdExtract(const Resolver& r, bool json, const std::string& session, const std::string& out) {
  auto store = r.store();
  EventFilter f;
  f.sessionId = session;
  const auto events = store->events(f);
  if (events.empty()) throw StoreError(StoreError::Code::notFound, "no events for session " + session);
  const auto text = eventArray(events).dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    writeFile(out, text);
    if (json) {
      std::cout << Json{{"session", session}, {"events", events.size()}, {"file", out}}.dump() << "\n";
    } else {
      std::cout << "wrote " << events.size() << " events of session " << session << " to " << out << "\n";
    }
  }
  return 0;
}

int cmdImport(const Resolver& r, bool json, const std::string& in) {
  const Json arr = parseJson(readFile(in), in);
  if (!arr.is_array()) throw ParseError(in, "expected a JSON array of events");
  auto store = r.store();
  std::vector<AnyEvent> posted;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    AnyEvent e = [&] {
      try {
        return eventFromJson(arr[i]);
      } catch (const ParseError& err) {
        throw ParseError("[" + std::to_string(i) + "]." + err.field(), err.what());
      }
    }();
    std::visit([](auto& ev) { ev.id.reset(); }, e);
    posted.push_back(store->postEvent(e));
  }
  if (json) {
    std::cout << eventArray(posted).dump(2) << "\n";
  } else {
    std::cout << "imported " << posted.size() << " events from " << in << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// url

std::string describeFocus(const FocusInstruction& f) {
  std::ostringstream o;
  switch (f.kind) {
    case FocusInstruction::Kind::none: return "none";
    case FocusInstruction::Kind::pageTop: o << "top of page " << f.page; break;
    case FocusInstruction::Kind::rect:
      o << "rect " << f.rect->x << "," << f.rect->y << "," << f.rect->w << "," << f.rect->h << " on page " << f.page;
      break;
    case FocusInstruction::Kind::point: o << "point " << f.point->x << "," << f.point->y << " on page " << f.page; break;
  }
  return o.str();
}

int cmdUrlParse(bool json, const std::string& url) {
  PeyeRequest req;
  try {
    req = parsePeyeUrl(url);
  } catch (const UrlError& e) {
    throw UsageError(std::string("invalid URL: ") + e.what());
  }
  const Json j = toJson(req);
  if (json) {
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << "mode    " << modeName(req.mode) << "\n"
            << "target  " << req.target << " (" << targetKindName(req.targetKind) << ")\n";
  if (req.search) std::cout << "search  " << req.search->query << (req.search->exactPhrase ? " (exact phrase)" : "") << "\n";
  if (req.page) std::cout << "page    " << *req.page << "\n";
  if (req.focus) std::cout << "focus   " << j.at("focus").dump() << "\n";
  return 0;
}

int cmdUrlDispatch(const Resolver& r, bool json, const std::string& url) {
  PeyeRequest req;
  try {
    req = parsePeyeUrl(url);
  } catch (const UrlError& e) {
    throw UsageError(std::string("invalid URL: ") + e.what());
  }
  auto store = r.store();
  const auto outcome = dispatch(req, *store);

  // A refinder session over a document whose uri is a readable layout file
  // also gets its per-class coverage.
  std::optional<analytics::RefinderReport> report;
  if (outcome.mode == UrlMode::refinder && outcome.document && fs::is_regular_file(outcome.document->uri)) {
    try {
      report = analytics::refinderReport(outcome.sessionEvents, loadLayout(outcome.document->uri));
    } catch (const std::exception&) {
      report.reset();
    }
  }

  if (json) {
    Json j = toJson(outcome);
    if (report) j["report"] = analytics::toJson(*report);
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << modeName(outcome.mode) << ": " << targetKindName(outcome.resolvedAs) << " " << req.target << "\n";
  if (outcome.document) {
    std::cout << "  document " << *outcome.document->id << " " << outcome.document->title << " ("
              << outcome.document->uri << ")" << (outcome.registered ? " [registered]" : "") << "\n";
  }
  if (outcome.sessionId) {
    int reading = 0;
    for (const auto& e : outcome.sessionEvents) reading += std::holds_alternative<ReadingEvent>(e) ? 1 : 0;
    std::cout << "  session " << *outcome.sessionId << ": " << outcome.sessionEvents.size() << " events, " << reading
              << " reading\n";
  }
  if (outcome.search) {
    std::cout << "  search " << outcome.search->query << (outcome.search->exactPhrase ? " (exact phrase)" : "")
              << "\n";
  }
  std::cout << "  focus " << describeFocus(outcome.focus) << "\n";
  if (report) std::cout << analytics::formatReport(*report);
  return 0;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentArgs {
  std::string dir, data, out, results;
  int nPerm = 1000;
  unsigned threads = 1;
  std::vector<std::string> permute = {"Eye", "Topic", "All"};
  std::string forwardRule = "reading-order";
};

int cmdSynthesize(const Resolver& r, bool json, const ExperimentArgs& a) {
  const auto data = analytics::synthesizeExperiment({}, r.seed());
  analytics::writeExperiment(data, a.dir);
  std::size_t valid = 0;
  for (const auto& p : data.participants) valid += analytics::isValid(p) ? 1 : 0;
  if (json) {
    std::cout << Json{{"dir", a.dir}, {"seed", data.seed}, {"participants", data.participants.size()},
                      {"valid", valid}, {"answers", data.answers.size()}}
                     .dump()
              << "\n";
  } else {
    std::cout << "wrote synthetic study (seed " << data.seed << ", " << data.participants.size() << " participants, "
              << valid << " valid, " << data.answers.size() << " answers) to " << a.dir << "\n";
  }
  return 0;
}

int cmdExperimentRun(const Resolver& r, bool json, const ExperimentArgs& a) {
  const auto seed = r.seed();
  const auto data = a.data.empty() ? analytics::synthesizeExperiment({}, seed) : analytics::loadExperiment(a.data);
  analytics::RunOptions opts;
  opts.nPerm = a.nPerm;
  opts.seed = seed;
  opts.permute = a.permute;
  opts.threads = a.threads;
  opts.forwardRule = a.forwardRule == "literal" ? analytics::ForwardRule::literal
                                                : analytics::ForwardRule::readingOrder;
  if (a.forwardRule != "literal" && a.forwardRule != "reading-order") {
    throw UsageError("--forward-rule must be reading-order or literal");
  }
  opts.svm.seed = seed;
  const auto results = analytics::runExperiment(data, opts);
  const auto text = analytics::toJson(results).dump(2) + "\n";
  if (!a.out.empty()) writeFile(a.out, text);
  if (json) {
    std::cout << text;
  } else {
    std::cout << analytics::formatResults(results);
    if (!a.out.empty()) std::cout << "results written to " << a.out << "\n";
  }
  return 0;
}

int cmdReport(bool json, const ExperimentArgs& a) {
  const auto results = analytics::resultsFromJson(parseJson(readFile(a.results), a.results));
  if (json) {
    std::cout << analytics::toJson(results).dump(2) << "\n";
  } else {
    std::cout << analytics::formatResults(results);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"readtrace: reading sessions, gaze analytics and a personal data store"};
  app.require_subcommand(1);
  Settings s;

  auto shared = [&s](CLI::App* c, bool storeAccess) {
    c->add_option("--config", s.configFile, "JSON config file (env READTRACE_CONFIG)");
    c->add_flag("--json", s.json, "machine-readable output");
    c->add_option("--seed", s.seed, "random seed (env READTRACE_SEED, default 1)");
    if (storeAccess) {
      c->add_option("--store-url", s.storeUrl, "store base URL (env READTRACE_STORE_URL)");
      c->add_option("--user", s.user, "store user (env READTRACE_USER)");
      c->add_option("--password", s.password, "store password (env READTRACE_PASSWORD)");
      c->add_option("--data-dir", s.dataDir, "store data directory (env READTRACE_DATA_DIR)");
      c->add_flag("--local", s.local, "open the data directory directly instead of talking HTTP");
    }
  };

  std::function<int(const Resolver&)> action;

  auto* serve = app.add_subcommand("serve", "run the store's HTTP service");
  shared(serve, true);
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "listen address");
  serve->add_option("--port", port, "listen port (0 = any free port)");
  serve->callback([&] { action = [&](const Resolver& r) { return cmdServe(r, host, port); }; });

  auto* session = app.add_subcommand("session", "reading sessions");
  session->require_subcommand(1);
  auto* sessionRun = session->add_subcommand("run", "replay a notification trace through the session engine");
  shared(sessionRun, true);
  SessionArgs sa;
  sessionRun->add_option("--layout", sa.layout, "document layout JSON")->required();
  sessionRun->add_option("--trace", sa.trace, "notification trace (JSON lines)")->required();
  sessionRun->add_option("--tracker", sa.tracker, "none | replay:FILE | synthetic:SCRIPT | socket:HOST:PORT");
  sessionRun->add_option("--session-id", sa.sessionId, "session id (default: derived from the seed)");
  sessionRun->add_option("--uri", sa.uri, "document uri to register (default: the layout path)");
  auto* timing = sessionRun->add_option_group("geometry and timers");
  timing->add_option("--min-read-sec", s.minReadSec, "entry delay (env READTRACE_MIN_READ_SEC)");
  timing->add_option("--max-read-sec", s.maxReadSec, "gaze-loss exit delay (env READTRACE_MAX_READ_SEC)");
  timing->add_option("--points-per-cm", s.pointsPerCm, "screen density (env READTRACE_POINTS_PER_CM)");
  timing->add_option("--eye-distance-cm", s.eyeDistanceCm, "default eye distance (env READTRACE_EYE_DISTANCE_CM)");
  sessionRun->callback([&] { action = [&](const Resolver& r) { return cmdSessionRun(r, s.json, sa); }; });

  auto* extract = app.add_subcommand("extract-json", "export every event of a session");
  shared(extract, true);
  std::string extractSession, extractOut;
  extract->add_option("--session", extractSession, "session id")->required();
  extract->add_option("-o,--output", extractOut, "output file (default stdout)");
  extract->callback([&] {
    action = [&](const Resolver& r) { return cmdExtract(r, s.json, extractSession, extractOut); };
  });

  auto* import = app.add_subcommand("import-json", "post events from an exported file");
  shared(import, true);
  std::string importFile;
  import->add_option("file", importFile, "JSON array of events")->required();
  import->callback([&] { action = [&](const Resolver& r) { return cmdImport(r, s.json, importFile); }; });

  auto* url = app.add_subcommand("url", "peyedf:// links");
  url->require_subcommand(1);
  std::string urlText;
  auto* urlParse = url->add_subcommand("parse", "decode a link");
  shared(urlParse, false);
  urlParse->add_option("url", urlText)->required();
  urlParse->callback([&] { action = [&](const Resolver&) { return cmdUrlParse(s.json, urlText); }; });
  auto* urlDispatch = url->add_subcommand("dispatch", "resolve a link against the store");
  shared(urlDispatch, true);
  urlDispatch->add_option("url", urlText)->required();
  urlDispatch->callback([&] { action = [&](const Resolver& r) { return cmdUrlDispatch(r, s.json, urlText); }; });

  auto* experiment = app.add_subcommand("experiment", "synthetic comprehension study");
  experiment->require_subcommand(1);
  ExperimentArgs ea;
  auto* synth = experiment->add_subcommand("synthesize", "write a synthetic study to a directory");
  shared(synth, false);
  synth->add_option("-o,--out", ea.dir, "output directory")->required();
  synth->callback([&] { action = [&](const Resolver& r) { return cmdSynthesize(r, s.json, ea); }; });
  auto* run = experiment->add_subcommand("run", "Eye, Topic and All classifiers with LOO and permutation tests");
  shared(run, false);
  run->add_option("--data", ea.data, "study directory (default: synthesize in memory from --seed)");
  run->add_option("-o,--out", ea.out, "results JSON file");
  run->add_option("--nperm", ea.nPerm, "permutations per tested classifier")->check(CLI::PositiveNumber);
  run->add_option("--threads", ea.threads, "worker threads for permutations (0 = all cores)");
  run->add_option("--permute", ea.permute, "classifiers that get a p-value")->delimiter(',');
  run->add_option("--forward-rule", ea.forwardRule, "reading-order | literal");
  run->callback([&] { action = [&](const Resolver& r) { return cmdExperimentRun(r, s.json, ea); }; });
  auto* report = experiment->add_subcommand("report", "print a results file");
  shared(report, false);
  report->add_option("results", ea.results, "results JSON")->required();
  report->callback([&] { action = [&](const Resolver&) { return cmdReport(s.json, ea); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const Resolver resolver(s);
    return action(resolver);
  } catch (const UsageError& e) {
    std::cerr << "readtrace: " << e.what() << "\n";
    return 2;
  } catch (const StoreError& e) {
    std::cerr << "readtrace: " << e.what() << " (HTTP " << e.status() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "readtrace: " << e.what() << "\n";
    return 1;
  }
}
