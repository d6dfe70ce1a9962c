#include "readtrace/session.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace readtrace {

namespace {

constexpr std::pair<NotificationKind, std::string_view> kNames[] = {
    {NotificationKind::windowStartedMoving, "windowStartedMoving"},
    {NotificationKind::windowStoppedMoving, "windowStoppedMoving"},
    {NotificationKind::scrollStarted, "scrollStarted"},
    {NotificationKind::scrollEnded, "scrollEnded"},
    {NotificationKind::focusGained, "focusGained"},
    {NotificationKind::focusLost, "focusLost"},
    {NotificationKind::occluded, "occluded"},
    {NotificationKind::revealed, "revealed"},
    {NotificationKind::documentOpened, "documentOpened"},
    {NotificationKind::documentClosed, "documentClosed"},
    {NotificationKind::gazeLost, "gazeLost"},
    {NotificationKind::gazeRegained, "gazeRegained"},
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view notificationName(NotificationKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<NotificationKind> notificationFromName(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool isStopClass(NotificationKind kind) {
  return kind == NotificationKind::windowStartedMoving || kind == NotificationKind::scrollStarted ||
         kind == NotificationKind::focusLost || kind == NotificationKind::occluded;
}

bool isStartClass(NotificationKind kind) {
  return kind == NotificationKind::windowStoppedMoving || kind == NotificationKind::scrollEnded ||
         kind == NotificationKind::focusGained || kind == NotificationKind::revealed ||
         kind == NotificationKind::documentOpened;
}

void TimerConfig::validate() const {
  if (!(minReadTimeSec > 0 && minReadTimeSec < maxReadTimeSec)) {
    throw std::invalid_argument("timers require 0 < minReadTime < maxReadTime");
  }
}

TimestampMs TimerConfig::minReadMs() const { return std::llround(minReadTimeSec * 1000.0); }
TimestampMs TimerConfig::maxReadMs() const { return std::llround(maxReadTimeSec * 1000.0); }

std::string_view phaseName(SessionPhase phase) {
  switch (phase) {
    case SessionPhase::idle: return "idle";
    case SessionPhase::pendingEntry: return "pendingEntry";
    case SessionPhase::reading: return "reading";
    case SessionPhase::exited: return "exited";
  }
  return "idle";
}

// ---------------------------------------------------------------------------

std::optional<ReadingEvent> captureReadingEvent(const std::string& sessionId, std::int64_t documentId,
                                                TimestampMs start, TimestampMs end, std::span<const Rect> viewport,
                                                const DocumentLayout& layout, std::span<const BufferedFixation> gaze,
                                                const SessionConfig& config) {
  if (viewport.empty()) return std::nullopt;
  ReadingEvent e;
  e.sessionId = sessionId;
  e.targettedResourceId = documentId;
  e.startTime = start;
  e.endTime = end;
  std::set<int> pages;
  for (const auto& r : viewport) pages.insert(r.pageIndex());
  for (int p : pages) {
    e.pageNumbers.push_back(p);
    e.pageLabels.push_back(layout.pageLabel(p));
  }
  e.pageRects.assign(viewport.begin(), viewport.end());
  e.plainTextContent = visibleText(viewport, layout);

  std::map<int, std::vector<const BufferedFixation*>> byPage;
  for (const auto& f : gaze) {
    if (pages.contains(f.position.pageIndex)) byPage[f.position.pageIndex].push_back(&f);
  }
  const double maxHeight = config.maxEyeRectHeight.value_or(defaultMaxEyeRectHeight(config.geometry));
  for (const auto& [page, fixations] : byPage) {
    PageEyeData d;
    d.pageIndex = page;
    std::vector<EyeRectangle> eyeRects;
    for (std::size_t i = 0; i < fixations.size(); ++i) {
      const auto& f = *fixations[i];
      d.xs.push_back(f.position.point.x);
      d.ys.push_back(f.position.point.y);
      d.durations.push_back(f.durationMs);
      d.pupilSizes.push_back(f.pupilSize);
      d.startTimes.push_back(static_cast<double>(f.timestampMs - start));
      ViewGeometry g = config.geometry;
      if (f.eyeDistanceCm) g.eyeDistanceCm = *f.eyeDistanceCm;
      if (auto r = pointToParagraphRect(f.position, layout, g)) {
        eyeRects.push_back(EyeRectangle{*r, {static_cast<int>(i)}, 1});
      }
    }
    auto united = uniteCollidingRects(eyeRects);
    for (const auto& piece : splitAndCrop(united, maxHeight, d.ys)) {
      if (piece.fixationIndices.empty()) continue;
      const auto cls = static_cast<int>(piece.fixationIndices.size()) >= kReadFixationThreshold ? ReadingClass::read
                                                                                                 : ReadingClass::unknown;
      e.pageRects.push_back(piece.rect.withClass(cls, ClassSource::eye));
    }
    e.pageEyeData.push_back(std::move(d));
  }
  e.validate();
  return e;
}

SearchQueryStats searchStats(const DocumentLayout& layout, std::string_view query) {
  SearchQueryStats stats;
  stats.query = std::string(query);
  std::string needle(query);
  if (needle.size() >= 2 && needle.front() == '"' && needle.back() == '"') needle = needle.substr(1, needle.size() - 2);
  needle = lower(needle);
  if (needle.empty()) return stats;
  for (int p = 0; p < layout.pageCount(); ++p) {
    const auto text = lower(layout.pageText(p));
    int count = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++count;
    if (count > 0) {
      stats.hits += count;
      stats.pages.push_back(p);
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------

ReadingSession::ReadingSession(const DocumentLayout& layout, std::int64_t documentId, std::string sessionId,
                               TimestampMs openedAt, SessionConfig config)
    : layout_(layout),
      documentId_(documentId),
      sessionId_(std::move(sessionId)),
      config_(config),
      openedAt_(openedAt),
      lastSeen_(openedAt) {
  config_.timers.validate();
  config_.geometry.validate();
}

SessionState ReadingSession::state() const {
  return SessionState{phase_, sessionId_, entryDeadline_, gazeLostSince_, gazeBuffer_.empty() && phase_ != SessionPhase::reading};
}

void ReadingSession::checkTime(TimestampMs t) {
  if (phase_ == SessionPhase::exited) throw SessionClosedError("session " + sessionId_ + " is closed");
  if (t < lastSeen_) {
    throw std::invalid_argument("timestamp " + std::to_string(t) + " precedes " + std::to_string(lastSeen_));
  }
}

void ReadingSession::armEntry(TimestampMs now) {
  if (!focused_ || !visible_ || phase_ == SessionPhase::reading) return;
  phase_ = SessionPhase::pendingEntry;
  entryDeadline_ = now + config_.timers.minReadMs();
}

void ReadingSession::flush(TimestampMs end, std::vector<AnyEvent>& out) {
  if (phase_ != SessionPhase::reading) return;
  std::vector<Rect> rects = readingViewport_;
  std::set<int> pages;
  for (const auto& r : rects) pages.insert(r.pageIndex());
  auto event = captureReadingEvent(sessionId_, documentId_, readingStart_, end, rects, layout_, gazeBuffer_, config_);
  if (event) {
    for (const auto& a : annotations_) {
      if (pages.contains(a.pageIndex())) event->pageRects.push_back(a);
    }
    out.emplace_back(std::move(*event));
  }
  gazeBuffer_.clear();
  readingViewport_.clear();
  phase_ = SessionPhase::idle;
}

void ReadingSession::fireTimers(TimestampMs now, std::vector<AnyEvent>& out) {
  while (true) {
    std::optional<TimestampMs> gazeDeadline;
    if (gazeLostSince_ && !gazeExitFired_ &&
        (phase_ == SessionPhase::reading || phase_ == SessionPhase::pendingEntry)) {
      gazeDeadline = *gazeLostSince_ + config_.timers.maxReadMs();
    }
    std::optional<TimestampMs> entry = phase_ == SessionPhase::pendingEntry ? entryDeadline_ : std::nullopt;
    // Gaze loss wins ties so an entry never opens a zero-length period.
    if (gazeDeadline && *gazeDeadline <= now && (!entry || *gazeDeadline <= *entry)) {
      flush(*gazeDeadline, out);
      phase_ = SessionPhase::idle;
      entryDeadline_.reset();
      gazeExitFired_ = true;
      continue;
    }
    if (entry && *entry <= now) {
      phase_ = SessionPhase::reading;
      readingStart_ = *entry;
      entryDeadline_.reset();
      readingViewport_ = viewport_ ? computeViewport(*viewport_, layout_) : std::vector<Rect>{};
      seenViewport_.insert(seenViewport_.end(), readingViewport_.begin(), readingViewport_.end());
      continue;
    }
    break;
  }
}

std::vector<AnyEvent> ReadingSession::advanceTo(TimestampMs now) {
  checkTime(now);
  std::vector<AnyEvent> out;
  fireTimers(now, out);
  lastSeen_ = now;
  return out;
}

std::vector<AnyEvent> ReadingSession::handleNotification(const InteractionNotification& n) {
  auto out = advanceTo(n.timestamp);
  const auto now = n.timestamp;
  if (n.viewport) viewport_ = n.viewport;
  switch (n.kind) {
    case NotificationKind::focusLost: focused_ = false; break;
    case NotificationKind::focusGained: focused_ = true; break;
    case NotificationKind::occluded: visible_ = false; break;
    case NotificationKind::revealed: visible_ = true; break;
    default: break;
  }
  if (n.kind == NotificationKind::documentClosed) {
    auto closing = close(now);
    out.insert(out.end(), std::make_move_iterator(closing.begin()), std::make_move_iterator(closing.end()));
    return out;
  }
  if (isStopClass(n.kind)) {
    flush(now, out);
    phase_ = SessionPhase::idle;
    entryDeadline_.reset();
  } else if (isStartClass(n.kind)) {
    armEntry(now);
  } else if (n.kind == NotificationKind::gazeLost) {
    if (!gazeLostSince_) {
      gazeLostSince_ = now;
      gazeExitFired_ = false;
    }
  } else if (n.kind == NotificationKind::gazeRegained) {
    const bool forcedOut = gazeExitFired_;
    gazeLostSince_.reset();
    gazeExitFired_ = false;
    if (forcedOut && phase_ == SessionPhase::idle) armEntry(now);
  }
  return out;
}

std::vector<AnyEvent> ReadingSession::handleFixation(const FixationEvent& f) {
  auto out = advanceTo(f.timestampMs);
  if (phase_ != SessionPhase::reading || !viewport_) return out;
  auto mapped = screenToPage(f.screenPoint, *viewport_, layout_);
  if (!mapped) {
    ++droppedFixations_;
    return out;
  }
  gazeBuffer_.push_back(BufferedFixation{*mapped, f.durationMs, f.pupilSize, f.eyeDistanceCm, f.timestampMs});
  sessionFixations_.push_back(*mapped);
  return out;
}

std::vector<AnyEvent> ReadingSession::recordSearch(TimestampMs at, std::string query) {
  auto out = advanceTo(at);
  searches_.push_back(searchStats(layout_, query));
  return out;
}

std::vector<AnyEvent> ReadingSession::addAnnotation(TimestampMs at, const Rect& rect) {
  auto out = advanceTo(at);
  if (rect.pageIndex() >= layout_.pageCount()) throw std::invalid_argument("annotation on a missing page");
  if (rect.readingClass() != ReadingClass::important && rect.readingClass() != ReadingClass::critical) {
    throw std::invalid_argument("annotations must be important or critical");
  }
  annotations_.push_back(rect);
  return out;
}

std::vector<AnyEvent> ReadingSession::close(TimestampMs at) {
  if (phase_ == SessionPhase::exited) throw SessionClosedError("session " + sessionId_ + " already closed");
  auto out = advanceTo(at);
  flush(at, out);
  out.emplace_back(summarize(at));
  phase_ = SessionPhase::exited;
  entryDeadline_.reset();
  return out;
}

SummaryReadingEvent ReadingSession::summarize(TimestampMs at) const {
  SummaryReadingEvent s;
  s.sessionId = sessionId_;
  s.startTime = openedAt_;
  s.endTime = at;
  s.targettedResourceId = documentId_;
  s.searchQueries = searches_;

  if (!seenViewport_.empty()) s.perClassProportions[ReadingClass::viewport] = textAreaProportion(seenViewport_, layout_);

  std::map<std::pair<int, std::size_t>, int> counts;
  for (const auto& p : sessionFixations_) {
    if (auto para = paragraphAt(p, layout_)) ++counts[{p.pageIndex, *para}];
  }
  std::vector<Rect> read;
  for (const auto& [key, n] : counts) {
    if (n < kReadFixationThreshold) continue;
    const auto& rect = layout_.paragraphs(key.first)[key.second].rect;
    const bool annotated = std::any_of(annotations_.begin(), annotations_.end(), [&](const Rect& a) {
      return a.pageIndex() == key.first && interiorsOverlap(a, rect);
    });
    if (!annotated) read.push_back(rect);
  }
  if (!read.empty()) s.perClassProportions[ReadingClass::read] = textAreaProportion(read, layout_);
  for (auto cls : {ReadingClass::important, ReadingClass::critical}) {
    std::vector<Rect> rects;
    for (const auto& a : annotations_) {
      if (a.readingClass() == cls) rects.push_back(a);
    }
    if (!rects.empty()) s.perClassProportions[cls] = textAreaProportion(rects, layout_);
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Trace files

TimestampMs traceTime(const TraceRecord& r) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InteractionNotification>) {
          return v.timestamp;
        } else {
          return v.timestamp;
        }
      },
      r);
}

TraceRecord traceRecordFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("trace", "expected an object");
  auto kindIt = j.find("kind");
  if (kindIt == j.end() || !kindIt->is_string()) throw ParseError("kind", "expected a string");
  auto tIt = j.find("t");
  if (tIt == j.end() || !(tIt->is_number_integer() || tIt->is_number_unsigned())) {
    throw ParseError("t", "expected an integer millisecond timestamp");
  }
  const auto kind = kindIt->get<std::string>();
  const auto t = tIt->get<TimestampMs>();
  const Json* payload = j.contains("payload") ? &j["payload"] : nullptr;

  if (kind == "search") {
    if (!payload || !payload->contains("query") || !(*payload)["query"].is_string()) {
      throw ParseError("payload.query", "expected a string");
    }
    return SearchAction{t, (*payload)["query"].get<std::string>()};
  }
  if (kind == "annotate") {
    if (!payload) throw ParseError("payload", "missing annotation payload");
    const auto& pj = *payload;
    auto clsIt = pj.find("class");
    if (clsIt == pj.end() || !clsIt->is_string()) throw ParseError("payload.class", "expected important or critical");
    auto cls = readingClassFromName(clsIt->get<std::string>());
    if (!cls || (*cls != ReadingClass::important && *cls != ReadingClass::critical)) {
      throw ParseError("payload.class", "expected important or critical");
    }
    auto src = ClassSource::click;
    if (auto s = pj.find("source"); s != pj.end() && s->is_string() && s->get<std::string>() == "manualSelection") {
      src = ClassSource::manualSelection;
    }
    auto num = [&](const char* key) {
      auto it = pj.find(key);
      if (it == pj.end() || !it->is_number()) throw ParseError(std::string("payload.") + key, "expected a number");
      return it->get<double>();
    };
    auto pageIt = pj.find("page");
    if (pageIt == pj.end() || !pageIt->is_number_integer()) throw ParseError("payload.page", "expected an integer");
    try {
      return AnnotationAction{t, Rect({num("x"), num("y")}, {num("width"), num("height")}, pageIt->get<int>(), *cls, src)};
    } catch (const InvariantError& e) {
      throw ParseError("payload", e.what());
    }
  }
  auto nk = notificationFromName(kind);
  if (!nk) throw ParseError("kind", "unknown notification kind '" + kind + "'");
  InteractionNotification n{*nk, t, std::nullopt};
  if (payload && payload->is_object()) {
    auto num = [&](const char* key, double fallback) {
      auto it = payload->find(key);
      if (it == payload->end()) return fallback;
      if (!it->is_number()) throw ParseError(std::string("payload.") + key, "expected a number");
      return it->get<double>();
    };
    if (payload->contains("width") || payload->contains("scrollY") || payload->contains("scrollX")) {
      ViewportState v;
      v.scrollOffset = {num("scrollX", 0), num("scrollY", 0)};
      v.windowSize = {num("width", 0), num("height", 0)};
      v.zoom = num("zoom", 1);
      if (!(v.windowSize.width > 0 && v.windowSize.height > 0 && v.zoom > 0)) {
        throw ParseError("payload", "viewport needs positive width, height and zoom");
      }
      n.viewport = v;
    }
  }
  return n;
}

Json toJson(const TraceRecord& r) {
  if (const auto* n = std::get_if<InteractionNotification>(&r)) {
    Json j{{"kind", notificationName(n->kind)}, {"t", n->timestamp}};
    if (n->viewport) {
      j["payload"] = {{"scrollX", n->viewport->scrollOffset.x}, {"scrollY", n->viewport->scrollOffset.y},
                      {"width", n->viewport->windowSize.width},  {"height", n->viewport->windowSize.height},
                      {"zoom", n->viewport->zoom}};
    }
    return j;
  }
  if (const auto* s = std::get_if<SearchAction>(&r)) {
    return Json{{"kind", "search"}, {"t", s->timestamp}, {"payload", {{"query", s->query}}}};
  }
  const auto& a = std::get<AnnotationAction>(r);
  return Json{{"kind", "annotate"},
              {"t", a.timestamp},
              {"payload",
               {{"class", readingClassName(a.rect.readingClass())},
                {"source", a.rect.classSource() == ClassSource::manualSelection ? "manualSelection" : "click"},
                {"page", a.rect.pageIndex()},
                {"x", a.rect.minX()},
                {"y", a.rect.minY()},
                {"width", a.rect.width()},
                {"height", a.rect.height()}}}};
}

std::vector<TraceRecord> parseTrace(std::string_view text) {
  std::vector<TraceRecord> out;
  std::size_t lineNo = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    ++lineNo;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(traceRecordFromJson(parseJson(line, "trace")));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineNo) + "." + e.field(), e.what());
    }
  }
  return out;
}

std::vector<TraceRecord> loadTrace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parseTrace(buf.str());
}

ReplayResult replaySession(const DocumentLayout& layout, std::int64_t documentId, std::string sessionId,
                           std::span<const TraceRecord> trace, std::span<const ProviderMessage> tracker,
                           const SessionConfig& config) {
  if (trace.empty()) throw std::invalid_argument("trace is empty");
  const auto* first = std::get_if<InteractionNotification>(&trace.front());
  if (!first || first->kind != NotificationKind::documentOpened) {
    throw std::invalid_argument("trace must begin with documentOpened");
  }

  // Stable merge; trace records precede tracker messages at equal times.
  struct Item {
    TimestampMs t;
    int source;
    std::size_t index;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < trace.size(); ++i) items.push_back({traceTime(trace[i]), 0, i});
  for (std::size_t i = 0; i < tracker.size(); ++i) {
    if (const auto* f = std::get_if<FixationEvent>(&tracker[i])) items.push_back({f->timestampMs, 1, i});
    if (const auto* s = std::get_if<EyeStateMessage>(&tracker[i])) items.push_back({s->at, 1, i});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.t != b.t ? a.t < b.t : a.source < b.source;
  });

  ReplayResult result;
  result.sessionId = sessionId;
  ReadingSession session(layout, documentId, std::move(sessionId), first->timestamp, config);
  auto append = [&](std::vector<AnyEvent> evs) {
    for (auto& e : evs) result.events.push_back(std::move(e));
  };
  for (const auto& item : items) {
    if (item.source == 0) {
      const auto& rec = trace[item.index];
      if (const auto* n = std::get_if<InteractionNotification>(&rec)) {
        if (session.closed() && n->kind == NotificationKind::documentOpened) continue;
        append(session.handleNotification(*n));
      } else if (const auto* s = std::get_if<SearchAction>(&rec)) {
        append(session.recordSearch(s->timestamp, s->query));
      } else {
        const auto& a = std::get<AnnotationAction>(rec);
        append(session.addAnnotation(a.timestamp, a.rect));
      }
      continue;
    }
    if (session.closed()) continue;
    const auto& msg = tracker[item.index];
    if (const auto* f = std::get_if<FixationEvent>(&msg)) {
      append(session.handleFixation(*f));
    } else if (const auto* s = std::get_if<EyeStateMessage>(&msg)) {
      append(session.handleNotification(InteractionNotification{
          s->eyesLost ? NotificationKind::gazeLost : NotificationKind::gazeRegained, s->at, std::nullopt}));
    }
  }
  result.droppedFixations = session.droppedFixations();
  return result;
}

TimestampMs SystemClock::now() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

SessionLane::SessionLane(const DocumentLayout& layout, std::int64_t documentId, std::string sessionId,
                         const Clock& clock, Sink sink, SessionConfig config)
    : clock_(clock), sink_(std::move(sink)), session_(layout, documentId, std::move(sessionId), clock.now(), config) {}

SessionLane::~SessionLane() {
  try {
    drain();
  } catch (...) {
  }
}

void SessionLane::emit(std::vector<AnyEvent> events) {
  for (auto& e : events) {
    delivery_.post([this, e = std::move(e)] { sink_(e); });
  }
}

void SessionLane::post(InteractionNotification n) {
  processing_.post([this, n] { emit(session_.handleNotification(n)); });
}

void SessionLane::post(FixationEvent f) {
  processing_.post([this, f] { emit(session_.handleFixation(f)); });
}

void SessionLane::tick() {
  processing_.post([this] {
    const auto now = clock_.now();
    if (!session_.closed()) emit(session_.advanceTo(now));
  });
}

void SessionLane::drain() {
  processing_.drain();
  delivery_.drain();
}

}  // namespace readtrace
