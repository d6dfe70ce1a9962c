#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "readtrace/geometry.hpp"
#include "readtrace/layout.hpp"
#include "readtrace/model.hpp"
#include "readtrace/serialize.hpp"
#include "readtrace/tracker.hpp"

namespace readtrace {

enum class NotificationKind {
  windowStartedMoving,
  windowStoppedMoving,
  scrollStarted,
  scrollEnded,
  focusGained,
  focusLost,
  occluded,
  revealed,
  documentOpened,
  documentClosed,
  gazeLost,
  gazeRegained,
};

std::string_view notificationName(NotificationKind kind);
std::optional<NotificationKind> notificationFromName(std::string_view name);

/// Stop-class notifications end a reading period; start-class ones arm the entry timer.
bool isStopClass(NotificationKind kind);
bool isStartClass(NotificationKind kind);

struct InteractionNotification {
  NotificationKind kind{};
  TimestampMs timestamp = 0;
  std::optional<ViewportState> viewport;  // scroll/window payload
};

struct TimerConfig {
  double minReadTimeSec = 2.0;
  double maxReadTimeSec = 60.0;

  void validate() const;  // 0 < min < max
  TimestampMs minReadMs() const;
  TimestampMs maxReadMs() const;
};

enum class SessionPhase { idle, pendingEntry, reading, exited };
std::string_view phaseName(SessionPhase phase);

/// Snapshot of the state machine, for inspection.
struct SessionState {
  SessionPhase phase = SessionPhase::idle;
  std::string sessionId;
  std::optional<TimestampMs> entryDeadline;
  std::optional<TimestampMs> gazeLostSince;
  bool bufferEmpty = true;
};

class SessionClosedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SessionConfig {
  TimerConfig timers;
  ViewGeometry geometry;
  std::optional<double> maxEyeRectHeight;  // default: twice the 3 degree span
};

/// A fixation already mapped to page space, with its time relative to the event.
struct BufferedFixation {
  PagePoint position;
  double durationMs = 0;
  double pupilSize = 0;
  std::optional<double> eyeDistanceCm;
  TimestampMs timestampMs = 0;
};

/// Builds a ReadingEvent from a viewport snapshot and the gaze gathered while it
/// was shown. Returns nullopt when the viewport is empty.
std::optional<ReadingEvent> captureReadingEvent(const std::string& sessionId, std::int64_t documentId,
                                                TimestampMs start, TimestampMs end, std::span<const Rect> viewport,
                                                const DocumentLayout& layout, std::span<const BufferedFixation> gaze,
                                                const SessionConfig& config);

/// Search statistics over the layout text: case-insensitive occurrences of
/// the query (surrounding double quotes stripped) and the pages they fall on.
SearchQueryStats searchStats(const DocumentLayout& layout, std::string_view query);

/// One reading session over one document, driven by notifications and gaze in
/// virtual time. Every mutating call returns the events it emitted.
class ReadingSession {
 public:
  ReadingSession(const DocumentLayout& layout, std::int64_t documentId, std::string sessionId, TimestampMs openedAt,
                 SessionConfig config = {});

  /// Fires any timers due at or before `now`.
  std::vector<AnyEvent> advanceTo(TimestampMs now);
  std::vector<AnyEvent> handleNotification(const InteractionNotification& n);
  std::vector<AnyEvent> handleFixation(const FixationEvent& f);
  std::vector<AnyEvent> recordSearch(TimestampMs at, std::string query);
  std::vector<AnyEvent> addAnnotation(TimestampMs at, const Rect& rect);

  /// Flushes any open reading period and emits the summary. Throws
  /// SessionClosedError if already closed.
  std::vector<AnyEvent> close(TimestampMs at);

  SessionState state() const;
  const std::string& sessionId() const { return sessionId_; }
  bool closed() const { return phase_ == SessionPhase::exited; }
  std::size_t droppedFixations() const { return droppedFixations_; }

 private:
  void checkTime(TimestampMs t);
  void armEntry(TimestampMs now);
  void flush(TimestampMs end, std::vector<AnyEvent>& out);
  void fireTimers(TimestampMs now, std::vector<AnyEvent>& out);
  SummaryReadingEvent summarize(TimestampMs at) const;

  const DocumentLayout& layout_;
  std::int64_t documentId_;
  std::string sessionId_;
  SessionConfig config_;
  TimestampMs openedAt_;
  TimestampMs lastSeen_;

  SessionPhase phase_ = SessionPhase::idle;
  std::optional<TimestampMs> entryDeadline_;
  std::optional<TimestampMs> gazeLostSince_;
  bool gazeExitFired_ = false;
  bool focused_ = true;
  bool visible_ = true;
  std::optional<ViewportState> viewport_;

  TimestampMs readingStart_ = 0;
  std::vector<Rect> readingViewport_;
  std::vector<BufferedFixation> gazeBuffer_;

  std::vector<Rect> seenViewport_;
  std::vector<PagePoint> sessionFixations_;
  std::vector<Rect> annotations_;
  std::vector<SearchQueryStats> searches_;
  std::size_t droppedFixations_ = 0;
};

// Trace files: one JSON object per line with "kind", "t" and an optional payload.
struct SearchAction {
  TimestampMs timestamp = 0;
  std::string query;
};
struct AnnotationAction {
  TimestampMs timestamp = 0;
  Rect rect;
};
using TraceRecord = std::variant<InteractionNotification, SearchAction, AnnotationAction>;

TimestampMs traceTime(const TraceRecord& r);
TraceRecord traceRecordFromJson(const Json& j);  // throws ParseError
Json toJson(const TraceRecord& r);
std::vector<TraceRecord> loadTrace(const std::filesystem::path& path);
std::vector<TraceRecord> parseTrace(std::string_view text);

/// Merges a notification trace with tracker output by timestamp (trace first on
/// ties) and runs it through a fresh session. Tracker eye-state changes become
/// gazeLost/gazeRegained notifications. The trace must begin with documentOpened.
struct ReplayResult {
  std::string sessionId;
  std::vector<AnyEvent> events;
  std::size_t droppedFixations = 0;
};
ReplayResult replaySession(const DocumentLayout& layout, std::int64_t documentId, std::string sessionId,
                           std::span<const TraceRecord> trace, std::span<const ProviderMessage> tracker,
                           const SessionConfig& config = {});

/// Wall-clock or virtual time source for live drivers.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs now() const override;
};

class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(TimestampMs start = 0) : now_(start) {}
  TimestampMs now() const override { return now_; }
  void set(TimestampMs t) { now_ = t; }
  void advance(TimestampMs dt) { now_ += dt; }

 private:
  TimestampMs now_;
};

/// Owns a session on its own lane. Producers post inputs; emitted events go to
/// `sink` on a separate lane so slow delivery never blocks processing.
class SessionLane {
 public:
  using Sink = std::function<void(const AnyEvent&)>;
  SessionLane(const DocumentLayout& layout, std::int64_t documentId, std::string sessionId, const Clock& clock,
              Sink sink, SessionConfig config = {});
  ~SessionLane();

  void post(InteractionNotification n);
  void post(FixationEvent f);
  void tick();  // advance timers to clock.now()
  /// Waits for both lanes to finish everything posted so far.
  void drain();

 private:
  void emit(std::vector<AnyEvent> events);

  const Clock& clock_;
  Sink sink_;
  ReadingSession session_;
  SerialLane processing_;
  SerialLane delivery_;
};

}  // namespace readtrace
