#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "readtrace/layout.hpp"
#include "readtrace/lanes.hpp"
#include "readtrace/model.hpp"
#include "readtrace/serialize.hpp"

namespace readtrace {

/// One fixation as reported by a tracker, in screen points.
struct FixationEvent {
  Point screenPoint;
  double durationMs = 0;
  double pupilSize = 0;                 // 0 = unknown
  std::optional<double> eyeDistanceCm;  // unknown => 60 cm downstream
  TimestampMs timestampMs = 0;

  void validate() const;
  bool operator==(const FixationEvent&) const = default;
};

/// Wire record: {"x","y","durationMs","pupil","distanceCm","tMs"}.
Json toJson(const FixationEvent& f);
FixationEvent fixationFromJson(const Json& j);
FixationEvent parseFixationLine(std::string_view line);  // throws ParseError

/// Gap after which a provider reports the user's eyes as lost.
inline constexpr TimestampMs kDefaultEyesLostThresholdMs = 8000;

struct ProviderState {
  bool available = false;
  bool eyesLost = false;
  std::string sourceName;
};

/// Receives provider callbacks. Calls arrive in timestamp order per source.
class FixationDelegate {
 public:
  virtual ~FixationDelegate() = default;
  virtual void sendFixations(std::span<const FixationEvent> fixations) = 0;
  virtual void eyeStateChange(bool eyesLost, TimestampMs at) = 0;
  virtual void eyeConnectionChange(bool available) = 0;
  virtual void streamError(const std::string& message) { (void)message; }
  virtual void endOfStream() {}
};

/// Base for fixation sources. Adopters implement start()/stop() and report data
/// through the protected helpers, which suppress callbacks outside a
/// start/stop window and keep eye-state changes edge-triggered.
class EyeDataProvider {
 public:
  explicit EyeDataProvider(std::string sourceName);
  virtual ~EyeDataProvider() = default;
  EyeDataProvider(const EyeDataProvider&) = delete;
  EyeDataProvider& operator=(const EyeDataProvider&) = delete;

  virtual void start() = 0;
  virtual void stop() = 0;
  /// Blocks until the source has finished producing (end of stream or stop).
  virtual void join() {}

  void setDelegate(FixationDelegate* delegate);
  ProviderState state() const;

 protected:
  void markStarted();
  void markStopped();
  bool active() const { return active_.load(); }

  void sendFixations(std::span<const FixationEvent> fixations);
  void eyeStateChange(bool eyesLost, TimestampMs at);
  void eyeConnectionChange(bool available);
  void streamError(const std::string& message);
  void endOfStream();

 private:
  mutable std::mutex mutex_;
  FixationDelegate* delegate_ = nullptr;
  ProviderState state_;
  std::atomic<bool> active_{false};
};

/// Emits eyes-lost/regained transitions from gaps between fixations.
class EyesLostDetector {
 public:
  explicit EyesLostDetector(TimestampMs thresholdMs) : thresholdMs_(thresholdMs) {}
  struct Transition {
    bool eyesLost;
    TimestampMs at;
  };
  /// Transitions (lost then regained) implied before `next` arrives.
  std::vector<Transition> observe(const FixationEvent& next);

 private:
  TimestampMs thresholdMs_;
  std::optional<TimestampMs> lastEnd_;
};

inline constexpr double kAsFastAsPossible = std::numeric_limits<double>::infinity();

/// Replays fixation JSON lines at recorded intervals divided by `speed`.
class ReplaySource final : public EyeDataProvider {
 public:
  ReplaySource(std::vector<std::string> lines, double speed = kAsFastAsPossible,
               TimestampMs eyesLostThresholdMs = kDefaultEyesLostThresholdMs);
  static std::unique_ptr<ReplaySource> fromFile(const std::filesystem::path& path, double speed = kAsFastAsPossible,
                                                TimestampMs eyesLostThresholdMs = kDefaultEyesLostThresholdMs);
  ~ReplaySource() override;

  void start() override;
  void stop() override;
  void join() override;

 private:
  void run(std::stop_token token);

  std::vector<std::string> lines_;
  double speed_;
  TimestampMs thresholdMs_;
  std::jthread worker_;
};

struct SocketSourceOptions {
  int maxReconnectAttempts = 5;
  int initialBackoffMs = 50;
  int maxBackoffMs = 2000;
  TimestampMs eyesLostThresholdMs = kDefaultEyesLostThresholdMs;
};

/// Reads fixation JSON lines from a TCP endpoint, reconnecting with bounded
/// exponential backoff. Lines that fail to parse are dropped and counted.
class SocketSource final : public EyeDataProvider {
 public:
  SocketSource(std::string host, std::uint16_t port, SocketSourceOptions options = {});
  ~SocketSource() override;

  void start() override;
  void stop() override;
  void join() override;

  std::uint64_t received() const { return received_.load(); }
  std::uint64_t delivered() const { return delivered_.load(); }
  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  void run(std::stop_token token);
  bool consume(int fd, std::stop_token& token, EyesLostDetector& detector);

  std::string host_;
  std::uint16_t port_;
  SocketSourceOptions options_;
  std::atomic<std::uint64_t> received_{0};
  std::atomic<std::uint64_t> delivered_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::jthread worker_;
};

/// Invalid synthetic script (checked before start()).
class ScriptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scripted reading behaviour for the synthetic source.
struct SyntheticScript {
  struct Dwell {
    int page = 0;
    std::optional<std::size_t> block;  // either a block index ...
    std::optional<Rect> rect;          // ... or an explicit page rect
    int fixations = 1;
  };
  struct Pause {
    TimestampMs durationMs = 0;
  };
  struct SetViewport {
    ViewportState viewport;
  };
  using Step = std::variant<Dwell, Pause, SetViewport>;

  ViewportState viewport;
  TimestampMs startMs = 0;
  double meanFixationMs = 230;
  double sdFixationMs = 60;
  double minFixationMs = 80;
  double saccadeMs = 30;
  double saccadeNoisePts = 3;
  std::optional<double> distanceCm = kDefaultEyeDistanceCm;
  double pupilSize = 0;
  std::vector<Step> steps;
};

SyntheticScript scriptFromJson(const Json& j);  // throws ScriptError
SyntheticScript loadScript(const std::filesystem::path& path);

/// Resolves the page rect a dwell step targets; throws ScriptError if missing.
Rect dwellTarget(const SyntheticScript::Dwell& dwell, const DocumentLayout& layout);

/// Deterministic fixation stream for `script` under `seed`.
std::vector<FixationEvent> generateFixations(const DocumentLayout& layout, const SyntheticScript& script,
                                             std::uint64_t seed);

/// Seeded, reproducible fixation source driven by a script over a layout.
class SyntheticSource final : public EyeDataProvider {
 public:
  SyntheticSource(const DocumentLayout& layout, SyntheticScript script, std::uint64_t seed,
                  double speed = kAsFastAsPossible, TimestampMs eyesLostThresholdMs = kDefaultEyesLostThresholdMs);
  ~SyntheticSource() override;

  void start() override;
  void stop() override;
  void join() override;

 private:
  std::vector<FixationEvent> fixations_;
  double speed_;
  TimestampMs thresholdMs_;
  std::jthread worker_;
};

/// Provider callbacks as values, for handing across lanes.
struct EyeStateMessage {
  bool eyesLost = false;
  TimestampMs at = 0;
};
struct ConnectionMessage {
  bool available = false;
};
struct ErrorMessage {
  std::string message;
};
struct EndOfStreamMessage {};
using ProviderMessage =
    std::variant<FixationEvent, EyeStateMessage, ConnectionMessage, ErrorMessage, EndOfStreamMessage>;

struct DropFixationsOnly {
  bool operator()(const ProviderMessage& m) const { return std::holds_alternative<FixationEvent>(m); }
};
using ProviderQueue = BoundedQueue<ProviderMessage, DropFixationsOnly>;

/// Delegate that forwards every callback into a bounded queue; the consumer
/// lane pops from it. A full queue drops its oldest fixation.
class QueueingDelegate final : public FixationDelegate {
 public:
  explicit QueueingDelegate(std::size_t capacity = 4096) : queue_(capacity) {}

  void sendFixations(std::span<const FixationEvent> fixations) override;
  void eyeStateChange(bool eyesLost, TimestampMs at) override;
  void eyeConnectionChange(bool available) override;
  void streamError(const std::string& message) override;
  void endOfStream() override;

  ProviderQueue& queue() { return queue_; }

 private:
  ProviderQueue queue_;
};

/// Runs `provider` to completion and returns everything it reported, in order.
std::vector<ProviderMessage> collectAll(EyeDataProvider& provider, std::size_t capacity = 1 << 20);

}  // namespace readtrace
