#include "readtrace/tracker.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace readtrace {

// ---------------------------------------------------------------------------
// Wire format

void FixationEvent::validate() const {
  if (!(durationMs > 0) || !std::isfinite(durationMs)) throw InvariantError("fixation durationMs must be positive");
  if (eyeDistanceCm && !(*eyeDistanceCm > 0)) throw InvariantError("fixation distanceCm must be positive");
  if (!std::isfinite(screenPoint.x) || !std::isfinite(screenPoint.y)) throw InvariantError("fixation position must be finite");
}

Json toJson(const FixationEvent& f) {
  Json j{{"x", f.screenPoint.x}, {"y", f.screenPoint.y}, {"durationMs", f.durationMs}, {"pupil", f.pupilSize},
         {"tMs", f.timestampMs}};
  j["distanceCm"] = f.eyeDistanceCm ? Json(*f.eyeDistanceCm) : Json(nullptr);
  return j;
}

FixationEvent fixationFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("fixation", "expected an object");
  auto num = [&](const char* key, bool required) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw ParseError(key, "missing field");
      return std::nullopt;
    }
    if (!it->is_number()) throw ParseError(key, "expected a number");
    return it->get<double>();
  };
  FixationEvent f;
  f.screenPoint = {*num("x", true), *num("y", true)};
  f.durationMs = *num("durationMs", true);
  f.pupilSize = num("pupil", false).value_or(0.0);
  f.eyeDistanceCm = num("distanceCm", false);
  auto t = j.find("tMs");
  if (t == j.end() || !(t->is_number_integer() || t->is_number_unsigned())) throw ParseError("tMs", "expected an integer");
  f.timestampMs = t->get<TimestampMs>();
  try {
    f.validate();
  } catch (const InvariantError& e) {
    throw ParseError("fixation", e.what());
  }
  return f;
}

FixationEvent parseFixationLine(std::string_view line) { return fixationFromJson(parseJson(line, "fixation")); }

// ---------------------------------------------------------------------------
// Provider base

EyeDataProvider::EyeDataProvider(std::string sourceName) { state_.sourceName = std::move(sourceName); }

void EyeDataProvider::setDelegate(FixationDelegate* delegate) {
  std::lock_guard lock(mutex_);
  delegate_ = delegate;
}

ProviderState EyeDataProvider::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

void EyeDataProvider::markStarted() { active_ = true; }

void EyeDataProvider::markStopped() {
  active_ = false;
  std::lock_guard lock(mutex_);
  state_.available = false;
  state_.eyesLost = false;
}

void EyeDataProvider::sendFixations(std::span<const FixationEvent> fixations) {
  std::lock_guard lock(mutex_);
  if (!active_ || !delegate_ || fixations.empty()) return;
  delegate_->sendFixations(fixations);
}

void EyeDataProvider::eyeStateChange(bool eyesLost, TimestampMs at) {
  std::lock_guard lock(mutex_);
  if (!active_ || state_.eyesLost == eyesLost) return;
  if (eyesLost && !state_.available) return;
  state_.eyesLost = eyesLost;
  if (delegate_) delegate_->eyeStateChange(eyesLost, at);
}

void EyeDataProvider::eyeConnectionChange(bool available) {
  std::lock_guard lock(mutex_);
  if (!active_ || state_.available == available) return;
  state_.available = available;
  if (!available) state_.eyesLost = false;
  if (delegate_) delegate_->eyeConnectionChange(available);
}

void EyeDataProvider::streamError(const std::string& message) {
  std::lock_guard lock(mutex_);
  if (active_ && delegate_) delegate_->streamError(message);
}

void EyeDataProvider::endOfStream() {
  std::lock_guard lock(mutex_);
  if (active_ && delegate_) delegate_->endOfStream();
}

std::vector<EyesLostDetector::Transition> EyesLostDetector::observe(const FixationEvent& next) {
  std::vector<Transition> out;
  if (lastEnd_ && next.timestampMs - *lastEnd_ > thresholdMs_) {
    out.push_back({true, *lastEnd_ + thresholdMs_});
    out.push_back({false, next.timestampMs});
  }
  const auto end = next.timestampMs + static_cast<TimestampMs>(std::llround(next.durationMs));
  lastEnd_ = lastEnd_ ? std::max(*lastEnd_, end) : end;
  return out;
}

namespace {

// Sleeps for `ms` of recorded time scaled by 1/speed; false if a stop was requested.
bool pace(double ms, double speed, std::stop_token& token) {
  if (!std::isfinite(speed) || ms <= 0) return !token.stop_requested();
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double, std::milli>(ms / speed));
  while (std::chrono::steady_clock::now() < deadline) {
    if (token.stop_requested()) return false;
    std::chrono::steady_clock::duration left = deadline - std::chrono::steady_clock::now();
    std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(std::chrono::milliseconds(10), left));
  }
  return !token.stop_requested();
}

}  // namespace

// ---------------------------------------------------------------------------
// Replay

ReplaySource::ReplaySource(std::vector<std::string> lines, double speed, TimestampMs eyesLostThresholdMs)
    : EyeDataProvider("replay"), lines_(std::move(lines)), speed_(speed), thresholdMs_(eyesLostThresholdMs) {
  if (!(speed_ > 0)) throw std::invalid_argument("replay speed must be positive");
}

std::unique_ptr<ReplaySource> ReplaySource::fromFile(const std::filesystem::path& path, double speed,
                                                     TimestampMs eyesLostThresholdMs) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixation file " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return std::make_unique<ReplaySource>(std::move(lines), speed, eyesLostThresholdMs);
}

ReplaySource::~ReplaySource() { stop(); }

void ReplaySource::start() {
  if (worker_.joinable()) return;
  markStarted();
  worker_ = std::jthread([this](std::stop_token token) { run(token); });
}

void ReplaySource::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
  markStopped();
}

void ReplaySource::join() {
  if (worker_.joinable()) worker_.join();
}

void ReplaySource::run(std::stop_token token) {
  eyeConnectionChange(true);
  EyesLostDetector detector(thresholdMs_);
  std::optional<TimestampMs> previous;
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    const auto& line = lines_[i];
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    FixationEvent f;
    try {
      f = parseFixationLine(line);
    } catch (const ParseError& e) {
      streamError("line " + std::to_string(i + 1) + ": " + e.what());
      eyeConnectionChange(false);
      endOfStream();
      return;
    }
    if (previous && !pace(static_cast<double>(f.timestampMs - *previous), speed_, token)) return;
    previous = f.timestampMs;
    for (const auto& t : detector.observe(f)) eyeStateChange(t.eyesLost, t.at);
    sendFixations(std::span(&f, 1));
  }
  eyeConnectionChange(false);
  endOfStream();
}

// ---------------------------------------------------------------------------
// Socket

SocketSource::SocketSource(std::string host, std::uint16_t port, SocketSourceOptions options)
    : EyeDataProvider("socket"), host_(std::move(host)), port_(port), options_(options) {}

SocketSource::~SocketSource() { stop(); }

void SocketSource::start() {
  if (worker_.joinable()) return;
  markStarted();
  worker_ = std::jthread([this](std::stop_token token) { run(token); });
}

void SocketSource::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
  markStopped();
}

void SocketSource::join() {
  if (worker_.joinable()) worker_.join();
}

namespace {

int connectTo(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  return fd;
}

}  // namespace

bool SocketSource::consume(int fd, std::stop_token& token, EyesLostDetector& detector) {
  std::string pending;
  char buf[4096];
  while (!token.stop_requested()) {
    pollfd pfd{fd, POLLIN, 0};
    int rc = ::poll(&pfd, 1, 50);
    if (rc < 0) return false;
    if (rc == 0) continue;
    auto n = ::recv(fd, buf, sizeof buf, 0);
    if (n <= 0) return false;
    pending.append(buf, static_cast<std::size_t>(n));
    std::size_t pos;
    while ((pos = pending.find('\n')) != std::string::npos) {
      std::string line = pending.substr(0, pos);
      pending.erase(0, pos + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ++received_;
      try {
        auto f = parseFixationLine(line);
        for (const auto& t : detector.observe(f)) eyeStateChange(t.eyesLost, t.at);
        sendFixations(std::span(&f, 1));
        ++delivered_;
      } catch (const ParseError&) {
        ++dropped_;
      }
    }
  }
  return true;
}

void SocketSource::run(std::stop_token token) {
  int attempts = 0;
  int backoff = options_.initialBackoffMs;
  EyesLostDetector detector(options_.eyesLostThresholdMs);
  while (!token.stop_requested()) {
    int fd = connectTo(host_, port_);
    if (fd >= 0) {
      attempts = 0;
      backoff = options_.initialBackoffMs;
      eyeConnectionChange(true);
      consume(fd, token, detector);
      ::close(fd);
      eyeConnectionChange(false);
      if (token.stop_requested()) break;
    }
    if (++attempts > options_.maxReconnectAttempts) break;
    if (!pace(backoff, 1.0, token)) break;
    backoff = std::min(backoff * 2, options_.maxBackoffMs);
  }
  endOfStream();
}

// ---------------------------------------------------------------------------
// Synthetic

namespace {

ViewportState viewportFromJson(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ScriptError(path + ": expected an object");
  auto num = [&](const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) throw ScriptError(path + "." + key + ": expected a number");
    return it->get<double>();
  };
  ViewportState v;
  v.scrollOffset = {num("scrollX", 0), num("scrollY", 0)};
  v.windowSize = {num("width", 0), num("height", 0)};
  v.zoom = num("zoom", 1);
  if (!(v.windowSize.width > 0 && v.windowSize.height > 0 && v.zoom > 0)) {
    throw ScriptError(path + ": width, height and zoom must be positive");
  }
  return v;
}

}  // namespace

SyntheticScript scriptFromJson(const Json& j) {
  if (!j.is_object()) throw ScriptError("script: expected an object");
  SyntheticScript s;
  auto num = [&](const Json& obj, const char* key, double fallback, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) throw ScriptError(path + "." + key + ": expected a number");
    return it->get<double>();
  };
  if (!j.contains("viewport")) throw ScriptError("script.viewport: missing");
  s.viewport = viewportFromJson(j["viewport"], "script.viewport");
  s.startMs = static_cast<TimestampMs>(num(j, "startMs", 0, "script"));
  if (auto d = j.find("fixationDurationMs"); d != j.end()) {
    s.meanFixationMs = num(*d, "mean", s.meanFixationMs, "script.fixationDurationMs");
    s.sdFixationMs = num(*d, "sd", s.sdFixationMs, "script.fixationDurationMs");
    s.minFixationMs = num(*d, "min", s.minFixationMs, "script.fixationDurationMs");
  }
  s.saccadeMs = num(j, "saccadeMs", s.saccadeMs, "script");
  s.saccadeNoisePts = num(j, "saccadeNoisePts", s.saccadeNoisePts, "script");
  if (auto d = j.find("distanceCm"); d != j.end()) {
    if (d->is_null()) {
      s.distanceCm.reset();
    } else {
      s.distanceCm = num(j, "distanceCm", kDefaultEyeDistanceCm, "script");
    }
  }
  s.pupilSize = num(j, "pupil", 0, "script");
  if (!(s.meanFixationMs > 0 && s.sdFixationMs >= 0 && s.minFixationMs > 0 && s.saccadeMs >= 0 &&
        s.saccadeNoisePts >= 0)) {
    throw ScriptError("script: timing and noise parameters must be positive");
  }
  auto steps = j.find("steps");
  if (steps == j.end() || !steps->is_array()) throw ScriptError("script.steps: expected an array");
  for (std::size_t i = 0; i < steps->size(); ++i) {
    const auto& sj = (*steps)[i];
    const std::string path = "script.steps[" + std::to_string(i) + "]";
    if (!sj.is_object()) throw ScriptError(path + ": expected an object");
    if (sj.contains("pauseMs")) {
      s.steps.emplace_back(SyntheticScript::Pause{static_cast<TimestampMs>(num(sj, "pauseMs", 0, path))});
    } else if (sj.contains("viewport")) {
      s.steps.emplace_back(SyntheticScript::SetViewport{viewportFromJson(sj["viewport"], path + ".viewport")});
    } else {
      SyntheticScript::Dwell d;
      d.page = static_cast<int>(num(sj, "page", 0, path));
      d.fixations = static_cast<int>(num(sj, "fixations", 1, path));
      if (d.fixations < 1) throw ScriptError(path + ".fixations: must be at least 1");
      if (auto b = sj.find("block"); b != sj.end()) {
        if (!b->is_number_unsigned() && !(b->is_number_integer() && b->get<long long>() >= 0)) {
          throw ScriptError(path + ".block: expected a non-negative integer");
        }
        d.block = b->get<std::size_t>();
      } else if (auto r = sj.find("rect"); r != sj.end()) {
        try {
          d.rect = Rect({num(*r, "x", 0, path + ".rect"), num(*r, "y", 0, path + ".rect")},
                        {num(*r, "width", 0, path + ".rect"), num(*r, "height", 0, path + ".rect")},
                        std::max(d.page, 0));
        } catch (const InvariantError& e) {
          throw ScriptError(path + ".rect: " + e.what());
        }
      } else {
        throw ScriptError(path + ": dwell needs a block or a rect");
      }
      s.steps.emplace_back(d);
    }
  }
  return s;
}

SyntheticScript loadScript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScriptError("cannot open script " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return scriptFromJson(parseJson(buf.str(), "script"));
  } catch (const ParseError& e) {
    throw ScriptError(e.what());
  }
}

Rect dwellTarget(const SyntheticScript::Dwell& dwell, const DocumentLayout& layout) {
  if (dwell.page < 0 || dwell.page >= layout.pageCount()) {
    throw ScriptError("dwell references missing page " + std::to_string(dwell.page));
  }
  const auto& page = layout.page(dwell.page);
  if (dwell.block) {
    if (*dwell.block >= page.textBlocks.size()) {
      throw ScriptError("dwell references missing block " + std::to_string(*dwell.block) + " on page " +
                        std::to_string(dwell.page));
    }
    return page.textBlocks[*dwell.block].rect;
  }
  if (!dwell.rect) throw ScriptError("dwell has no target");
  const auto& r = *dwell.rect;
  if (r.minX() < 0 || r.minY() < 0 || r.maxX() > page.cropBox.width || r.maxY() > page.cropBox.height ||
      r.area() <= 0) {
    throw ScriptError("dwell rect lies outside page " + std::to_string(dwell.page));
  }
  return r.withPage(dwell.page);
}

std::vector<FixationEvent> generateFixations(const DocumentLayout& layout, const SyntheticScript& script,
                                             std::uint64_t seed) {
  // Validate everything before producing anything.
  {
    ViewportState view = script.viewport;
    for (const auto& step : script.steps) {
      if (const auto* v = std::get_if<SyntheticScript::SetViewport>(&step)) view = v->viewport;
      if (const auto* d = std::get_if<SyntheticScript::Dwell>(&step)) {
        Rect target = dwellTarget(*d, layout);
        bool visible = false;
        for (const auto& vr : computeViewport(view, layout))
          visible = visible || (vr.pageIndex() == target.pageIndex() && intersection(vr, target));
        if (!visible) throw ScriptError("dwell target on page " + std::to_string(d->page) + " is not visible");
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<FixationEvent> out;
  ViewportState view = script.viewport;
  double t = static_cast<double>(script.startMs);
  for (const auto& step : script.steps) {
    if (const auto* v = std::get_if<SyntheticScript::SetViewport>(&step)) {
      view = v->viewport;
      continue;
    }
    if (const auto* p = std::get_if<SyntheticScript::Pause>(&step)) {
      t += static_cast<double>(p->durationMs);
      continue;
    }
    const auto& dwell = std::get<SyntheticScript::Dwell>(step);
    Rect target = dwellTarget(dwell, layout);
    Rect visible = target;
    for (const auto& vr : computeViewport(view, layout)) {
      if (vr.pageIndex() != target.pageIndex()) continue;
      if (auto i = intersection(vr, target)) visible = *i;
    }
    // Reading order inside the target: left to right, then down a line.
    constexpr double kLineHeight = 14.0;
    const int perLine = std::max(1, static_cast<int>(visible.width() / 60.0));
    const double inset = std::min({0.5, visible.width() / 4, visible.height() / 4});
    for (int k = 0; k < dwell.fixations; ++k) {
      const int line = k / perLine;
      const int col = k % perLine;
      double x = visible.minX() + (col + 0.5) * visible.width() / perLine;
      double y = visible.maxY() - std::fmod(kLineHeight * (line + 0.5), visible.height());
      x += script.saccadeNoisePts * unit(rng);
      y += script.saccadeNoisePts * unit(rng);
      x = std::clamp(x, visible.minX() + inset, visible.maxX() - inset);
      y = std::clamp(y, visible.minY() + inset, visible.maxY() - inset);
      const double duration = std::max(script.minFixationMs, script.meanFixationMs + script.sdFixationMs * unit(rng));
      FixationEvent f;
      f.screenPoint = pageToScreen(PagePoint{dwell.page, {x, y}}, view, layout);
      f.durationMs = std::round(duration);
      f.pupilSize = script.pupilSize;
      f.eyeDistanceCm = script.distanceCm;
      f.timestampMs = static_cast<TimestampMs>(std::llround(t));
      out.push_back(f);
      t += f.durationMs + script.saccadeMs;
    }
  }
  return out;
}

SyntheticSource::SyntheticSource(const DocumentLayout& layout, SyntheticScript script, std::uint64_t seed,
                                 double speed, TimestampMs eyesLostThresholdMs)
    : EyeDataProvider("synthetic"),
      fixations_(generateFixations(layout, script, seed)),
      speed_(speed),
      thresholdMs_(eyesLostThresholdMs) {}

SyntheticSource::~SyntheticSource() { stop(); }

void SyntheticSource::start() {
  if (worker_.joinable()) return;
  markStarted();
  worker_ = std::jthread([this](std::stop_token token) {
    eyeConnectionChange(true);
    EyesLostDetector detector(thresholdMs_);
    std::optional<TimestampMs> previous;
    for (const auto& f : fixations_) {
      if (previous && !pace(static_cast<double>(f.timestampMs - *previous), speed_, token)) return;
      previous = f.timestampMs;
      for (const auto& t : detector.observe(f)) eyeStateChange(t.eyesLost, t.at);
      sendFixations(std::span(&f, 1));
    }
    eyeConnectionChange(false);
    endOfStream();
  });
}

void SyntheticSource::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
  markStopped();
}

void SyntheticSource::join() {
  if (worker_.joinable()) worker_.join();
}

// ---------------------------------------------------------------------------
// Queueing

void QueueingDelegate::sendFixations(std::span<const FixationEvent> fixations) {
  for (const auto& f : fixations) queue_.push(f);
}
void QueueingDelegate::eyeStateChange(bool eyesLost, TimestampMs at) { queue_.push(EyeStateMessage{eyesLost, at}); }
void QueueingDelegate::eyeConnectionChange(bool available) { queue_.push(ConnectionMessage{available}); }
void QueueingDelegate::streamError(const std::string& message) { queue_.push(ErrorMessage{message}); }
void QueueingDelegate::endOfStream() { queue_.push(EndOfStreamMessage{}); }

std::vector<ProviderMessage> collectAll(EyeDataProvider& provider, std::size_t capacity) {
  QueueingDelegate delegate(capacity);
  provider.setDelegate(&delegate);
  provider.start();
  std::vector<ProviderMessage> out;
  while (auto m = delegate.queue().pop()) {
    const bool done = std::holds_alternative<EndOfStreamMessage>(*m);
    out.push_back(std::move(*m));
    if (done) break;
  }
  provider.join();
  provider.stop();
  provider.setDelegate(nullptr);
  return out;
}

}  // namespace readtrace
