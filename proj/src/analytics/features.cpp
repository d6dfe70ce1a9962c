#include "readtrace/analytics/features.hpp"

#include <algorithm>
#include <cmath>

#include "readtrace/analytics/auc.hpp"

namespace readtrace::analytics {

namespace {

// Values are snapped to a 2^-20 grid before summing so every partial sum is
// exact: totals then do not depend on summation order.
double snap(double v) { return std::ldexp(std::round(std::ldexp(v, 20)), -20); }

}  // namespace

char groupLetter(Group g) { return g == Group::A ? 'A' : 'B'; }

Group groupFromLetter(char c) {
  if (c == 'A' || c == 'a') return Group::A;
  if (c == 'B' || c == 'b') return Group::B;
  throw AnalyticsError(std::string("group must be A or B, got '") + c + "'");
}

void AnswerLocation::validate() const {
  if (paper < 1 || paper > 4) throw AnalyticsError("paper must be 1-4");
  if (targetTopic < 1 || targetTopic > 3) throw AnalyticsError("targetTopic must be 1-3");
  if (questionIndex < 1 || questionIndex > 4) throw AnalyticsError("questionIndex must be 1-4");
  if (pageIndex < 0 || rect.pageIndex() != pageIndex) throw AnalyticsError("answer rect is not on the answer page");
}

std::vector<GazeFixation> fixationsNearAnswer(std::span<const GazeFixation> fixations, const AnswerLocation& answer,
                                              const ViewGeometry& geometry) {
  const double radius = visualSpanPoints(kParagraphAngleDegrees, geometry) / 2.0;
  const auto c = answer.rect.center();
  std::vector<GazeFixation> out;
  for (const auto& f : fixations) {
    if (f.pageIndex == answer.pageIndex && std::hypot(f.x - c.x, f.y - c.y) <= radius) out.push_back(f);
  }
  return out;
}

std::vector<double> FeatureVector::values() const {
  return {meanFixDurMs,   medianFixDurMs,   sumFixDurMs,      meanEyeDistanceCm,
          totalTravelPts, forwardTravelPts, backwardTravelPts};
}

const std::vector<std::string>& FeatureVector::names() {
  static const std::vector<std::string> kNames = {"meanFixDurMs",   "medianFixDurMs",   "sumFixDurMs",
                                                  "meanEyeDistanceCm", "totalTravelPts", "forwardTravelPts",
                                                  "backwardTravelPts"};
  return kNames;
}

FeatureVector extractFeatures(std::span<const GazeFixation> fixations, ForwardRule rule) {
  FeatureVector v;
  if (fixations.empty()) return v;
  v.empty = false;
  std::vector<double> durations;
  double distance = 0;
  for (const auto& f : fixations) {
    durations.push_back(snap(f.durationMs));
    v.sumFixDurMs += durations.back();
    distance += snap(f.eyeDistanceCm);
  }
  const auto n = static_cast<double>(fixations.size());
  v.meanFixDurMs = v.sumFixDurMs / n;
  v.meanEyeDistanceCm = distance / n;
  std::sort(durations.begin(), durations.end());
  const auto mid = durations.size() / 2;
  v.medianFixDurMs = durations.size() % 2 == 1 ? durations[mid] : (durations[mid - 1] + durations[mid]) / 2.0;

  for (std::size_t i = 1; i < fixations.size(); ++i) {
    const double dx = fixations[i].x - fixations[i - 1].x;
    const double dy = fixations[i].y - fixations[i - 1].y;
    const double len = snap(std::hypot(dx, dy));
    const bool forward = rule == ForwardRule::readingOrder ? (dx > 0 || dy < 0) : (dx < 0 || dy < 0);
    (forward ? v.forwardTravelPts : v.backwardTravelPts) += len;
  }
  v.totalTravelPts = v.forwardTravelPts + v.backwardTravelPts;
  return v;
}

}  // namespace readtrace::analytics
