#pragma once

#include <span>
#include <string>
#include <vector>

#include "readtrace/geometry.hpp"
#include "readtrace/model.hpp"

namespace readtrace::analytics {

/// A first-session fixation in page space (bottom-left origin).
struct GazeFixation {
  int pageIndex = 0;
  double x = 0;
  double y = 0;
  double durationMs = 0;
  double eyeDistanceCm = kDefaultEyeDistanceCm;
  bool operator==(const GazeFixation&) const = default;
};

enum class Group { A, B };
char groupLetter(Group g);
Group groupFromLetter(char c);  // throws AnalyticsError

/// Where the answer to one question sits in its paper.
struct AnswerLocation {
  int paper = 1;          // 1-4
  Group group = Group::A;
  int targetTopic = 1;    // 1-3
  int questionIndex = 1;  // 1-4
  int pageIndex = 0;
  Rect rect;
  std::string answerText;

  void validate() const;
};

/// Fixations on the answer's page within half the 3 degree span of its centre.
std::vector<GazeFixation> fixationsNearAnswer(std::span<const GazeFixation> fixations, const AnswerLocation& answer,
                                              const ViewGeometry& geometry = {});

/// Which saccades count as forward travel.
enum class ForwardRule {
  readingOrder,  // rightward or down the page: dx > 0 or dy < 0
  literal,       // leftward or down the page: dx < 0 or dy < 0
};

struct FeatureVector {
  double meanFixDurMs = 0;
  double medianFixDurMs = 0;
  double sumFixDurMs = 0;
  double meanEyeDistanceCm = 0;
  double totalTravelPts = 0;
  double forwardTravelPts = 0;
  double backwardTravelPts = 0;
  bool empty = true;  // no fixations: every value is zero

  static constexpr std::size_t kSize = 7;
  std::vector<double> values() const;
  static const std::vector<std::string>& names();
};

/// Fixations are taken in the order given (chronological).
FeatureVector extractFeatures(std::span<const GazeFixation> fixations,
                              ForwardRule rule = ForwardRule::readingOrder);

}  // namespace readtrace::analytics
