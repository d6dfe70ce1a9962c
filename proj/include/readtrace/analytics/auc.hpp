#pragma once

#include <span>
#include <stdexcept>

namespace readtrace::analytics {

class AnalyticsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Area under the ROC curve as the Mann-Whitney statistic:
/// P(score of a positive > score of a negative) + P(tie) / 2.
/// Throws AnalyticsError unless both classes are present.
double computeAUC(std::span<const double> scores, std::span<const int> labels);

}  // namespace readtrace::analytics
