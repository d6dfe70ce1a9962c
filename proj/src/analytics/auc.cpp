#include "readtrace/analytics/auc.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace readtrace::analytics {

// Rank-sum form: sort once, give tied runs their average rank.
double computeAUC(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw AnalyticsError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rankSumPos = 0;
  std::size_t nPos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avgRank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        rankSumPos += avgRank;
        ++nPos;
      }
    }
    i = j;
  }
  const std::size_t nNeg = n - nPos;
  if (nPos == 0 || nNeg == 0) throw AnalyticsError("AUC needs both classes");
  const double np = static_cast<double>(nPos);
  return (rankSumPos - np * (np + 1) / 2.0) / (np * static_cast<double>(nNeg));
}

}  // namespace readtrace::analytics
